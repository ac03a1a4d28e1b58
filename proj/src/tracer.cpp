#include "nesla/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nesla {

std::size_t TracerConfig::se_hidden() const {
  return std::max<std::size_t>(1, channels / std::max<std::size_t>(1, se_reduction));
}

TracerParams init_tracer(const TracerConfig& cfg, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
  TracerParams p;
  p.score_weight = random_tensor({1, cfg.channels}, rng, s);
  p.se = init_squeeze_excite(cfg.channels, cfg.se_hidden(), rng, s);
  p.out_weight = random_tensor({kSeenApis, cfg.channels}, rng, s);
  p.out_bias = Tensor::zeros({kSeenApis}, true);
  return p;
}

TracerParams zero_tracer(const TracerConfig& cfg) {
  const auto C = cfg.channels;
  const auto H = cfg.se_hidden();
  return {Tensor::zeros({1, C}, true),
          {Tensor::zeros({H, C}, true), Tensor::zeros({H}, true), Tensor::zeros({C, H}, true),
           Tensor::zeros({C}, true)},
          Tensor::zeros({kSeenApis, C}, true),
          Tensor::zeros({kSeenApis}, true)};
}

void register_parameters(const TracerParams& p, const std::string& prefix, ParameterMap& out) {
  out.add(prefix + ".pool.weight", p.score_weight);
  register_parameters(p.se, prefix + ".se", out);
  out.add(prefix + ".out.weight", p.out_weight);
  out.add(prefix + ".out.bias", p.out_bias);
}

std::vector<Tensor> layer_means(const FeatureStack& stack) {
  std::vector<Tensor> out;
  out.reserve(stack.layers.size());
  for (const auto& layer : stack.layers) out.push_back(global_avg_pool_time(layer));
  return out;
}

Tensor attention_pool(std::span<const Tensor> layer_embeddings, const TracerParams& params) {
  if (layer_embeddings.empty()) throw ShapeError("attention_pool: no layers");
  std::vector<Tensor> scores;
  scores.reserve(layer_embeddings.size());
  for (const auto& e : layer_embeddings)
    scores.push_back(matmul(params.score_weight, reshape(e, {e.numel(), 1})));
  const Tensor alpha = softmax(concat_channels(scores), 0);
  Tensor pooled;
  for (std::size_t l = 0; l < layer_embeddings.size(); ++l) {
    Tensor term = scale_by(layer_embeddings[l], pick(alpha, l));
    pooled = pooled.defined() ? add(pooled, term) : term;
  }
  return pooled;
}

Tensor attention_pool(const FeatureStack& stack, const TracerParams& params) {
  const auto means = layer_means(stack);
  return attention_pool(means, params);
}

Tensor trace_forward(std::span<const Tensor> layer_embeddings, const TracerParams& params) {
  const Tensor pooled = attention_pool(layer_embeddings, params);
  const auto C = pooled.extent(0);
  const Tensor gated = reshape(squeeze_excite(reshape(pooled, {C, 1}), params.se), {C});
  return linear(params.out_weight, gated, params.out_bias);
}

Tensor trace_forward(const FeatureStack& stack, const TracerParams& params) {
  const auto means = layer_means(stack);
  return trace_forward(means, params);
}

TraceDecision decide_from_probs(std::vector<double> probs, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("open_set_decide: threshold must lie in [0, 1]");
  }
  if (probs.empty()) throw std::invalid_argument("open_set_decide: empty probability vector");
  TraceDecision d;
  const auto best = std::max_element(probs.begin(), probs.end());  // first max wins ties
  d.max_prob = *best;
  d.threshold = threshold;
  d.predicted = d.max_prob >= threshold ? static_cast<std::size_t>(best - probs.begin())
                                        : kUnseenClass;
  d.probs = std::move(probs);
  return d;
}

TraceDecision open_set_decide(std::span<const double> logits, double threshold) {
  if (logits.empty()) throw std::invalid_argument("open_set_decide: no logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    z += probs[i];
  }
  for (auto& p : probs) p /= z;
  return decide_from_probs(std::move(probs), threshold);
}

ConfusionTable tabulate(std::span<const DevSample> samples, double threshold) {
  ConfusionTable table(kSeenApis + 1);
  for (const auto& s : samples) {
    const auto best = std::max_element(s.probs.begin(), s.probs.end());
    const auto pred = *best >= threshold ? static_cast<std::size_t>(best - s.probs.begin())
                                         : kUnseenClass;
    table.add(s.truth, pred);
  }
  return table;
}

Calibration calibrate_threshold(std::span<const DevSample> dev,
                                std::span<const std::size_t> classes) {
  const bool has_seen = std::any_of(dev.begin(), dev.end(),
                                    [](const DevSample& s) { return s.truth != kUnseenClass; });
  const bool has_unseen = std::any_of(dev.begin(), dev.end(),
                                      [](const DevSample& s) { return s.truth == kUnseenClass; });
  if (!has_seen || !has_unseen) {
    throw std::invalid_argument("calibrate_threshold: dev set needs both seen and unseen samples");
  }
  Calibration best{0.0, -1.0};
  for (int i = 0; i <= 200; ++i) {
    const double t = static_cast<double>(i) / 200.0;
    const double f1 = macro_scores(tabulate(dev, t), classes).f1;
    if (f1 > best.overall_f1) best = {t, f1};
  }
  return best;
}

Calibration calibrate_threshold(std::span<const DevSample> dev) {
  std::vector<std::size_t> all(kSeenApis + 1);
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
  return calibrate_threshold(dev, all);
}

}  // namespace nesla
