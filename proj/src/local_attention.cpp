#include "nesla/local_attention.hpp"

#include <algorithm>
#include <cmath>

namespace nesla {

namespace {

struct Projected {
  Tensor keys;    // [attn_dim x T]
  Tensor values;  // [width x T]
};

Projected project(const Tensor& block, const LAParams& p) {
  return {matmul(p.w_key, block), matmul(p.w_value, block)};
}

AttentionResult attend(const Tensor& query_block, std::span<const Projected> window,
                       const LAParams& p) {
  if (window.empty()) throw ShapeError("local_attention: empty neighbor list");
  const Tensor q = matmul(p.w_query, query_block);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(p.w_query.extent(0)));

  std::vector<Tensor> scores;
  scores.reserve(window.size());
  for (const auto& nb : window) {
    if (nb.keys.shape() != q.shape()) {
      throw ShapeError("local_attention: neighbor shape " +
                       shape_to_string(nb.keys.shape()) + " vs query " +
                       shape_to_string(q.shape()));
    }
    scores.push_back(scale(sum_rows(mul(q, nb.keys)), inv_sqrt_d));
  }
  const Tensor alpha = softmax(concat_channels(scores), 0);

  Tensor mixed;
  for (std::size_t m = 0; m < window.size(); ++m) {
    Tensor term = scale_frames(window[m].values, slice_rows(alpha, m, m + 1));
    mixed = mixed.defined() ? add(mixed, term) : term;
  }
  return {matmul(p.w_out, mixed), alpha};
}

}  // namespace

LAParams init_la_params(const LAConfig& cfg, std::size_t subset_width,
                        std::size_t channels, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(subset_width));
  LAParams p;
  p.w_query = random_tensor({cfg.attn_dim, subset_width}, rng, s);
  p.w_key = random_tensor({cfg.attn_dim, subset_width}, rng, s);
  p.w_value = random_tensor({subset_width, subset_width}, rng, s);
  p.w_out = random_tensor({subset_width, subset_width}, rng, 0.5 * s);
  p.fc_weight = random_tensor({cfg.n_classes, channels}, rng,
                              1.0 / std::sqrt(static_cast<double>(channels)));
  p.fc_bias = Tensor::zeros({cfg.n_classes}, true);
  return p;
}

void register_parameters(const LAParams& p, const std::string& prefix,
                         ParameterMap& out, bool include_attention) {
  if (include_attention) {
    out.add(prefix + ".attn.query", p.w_query);
    out.add(prefix + ".attn.key", p.w_key);
    out.add(prefix + ".attn.value", p.w_value);
    out.add(prefix + ".attn.out", p.w_out);
  }
  out.add(prefix + ".fc.weight", p.fc_weight);
  out.add(prefix + ".fc.bias", p.fc_bias);
}

std::vector<std::size_t> neighborhood(std::size_t j, std::size_t J, std::size_t K) {
  std::vector<std::size_t> out;
  if (j >= J) return out;
  const std::size_t lo = j >= K ? j - K : 0;
  const std::size_t hi = std::min(J - 1, j + K);
  for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
  return out;
}

AttentionResult local_attention(const Tensor& query_block,
                                std::span<const Tensor> neighbors,
                                const LAParams& params) {
  std::vector<Projected> window;
  window.reserve(neighbors.size());
  for (const auto& n : neighbors) window.push_back(project(n, params));
  return attend(query_block, window, params);
}

std::vector<Tensor> local_attention_sweep(std::span<const Tensor> blocks,
                                          const LAParams& params, std::size_t K) {
  std::vector<Projected> projected;
  projected.reserve(blocks.size());
  for (const auto& b : blocks) projected.push_back(project(b, params));

  std::vector<Tensor> out;
  out.reserve(blocks.size());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    std::vector<Projected> window;
    for (auto k : neighborhood(j, blocks.size(), K)) window.push_back(projected[k]);
    out.push_back(attend(blocks[j], window, params).output);
  }
  return out;
}

Tensor concat_pool_head(std::span<const Tensor> blocks, const LAParams& params) {
  const Tensor pooled = global_avg_pool_time(concat_channels(blocks));
  return linear(params.fc_weight, pooled, params.fc_bias);
}

Tensor la_head_forward(std::span<const Tensor> blocks, const LAParams& params,
                       const LAConfig& cfg) {
  const auto y = local_attention_sweep(blocks, params, cfg.window_radius);
  std::vector<Tensor> aggregated;
  aggregated.reserve(blocks.size());
  for (std::size_t j = 0; j < blocks.size(); ++j)
    aggregated.push_back(add(blocks[j], y[j]));
  return concat_pool_head(aggregated, params);
}

double detection_score(const Tensor& logits) {
  if (logits.numel() < 2) throw ShapeError("detection_score: need two logits");
  return logits.at(0) - logits.at(1);
}

}  // namespace nesla
