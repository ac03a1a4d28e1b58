#include "nesla/training.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nesla {

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {
  if (n == 0) throw std::invalid_argument("sampler: no training examples");
  order_.resize(n);
  reshuffle();
}

void EpochSampler::reshuffle() {
  for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
  for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  cursor_ = 0;
  ++epoch_;
}

std::vector<std::size_t> EpochSampler::next_batch(std::size_t batch_size) {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    if (cursor_ == n_) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

std::size_t class_index(TrialLabel label) { return label == TrialLabel::bonafide ? 0 : 1; }

double mean_cross_entropy(const Detector& detector, std::span<const DetectorExample> data) {
  if (data.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : data)
    total += cross_entropy(detector.logits(ex.features), class_index(ex.label)).item();
  return total / static_cast<double>(data.size());
}

std::vector<ScoreRecord> score_examples(const Detector& detector,
                                        std::span<const DetectorExample> data) {
  std::vector<ScoreRecord> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back({ex.utt_id, detector.score(ex.features), ex.label});
  return out;
}

namespace {

bool has_both_labels(std::span<const DetectorExample> data) {
  bool bona = false, spoof = false;
  for (const auto& ex : data) (ex.label == TrialLabel::bonafide ? bona : spoof) = true;
  return bona && spoof;
}

template <typename Example>
std::string describe_batch(std::span<const Example> data, const std::vector<std::size_t>& batch) {
  std::ostringstream os;
  for (std::size_t i = 0; i < batch.size(); ++i) os << (i ? "," : "") << data[batch[i]].utt_id;
  return os.str();
}

// Runs one optimizer step on the batch loss; wraps numeric failures.
template <typename Example, typename LossFn>
double optimizer_step(AdamW& optimizer, std::span<const Example> data,
                      const std::vector<std::size_t>& batch, std::size_t step, LossFn loss_of) {
  try {
    optimizer.zero_grad();
    Tensor total;
    for (auto i : batch) {
      Tensor l = loss_of(data[i]);
      total = total.defined() ? add(total, l) : l;
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("loss is " + std::to_string(value));
    loss.backward();
    optimizer.step();
    return value;
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "training diverged at step " << step + 1 << " (lr "
       << optimizer.options().learning_rate << ", batch " << describe_batch(data, batch)
       << "): " << e.what();
    throw NumericError(os.str());
  }
}

}  // namespace

DetectorTraining train_detector(Detector& detector, AdamW& optimizer,
                                std::span<const DetectorExample> train,
                                std::span<const DetectorExample> dev,
                                const TrainOptions& options, std::ostream* progress) {
  if (train.empty()) throw std::invalid_argument("train_detector: empty training split");
  if (options.batch_size == 0) throw std::invalid_argument("train_detector: batch_size must be >= 1");
  const bool eval_dev = has_both_labels(dev);
  const std::size_t interval = options.eval_interval ? options.eval_interval : options.max_steps;
  EpochSampler sampler(train.size(), options.seed);
  DetectorTraining result;
  double batch_loss = 0.0;

  auto evaluate = [&](std::size_t step) {
    TrainLogEntry e{step, batch_loss, mean_cross_entropy(detector, train), std::nullopt};
    if (eval_dev) {
      const auto scores = score_examples(detector, dev);
      e.dev_eer = compute_eer(scores).eer;
      if (!result.best_dev || *e.dev_eer < result.best_dev_eer) {
        ParameterMap snap;
        for (const auto& [name, t] : detector.all_parameters()) snap.add(name, t.detach());
        result.best_dev = std::move(snap);
        result.best_dev_step = step;
        result.best_dev_eer = *e.dev_eer;
      }
    }
    if (progress) {
      *progress << "step " << step << " batch_loss " << e.batch_loss << " train_ce " << e.train_ce;
      if (e.dev_eer) *progress << " dev_eer " << *e.dev_eer;
      *progress << '\n';
    }
    result.log.push_back(e);
  };

  for (std::size_t step = 0; step < options.max_steps; ++step) {
    const auto batch = sampler.next_batch(options.batch_size);
    batch_loss = optimizer_step(optimizer, train, batch, step, [&](const DetectorExample& ex) {
      return cross_entropy(detector.logits(ex.features), class_index(ex.label));
    });
    if ((step + 1) % interval == 0 || step + 1 == options.max_steps) evaluate(step + 1);
  }
  if (result.log.empty()) evaluate(0);
  result.final_train_ce = result.log.back().train_ce;
  return result;
}

std::vector<double> tracer_probabilities(const TracerParams& params,
                                         std::span<const Tensor> layer_means) {
  NoGradGuard no_grad;
  const Tensor p = softmax(trace_forward(layer_means, params));
  return {p.values().begin(), p.values().end()};
}

double tracer_cross_entropy(const TracerParams& params, std::span<const TracerExample> data) {
  if (data.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : data) total += cross_entropy(trace_forward(ex.layer_means, params), ex.label).item();
  return total / static_cast<double>(data.size());
}

TracerTraining train_tracer(TracerParams& params, AdamW& optimizer,
                            std::span<const TracerExample> train, const TracerOptions& options,
                            std::size_t log_interval, std::ostream* progress) {
  if (train.empty()) throw std::invalid_argument("train_tracer: no seen-API spoof examples");
  if (options.batch_size == 0) throw std::invalid_argument("train_tracer: batch_size must be >= 1");
  for (const auto& ex : train) {
    if (ex.label >= kSeenApis) throw std::invalid_argument("train_tracer: label outside the seen classes");
  }
  const std::size_t interval = log_interval ? log_interval : options.max_steps;
  EpochSampler sampler(train.size(), options.seed);
  TracerTraining result;
  auto evaluate = [&](std::size_t step) {
    const double ce = tracer_cross_entropy(params, train);
    if (progress) *progress << "tracer step " << step << " train_ce " << ce << '\n';
    result.log.emplace_back(step, ce);
  };
  for (std::size_t step = 0; step < options.max_steps; ++step) {
    const auto batch = sampler.next_batch(options.batch_size);
    optimizer_step(optimizer, train, batch, step, [&](const TracerExample& ex) {
      return cross_entropy(trace_forward(ex.layer_means, params), ex.label);
    });
    if ((step + 1) % interval == 0 || step + 1 == options.max_steps) evaluate(step + 1);
  }
  if (result.log.empty()) evaluate(0);
  result.final_train_ce = result.log.back().second;
  return result;
}

}  // namespace nesla
