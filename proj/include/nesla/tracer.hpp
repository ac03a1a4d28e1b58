#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nesla/frontend.hpp"
#include "nesla/metrics.hpp"
#include "nesla/nes_block.hpp"
#include "nesla/parameters.hpp"

namespace nesla {

inline constexpr std::size_t kSeenApis = 21;
inline constexpr std::size_t kUnseenClass = kSeenApis;  // index of UNSEEN in the 22-way decision

struct TracerConfig {
  std::size_t layers = 12;
  std::size_t channels = 64;
  std::size_t se_reduction = 4;
  std::size_t se_hidden() const;
};

struct TracerParams {
  // [1 x C], scores one layer embedding. No bias: softmax over layers ignores
  // a shared shift, so a bias would never receive a gradient.
  Tensor score_weight;
  SqueezeExciteParams se;
  Tensor out_weight;  // [21 x C]
  Tensor out_bias;    // [21]
};

TracerParams init_tracer(const TracerConfig& cfg, Rng& rng);
TracerParams zero_tracer(const TracerConfig& cfg);
void register_parameters(const TracerParams& p, const std::string& prefix, ParameterMap& out);

// Per-layer time averages, one [C] tensor per layer.
std::vector<Tensor> layer_means(const FeatureStack& stack);

// alpha = softmax_l(w . e_l + b); returns sum_l alpha_l e_l.
Tensor attention_pool(std::span<const Tensor> layer_embeddings, const TracerParams& params);
Tensor attention_pool(const FeatureStack& stack, const TracerParams& params);

// Pooled embedding -> SE gate (as a one-frame signal) -> affine -> 21 logits.
Tensor trace_forward(std::span<const Tensor> layer_embeddings, const TracerParams& params);
Tensor trace_forward(const FeatureStack& stack, const TracerParams& params);

struct TraceDecision {
  std::vector<double> probs;  // softmax over the 21 seen classes
  std::size_t predicted = kUnseenClass;
  double max_prob = 0.0;
  double threshold = 0.0;
};

// Arg-max seen class (lowest index on ties) when max prob >= threshold,
// otherwise UNSEEN. threshold must lie in [0, 1].
TraceDecision open_set_decide(std::span<const double> logits, double threshold);
TraceDecision decide_from_probs(std::vector<double> probs, double threshold);

struct DevSample {
  std::vector<double> probs;
  std::size_t truth = kUnseenClass;  // seen class index or kUnseenClass
};

struct Calibration {
  double threshold = 0.0;
  double overall_f1 = 0.0;
};

// Threshold on the grid {0, 0.005, ..., 1} maximising macro-F1 over
// `classes` (indices into the 22-way table); ties go to the smaller value.
// Requires both seen and unseen samples.
Calibration calibrate_threshold(std::span<const DevSample> dev,
                                std::span<const std::size_t> classes);
// Same, averaging over all 22 classes.
Calibration calibrate_threshold(std::span<const DevSample> dev);

ConfusionTable tabulate(std::span<const DevSample> samples, double threshold);

}  // namespace nesla
