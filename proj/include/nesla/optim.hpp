#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "nesla/parameters.hpp"

namespace nesla {

struct AdamOptions {
  double learning_rate = 5e-6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with decoupled weight decay. Moments are keyed by parameter name so
// they can be checkpointed next to the parameters.
class AdamW {
 public:
  AdamW(ParameterMap params, AdamOptions options);

  // One update from the grads currently stored on the parameters.
  void step();
  void zero_grad() const { params_.zero_grads(); }

  std::size_t steps_taken() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const ParameterMap& parameters() const { return params_; }

  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::size_t step, std::map<std::string, Moments> moments);

 private:
  ParameterMap params_;
  AdamOptions options_;
  std::map<std::string, Moments> moments_;
  std::size_t step_ = 0;
};

}  // namespace nesla
