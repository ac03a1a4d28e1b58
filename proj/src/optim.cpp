#include "nesla/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace nesla {

AdamW::AdamW(ParameterMap params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) {
    throw std::invalid_argument("adam: learning rate must be positive");
  }
  for (const auto& [name, t] : params_) {
    moments_[name] = {std::vector<double>(t.numel(), 0.0),
                      std::vector<double>(t.numel(), 0.0)};
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (const auto& [name, param] : params_) {
    Tensor p = param;
    auto values = p.mutable_values();
    auto grad = p.grad();
    auto& m = moments_.at(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m.first[i] = options_.beta1 * m.first[i] + (1.0 - options_.beta1) * g;
      m.second[i] = options_.beta2 * m.second[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m.first[i] / bc1;
      const double vhat = m.second[i] / bc2;
      values[i] -= options_.learning_rate *
                   (mhat / (std::sqrt(vhat) + options_.epsilon) +
                    options_.weight_decay * values[i]);
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw NumericError("adam: parameter " + name + " became non-finite");
    }
  }
}

void AdamW::restore(std::size_t step, std::map<std::string, Moments> moments) {
  for (const auto& [name, t] : params_) {
    auto it = moments.find(name);
    if (it == moments.end() || it->second.first.size() != t.numel() ||
        it->second.second.size() != t.numel()) {
      throw std::invalid_argument("adam: missing or mis-sized moments for " + name);
    }
  }
  moments_ = std::move(moments);
  step_ = step;
}

}  // namespace nesla
