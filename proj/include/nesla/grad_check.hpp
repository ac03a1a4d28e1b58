#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nesla/tensor.hpp"

namespace nesla {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients of the scalar `loss()` with central
// differences, perturbing each element of each leaf in place by +/- eps.
// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
// Leaves are switched to requires_grad for the duration of the check.
GradCheckReport grad_check_leaves(const std::function<Tensor()>& loss,
                                  std::span<Tensor> leaves, double eps = 1e-5);

// Single-input form: f maps x to a scalar. Returns the max relative error.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

}  // namespace nesla
