#include "nesla/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nesla {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard no_grad;
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check_leaves(const std::function<Tensor()>& loss,
                                  std::span<Tensor> leaves, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-4]");
  }
  std::vector<bool> previous;
  for (auto& leaf : leaves) {
    previous.push_back(leaf.requires_grad());
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  Tensor y = loss();
  if (!std::isfinite(y.item())) throw NumericError("grad_check: loss is not finite");
  y.backward();

  GradCheckReport report;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto& leaf = leaves[l];
    std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    if (analytic.empty()) analytic.assign(leaf.numel(), 0.0);
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(loss);
      values[i] = saved - eps;
      const double down = evaluate(loss);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_leaf = l;
        report.worst_index = i;
        report.analytic = analytic[i];
        report.numeric = numeric;
      }
    }
  }

  for (std::size_t l = 0; l < leaves.size(); ++l) {
    leaves[l].zero_grad();
    leaves[l].set_requires_grad(previous[l]);
  }
  return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps) {
  std::vector<Tensor> leaves{x.detach()};
  auto report = grad_check_leaves([&] { return f(leaves[0]); }, leaves, eps);
  return report.max_rel_error;
}

}  // namespace nesla
