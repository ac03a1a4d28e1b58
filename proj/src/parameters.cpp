#include "nesla/parameters.hpp"

#include <algorithm>
#include <numeric>

namespace nesla {

void ParameterMap::add(const std::string& name, const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("parameter " + name + " is undefined");
  if (!map_.emplace(name, t).second) {
    throw std::invalid_argument("duplicate parameter name " + name);
  }
}

const Tensor& ParameterMap::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

std::size_t ParameterMap::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : map_) n += t.numel();
  return n;
}

std::vector<Tensor> ParameterMap::tensors() const {
  std::vector<Tensor> out;
  out.reserve(map_.size());
  for (const auto& [name, t] : map_) out.push_back(t);
  return out;
}

void ParameterMap::load_values(const ParameterMap& source) {
  for (auto& [name, t] : map_) {
    const Tensor& src = source.at(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("parameter " + name + ": expected " +
                       shape_to_string(t.shape()) + ", got " +
                       shape_to_string(src.shape()));
    }
    Tensor dst = t;
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
  }
}

void ParameterMap::zero_grads() const {
  for (const auto& [name, t] : map_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

Tensor random_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                 std::multiplies<>());
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace nesla
