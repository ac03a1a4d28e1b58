#pragma once

#include <map>
#include <string>
#include <vector>

#include "nesla/rng.hpp"
#include "nesla/tensor.hpp"

namespace nesla {

// Ordered name -> tensor handle map. Handles alias the model's parameters,
// so loading values through the map updates the model in place.
class ParameterMap {
 public:
  void add(const std::string& name, const Tensor& t);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return map_.count(name) != 0; }
  std::size_t size() const { return map_.size(); }
  std::size_t scalar_count() const;
  std::vector<Tensor> tensors() const;

  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

  // Copies values from `source` for every name in this map; shapes must match.
  void load_values(const ParameterMap& source);
  void zero_grads() const;

 private:
  std::map<std::string, Tensor> map_;
};

// Gaussian initialisation with the given standard deviation.
Tensor random_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad = true);

}  // namespace nesla
