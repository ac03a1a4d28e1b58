#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace nesla {

// Stateless 64-bit mixer for deriving child seeds from (parent, salt).
std::uint64_t mix_seed(std::uint64_t parent, std::uint64_t salt);

// Seeded generator. The engine is std::mt19937_64; the distributions are
// written out here so sequences do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nesla
