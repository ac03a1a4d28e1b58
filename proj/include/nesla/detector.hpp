#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nesla/local_attention.hpp"
#include "nesla/nes_block.hpp"
#include "nesla/parameters.hpp"

namespace nesla {

enum class Variant { nes2net_x, nes2net_la };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct DetectorConfig {
  NesConfig nes;
  LAConfig la;
  std::size_t n_blocks = 1;
  Variant variant = Variant::nes2net_la;
};

struct DetectorParams {
  std::vector<NesBlockParams> blocks;
  LAParams head;
};

// Nested blocks followed by the local-attention head (or the plain concat
// head for nes2net-x). Input is one encoder layer, [C x T'].
class Detector {
 public:
  Detector(DetectorConfig cfg, std::uint64_t seed);

  const DetectorConfig& config() const { return cfg_; }
  DetectorParams& params() { return params_; }
  const DetectorParams& params() const { return params_; }

  Tensor logits(const Tensor& features) const;
  double score(const Tensor& features) const;

  // Every parameter, including attention weights unused by nes2net-x.
  ParameterMap all_parameters() const;
  // Parameters the variant actually trains.
  ParameterMap trainable_parameters() const;

 private:
  DetectorConfig cfg_;
  DetectorParams params_;
};

}  // namespace nesla
