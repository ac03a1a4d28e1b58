#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nesla/detector.hpp"
#include "nesla/frontend.hpp"
#include "nesla/metrics.hpp"
#include "nesla/tracer.hpp"

namespace nesla {

struct TrainOptions {
  double learning_rate = 5e-6;
  double weight_decay = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_steps = 5000;
  std::size_t eval_interval = 250;
  std::uint64_t seed = 7;
};

struct TracerOptions {
  double learning_rate = 1e-5;
  double weight_decay = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_steps = 5000;
  std::uint64_t seed = 11;
  std::size_t se_reduction = 4;
  // Negative means "calibrate on the dev split".
  double threshold = -1.0;
};

// Every tunable of a run. Serialized as an INI-style text with [model],
// [encoder], [train], [tracer] and [dcf] sections.
struct RunConfig {
  Variant variant = Variant::nes2net_la;
  std::size_t splits = 8;         // J
  std::size_t window_radius = 1;  // K
  std::size_t ws_branches = 2;
  std::size_t se_reduction = 4;
  std::size_t kernel_size = 3;
  std::size_t d_attn = 8;
  std::size_t n_blocks = 1;
  std::uint64_t model_seed = 1;

  EncoderConfig encoder;
  double segment_seconds = 4.0;

  TrainOptions train;
  TracerOptions tracer;
  DcfCosts dcf;

  // C comes from the encoder width; T' is never configured directly.
  DetectorConfig detector_config() const;
  TracerConfig tracer_config() const;
  std::size_t frames() const;

  void validate() const;

  // Sets "section.key" (or a bare key that is unique across sections).
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;

  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);
};

}  // namespace nesla
