#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nesla/corpus.hpp"
#include "nesla/frontend.hpp"
#include "nesla/run_config.hpp"

namespace nesla {

// Environment variable naming an on-disk feature cache directory.
inline constexpr const char* kCacheEnv = "NESLA_CACHE_DIR";

// Waveform -> fixed-length segment -> frozen encoder, for manifest records.
// Audio comes from <wav_dir>/<utt_id>.wav when a directory is given and is
// regenerated from the record's seed otherwise.
class FeatureExtractor {
 public:
  FeatureExtractor(const RunConfig& config, std::uint64_t corpus_seed,
                   std::optional<std::filesystem::path> wav_dir = std::nullopt);

  Waveform waveform(const ManifestRecord& record) const;
  FeatureStack stack(const ManifestRecord& record) const;
  // Last encoder layer, [C x T'].
  Tensor detector_input(const ManifestRecord& record) const;

  const std::optional<std::filesystem::path>& cache_dir() const { return cache_dir_; }

 private:
  std::string cache_key(const ManifestRecord& record) const;

  RunConfig config_;
  std::uint64_t corpus_seed_;
  std::optional<std::filesystem::path> wav_dir_;
  std::optional<std::filesystem::path> cache_dir_;
  StubEncoder encoder_;
};

}  // namespace nesla
