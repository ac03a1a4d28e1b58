#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "nesla/detector.hpp"
#include "nesla/optim.hpp"
#include "nesla/parameters.hpp"
#include "nesla/run_config.hpp"
#include "nesla/tracer.hpp"

namespace nesla {

enum class CheckpointKind { detector, tracer };
std::string to_string(CheckpointKind k);

// JSON container: config text, named tensors, optimizer moments, step and
// seeds. Doubles are written in round-trip form, so a reload reproduces the
// forward pass bit for bit.
struct Checkpoint {
  CheckpointKind kind = CheckpointKind::detector;
  RunConfig config;
  std::uint64_t corpus_seed = 0;
  std::size_t step = 0;
  ParameterMap parameters;
  std::map<std::string, AdamW::Moments> moments;
};

// Deep copy of the current parameter values (and optimizer state if given).
Checkpoint make_checkpoint(CheckpointKind kind, const RunConfig& config,
                           std::uint64_t corpus_seed, const ParameterMap& params,
                           const AdamW* optimizer = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the model described by the checkpoint and loads its values.
Detector detector_from_checkpoint(const Checkpoint& ckpt);
TracerParams tracer_from_checkpoint(const Checkpoint& ckpt);

}  // namespace nesla
