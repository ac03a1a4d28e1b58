#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nesla/frontend.hpp"
#include "nesla/metrics.hpp"

namespace nesla {

inline constexpr int kNumApis = 30;
inline constexpr int kGeneratorVersion = 1;

enum class Family { harmonic_stack, am_noise, filtered_pulse, chirp_mix, vocoder_buzz, bonafide };

std::string to_string(Family f);

// API index -> "A<index>"; bonafide uses -1 -> "bonafide".
std::string api_name(int api_index);
// Inverse of api_name; throws on malformed names.
int parse_api_name(const std::string& name);

// Seen APIs A0-A20 are split 70/10/20; A21-A23 are dev-only; A24-A29 eval-only.
bool is_seen_api(int api_index);

struct GenParams {
  double f0_lo = 0, f0_hi = 0;
  int harmonics = 0;
  double tilt = 0;
  double mod_rate = 0, mod_depth = 0;
  double pole1_hz = 0, pole1_bw = 0, pole2_hz = 0, pole2_bw = 0;
  double chirp_lo = 0, chirp_hi = 0, chirp_period = 0;
  double snr_db = 0;
  int quant_levels = 0;

  bool operator==(const GenParams&) const = default;
};

struct ApiGenSpec {
  int api_index = -1;
  Family family = Family::bonafide;
  GenParams params;
};

// Family is api_index mod 5; parameters are drawn from (corpus_seed, api_index).
ApiGenSpec make_api_spec(int api_index, std::uint64_t corpus_seed);
ApiGenSpec bonafide_spec(std::uint64_t corpus_seed);

// Deterministic waveform with peak magnitude 0.9. duration_s in [1, 10].
Waveform generate_utterance(const ApiGenSpec& spec, std::uint64_t utt_seed, double duration_s,
                            double sample_rate = 16000.0);

enum class Split { train, dev, eval };
std::string to_string(Split s);
Split parse_split(const std::string& text);

struct ManifestRecord {
  std::string utt_id;
  std::uint64_t seed = 0;
  TrialLabel label = TrialLabel::spoof;
  int api_index = -1;  // -1 for bonafide
  Split split = Split::train;
  double duration_s = 0.0;

  std::string api_id() const { return api_name(api_index); }
};

struct CorpusOptions {
  std::uint64_t corpus_seed = 42;
  std::size_t n_per_api = 10;
  // 0 balances bonafide against the total spoof count.
  std::size_t n_bonafide = 0;
  // APIs to include; empty means all of A0-A29.
  std::vector<int> apis;
};

struct Manifest {
  std::uint64_t corpus_seed = 0;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(Split s) const;
  // APIs with spoof records in the train split.
  std::vector<int> seen_apis() const;
};

// Largest-remainder apportionment of `total` in proportion to `weights`;
// ties go to the earlier entry.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights);

Manifest build_manifest(const CorpusOptions& options);

void write_manifest(std::ostream& out, const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::filesystem::path& path);

Waveform render_utterance(const ManifestRecord& record, std::uint64_t corpus_seed,
                          double sample_rate = 16000.0);

}  // namespace nesla
