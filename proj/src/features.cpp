#include "nesla/features.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nesla {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool read_cached(const std::filesystem::path& path, FeatureStack& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::uint64_t dims[3];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof dims)) return false;
  const auto L = dims[0], C = dims[1], T = dims[2];
  for (std::uint64_t l = 0; l < L; ++l) {
    std::vector<double> v(C * T);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
      return false;
    out.layers.emplace_back(Shape{C, T}, std::move(v));
  }
  return true;
}

void write_cached(const std::filesystem::path& path, const FeatureStack& s) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) return;  // cache is best effort
    const std::uint64_t dims[3] = {s.num_layers(), s.channels(), s.frames()};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    for (const auto& layer : s.layers) {
      out.write(reinterpret_cast<const char*>(layer.values().data()),
                static_cast<std::streamsize>(layer.numel() * sizeof(double)));
    }
    if (!out) return;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
}

}  // namespace

FeatureExtractor::FeatureExtractor(const RunConfig& config, std::uint64_t corpus_seed,
                                   std::optional<std::filesystem::path> wav_dir)
    : config_(config),
      corpus_seed_(corpus_seed),
      wav_dir_(std::move(wav_dir)),
      encoder_(config.encoder) {
  if (const char* dir = std::getenv(kCacheEnv); dir && *dir) cache_dir_ = dir;
}

Waveform FeatureExtractor::waveform(const ManifestRecord& record) const {
  if (!wav_dir_) return render_utterance(record, corpus_seed_, config_.encoder.sample_rate);
  const auto path = *wav_dir_ / (record.utt_id + ".wav");
  Waveform w = read_wav(path);
  if (w.sample_rate != config_.encoder.sample_rate) {
    throw std::runtime_error(path.string() + ": sample rate " + std::to_string(w.sample_rate) +
                             " does not match the encoder's " +
                             std::to_string(config_.encoder.sample_rate));
  }
  return w;
}

std::string FeatureExtractor::cache_key(const ManifestRecord& record) const {
  std::ostringstream os;
  os << "v" << kGeneratorVersion << '|' << corpus_seed_ << '|' << record.utt_id << '|'
     << record.seed << '|' << record.api_index << '|' << record.duration_s << '|'
     << (wav_dir_ ? wav_dir_->string() : std::string("-")) << '|' << config_.segment_seconds;
  const auto& e = config_.encoder;
  os << '|' << e.layers << ',' << e.channels << ',' << e.hop << ',' << e.window << ','
     << e.kernel_size << ',' << e.seed << ',' << e.sample_rate;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
  return buf;
}

FeatureStack FeatureExtractor::stack(const ManifestRecord& record) const {
  std::filesystem::path cached;
  if (cache_dir_) {
    cached = *cache_dir_ / (record.utt_id + "-" + cache_key(record) + ".bin");
    FeatureStack s;
    s.utt_id = record.utt_id;
    if (read_cached(cached, s)) return s;
  }
  NoGradGuard no_grad;
  FeatureStack s = encoder_.encode(segment_to_length(waveform(record), config_.segment_seconds),
                                   record.utt_id);
  if (cache_dir_) write_cached(cached, s);
  return s;
}

Tensor FeatureExtractor::detector_input(const ManifestRecord& record) const {
  return stack(record).layers.back();
}

}  // namespace nesla
