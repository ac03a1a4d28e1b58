#include "nesla/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nesla/parameters.hpp"
#include "nesla/rng.hpp"

namespace nesla {

Waveform segment_to_length(const Waveform& w, double seconds) {
  if (w.samples.empty()) throw std::invalid_argument("segment: empty waveform");
  if (!(w.sample_rate > 0.0)) throw std::invalid_argument("segment: sample rate must be positive");
  const auto target = static_cast<std::size_t>(std::llround(seconds * w.sample_rate));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.reserve(target);
  while (out.samples.size() < target) {
    const auto take = std::min(w.samples.size(), target - out.samples.size());
    out.samples.insert(out.samples.end(), w.samples.begin(),
                       w.samples.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

std::size_t EncoderConfig::frame_count(std::size_t n_samples) const {
  if (hop == 0 || window == 0) throw std::invalid_argument("encoder: hop and window must be positive");
  if (n_samples < window) {
    throw std::invalid_argument("encoder: " + std::to_string(n_samples) +
                                " samples is shorter than one window of " +
                                std::to_string(window));
  }
  return (n_samples - window) / hop + 1;
}

StubEncoder::StubEncoder(EncoderConfig cfg) : cfg_(cfg) {
  if (cfg_.layers == 0 || cfg_.channels == 0) {
    throw std::invalid_argument("encoder: layers and channels must be positive");
  }
  if (cfg_.kernel_size % 2 == 0) throw std::invalid_argument("encoder: kernel_size must be odd");
  Rng rng(cfg_.seed);
  const auto C = cfg_.channels;
  const auto N = cfg_.window;

  // log-spaced centre frequencies with a seeded jitter inside each band
  const double f_lo = 60.0;
  const double f_hi = 0.45 * cfg_.sample_rate;
  std::vector<double> freqs(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double u = (static_cast<double>(c) + rng.uniform()) / static_cast<double>(C);
    freqs[c] = f_lo * std::pow(f_hi / f_lo, u);
  }
  std::vector<double> hann(N);
  double norm = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(n) + 0.5) /
                                   static_cast<double>(N));
    norm += hann[n] * hann[n];
  }
  // unit-norm analysis vectors: white noise of variance s^2 has energy ~ s^2
  const double amp = 1.0 / std::sqrt(norm);
  std::vector<double> pc(C * N), ps(C * N);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t n = 0; n < N; ++n) {
      const double phase = 2.0 * std::numbers::pi * freqs[c] * static_cast<double>(n) /
                           cfg_.sample_rate;
      pc[c * N + n] = amp * hann[n] * std::cos(phase);
      ps[c * N + n] = amp * hann[n] * std::sin(phase);
    }
  proj_cos_ = Tensor({C, N}, std::move(pc), cfg_.trainable);
  proj_sin_ = Tensor({C, N}, std::move(ps), cfg_.trainable);
  bias0_ = random_tensor({C}, rng, 0.1, cfg_.trainable);

  const auto k = cfg_.kernel_size;
  const double he = std::sqrt(2.0 / static_cast<double>(C * k));
  for (std::size_t l = 1; l < cfg_.layers; ++l) {
    kernels_.push_back(random_tensor({C, C, k}, rng, he, cfg_.trainable));
    biases_.push_back(random_tensor({C}, rng, 0.05, cfg_.trainable));
  }
}

namespace {
constexpr double kEnergyGain = 1.0e4;
}  // namespace

FeatureStack StubEncoder::encode(const Waveform& w, const std::string& utt_id) const {
  const auto N = cfg_.window;
  const auto T = cfg_.frame_count(w.samples.size());
  std::vector<double> frames(N * T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n) frames[n * T + t] = w.samples[t * cfg_.hop + n];
  const Tensor framed({N, T}, std::move(frames));

  FeatureStack out;
  out.utt_id = utt_id;
  const Tensor re = matmul(proj_cos_, framed);
  const Tensor im = matmul(proj_sin_, framed);
  const Tensor energy = scale(add(mul(re, re), mul(im, im)), kEnergyGain);
  out.layers.push_back(shift_channels(log1p(energy), bias0_));
  for (std::size_t l = 0; l < kernels_.size(); ++l)
    out.layers.push_back(relu(conv1d(out.layers.back(), kernels_[l], biases_[l])));
  return out;
}

// ---- waveform files --------------------------------------------------------

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* payload = nullptr;
  std::size_t payload_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto size = read_u32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    if (pos + 8 + size > bytes.size()) throw std::runtime_error(path.string() + ": truncated chunk");
    if (std::memcmp(data + pos, "fmt ", 4) == 0 && size >= 16) {
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      payload = body;
      payload_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (!payload || rate == 0) throw std::runtime_error(path.string() + ": missing fmt or data chunk");
  if (channels != 1) throw std::runtime_error(path.string() + ": only mono audio is supported");

  Waveform w;
  w.sample_rate = rate;
  if (format == 1 && bits == 16) {
    w.samples.resize(payload_size / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      const auto v = static_cast<std::int16_t>(read_u16(payload + 2 * i));
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    w.samples.resize(payload_size / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      const std::uint32_t raw = read_u32(payload + 4 * i);
      float f;
      std::memcpy(&f, &raw, sizeof f);
      w.samples[i] = f;
    }
  } else {
    throw std::runtime_error(path.string() + ": unsupported sample format (need 16-bit PCM or float32)");
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, SampleFormat format) {
  const bool pcm = format == SampleFormat::pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto data_size = static_cast<std::uint32_t>(w.samples.size() * bits / 8);

  std::string out;
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, pcm ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * bits / 8);
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_size);
  for (double v : w.samples) {
    if (pcm) {
      const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
      put_u16(out, static_cast<std::uint16_t>(
                       static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
    } else {
      const float f = static_cast<float>(v);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      put_u32(out, raw);
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Waveform read_text_waveform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Waveform w;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("sample_rate=");
      if (pos != std::string::npos) w.sample_rate = std::stod(line.substr(pos + 12));
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || !std::isfinite(v)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": not a finite sample value");
    }
    w.samples.push_back(v);
  }
  return w;
}

}  // namespace nesla
