#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nesla/tensor.hpp"

namespace nesla {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

// Output of the encoder: L layers of [C_enc x T'] features for one utterance.
struct FeatureStack {
  std::vector<Tensor> layers;
  std::string utt_id;

  std::size_t num_layers() const { return layers.size(); }
  std::size_t channels() const { return layers.at(0).extent(0); }
  std::size_t frames() const { return layers.at(0).extent(1); }
};

// Fixed-length segment: shorter signals are tiled (the last copy cut short),
// longer ones keep their first `seconds` of audio.
Waveform segment_to_length(const Waveform& w, double seconds = 4.0);

struct EncoderConfig {
  std::size_t layers = 12;     // L
  std::size_t channels = 64;   // C_enc
  std::size_t hop = 320;
  std::size_t window = 320;
  std::size_t kernel_size = 3;
  std::uint64_t seed = 1234;
  double sample_rate = 16000.0;
  bool trainable = false;  // lets gradients reach the encoder weights

  // floor((n - window) / hop) + 1; throws when n < window.
  std::size_t frame_count(std::size_t n_samples) const;
};

// Deterministic stand-in for a pretrained speech encoder.
//
// Layer 0 frames the signal and projects each frame onto a seeded bank of
// Hann-windowed cosine/sine pairs at random log-spaced frequencies; the
// channel value is log1p of the pair's energy plus a seeded bias. Each later
// layer is relu(conv1d(previous layer)) with seeded weights.
class StubEncoder {
 public:
  explicit StubEncoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  FeatureStack encode(const Waveform& w, const std::string& utt_id = {}) const;

  const Tensor& layer0_bias() const { return bias0_; }

 private:
  EncoderConfig cfg_;
  Tensor proj_cos_;  // [C x window]
  Tensor proj_sin_;  // [C x window]
  Tensor bias0_;     // [C]
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

enum class SampleFormat { pcm16, float32 };

// RIFF/WAVE, mono, 16-bit PCM or 32-bit float.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w,
               SampleFormat format = SampleFormat::pcm16);

// One sample per line; an optional "# sample_rate=<hz>" line sets the rate.
Waveform read_text_waveform(const std::filesystem::path& path);

}  // namespace nesla
