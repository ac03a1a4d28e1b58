#include "nesla/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nesla/rng.hpp"

namespace nesla {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPeak = 0.9;

// Two-pole resonator with unit-ish peak gain.
class Resonator {
 public:
  Resonator(double freq_hz, double bandwidth_hz, double sample_rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / sample_rate);
    a1_ = 2.0 * r * std::cos(kTwoPi * freq_hz / sample_rate);
    a2_ = -r * r;
    gain_ = 1.0 - r;
  }
  double operator()(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_ = 0, a2_ = 0, gain_ = 1, y1_ = 0, y2_ = 0;
};

void add_noise(std::vector<double>& x, double snr_db, Rng& rng) {
  double power = 0.0;
  for (double v : x) power += v * v;
  power /= static_cast<double>(std::max<std::size_t>(1, x.size()));
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  for (auto& v : x) v += rng.normal(0.0, sigma);
}

void normalize_peak(std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak <= 0.0) return;
  const double g = kPeak / peak;
  for (auto& v : x) v = std::clamp(v * g, -kPeak, kPeak);
}

std::vector<double> harmonic_stack(const GenParams& p, std::size_t n, double sr, Rng& rng) {
  const double f0 = rng.uniform(p.f0_lo, p.f0_hi);
  const double vib_rate = rng.uniform(4.0, 6.0);
  std::vector<double> phases(static_cast<std::size_t>(p.harmonics));
  for (auto& ph : phases) ph = rng.uniform(0.0, kTwoPi);
  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = f0 * (1.0 + 0.02 * std::sin(kTwoPi * vib_rate * t));
    phase += kTwoPi * f / sr;
    double acc = 0.0;
    for (int h = 1; h <= p.harmonics; ++h) {
      if (h * f >= 0.5 * sr) break;
      acc += std::pow(static_cast<double>(h), -p.tilt) * std::sin(h * phase + phases[h - 1]);
    }
    x[i] = acc;
  }
  add_noise(x, p.snr_db, rng);
  return x;
}

std::vector<double> am_noise(const GenParams& p, std::size_t n, double sr, Rng& rng) {
  Resonator r1(p.pole1_hz, p.pole1_bw, sr);
  Resonator r2(p.pole2_hz, p.pole2_bw, sr);
  const double mod_phase = rng.uniform(0.0, kTwoPi);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = rng.normal();
    const double t = static_cast<double>(i) / sr;
    const double env = 1.0 + p.mod_depth * std::sin(kTwoPi * p.mod_rate * t + mod_phase);
    x[i] = env * (r1(e) + 0.5 * r2(e));
  }
  add_noise(x, p.snr_db, rng);
  return x;
}

std::vector<double> filtered_pulse(const GenParams& p, std::size_t n, double sr, Rng& rng) {
  Resonator r1(p.pole1_hz, p.pole1_bw, sr);
  Resonator r2(p.pole2_hz, p.pole2_bw, sr);
  const double f0 = rng.uniform(p.f0_lo, p.f0_hi);
  std::vector<double> x(n);
  double next_pulse = rng.uniform(0.0, sr / f0);
  for (std::size_t i = 0; i < n; ++i) {
    double e = 0.0;
    if (static_cast<double>(i) >= next_pulse) {
      e = 1.0;
      next_pulse += (sr / f0) * (1.0 + 0.01 * rng.normal());
    }
    x[i] = r2(r1(e));
  }
  add_noise(x, p.snr_db, rng);
  return x;
}

std::vector<double> chirp_mix(const GenParams& p, std::size_t n, double sr, Rng& rng) {
  const double offset = rng.uniform(0.0, p.chirp_period);
  std::vector<double> x(n);
  double ph1 = rng.uniform(0.0, kTwoPi);
  double ph2 = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr + offset;
    const double frac = std::fmod(t, p.chirp_period) / p.chirp_period;
    const double f = p.chirp_lo + (p.chirp_hi - p.chirp_lo) * frac;
    ph1 += kTwoPi * f / sr;
    ph2 += kTwoPi * std::min(1.5 * f, 0.45 * sr) / sr;
    x[i] = std::sin(ph1) + 0.5 * std::sin(ph2);
  }
  add_noise(x, p.snr_db, rng);
  return x;
}

std::vector<double> vocoder_buzz(const GenParams& p, std::size_t n, double sr, Rng& rng) {
  const double f0 = rng.uniform(p.f0_lo, p.f0_hi);
  constexpr int kBands = 4;
  std::vector<Resonator> bands;
  std::vector<double> gains;
  for (int b = 0; b < kBands; ++b) {
    const double u = static_cast<double>(b) / (kBands - 1);
    const double fc = p.pole1_hz * std::pow(p.pole2_hz / p.pole1_hz, u);
    bands.emplace_back(fc, p.pole1_bw, sr);
    gains.push_back(b % 2 == 0 ? 1.0 : p.mod_depth);
  }
  std::vector<double> x(n);
  double phase = rng.uniform(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    phase += f0 / sr;
    phase -= std::floor(phase);
    const double saw = 2.0 * phase - 1.0;
    double acc = 0.0;
    for (int b = 0; b < kBands; ++b) acc += gains[b] * bands[b](saw);
    x[i] = acc;
  }
  normalize_peak(x);
  const double q = static_cast<double>(p.quant_levels);
  for (auto& v : x) v = std::round(v * q) / q;
  add_noise(x, p.snr_db, rng);
  return x;
}

std::vector<double> bonafide_formants(const GenParams& p, std::size_t n, double sr, Rng& rng) {
  const double f1 = rng.uniform(300.0, 800.0);
  const double f2 = rng.uniform(900.0, 2200.0);
  const double f3 = rng.uniform(2300.0, 3200.0);
  const double syllable = rng.uniform(3.0, 5.0);
  const double drift = rng.uniform(0.5, 1.5);
  Resonator r1(f1, 80.0, sr), r2(f2, 120.0, sr), r3(f3, 180.0, sr);
  // slow formant drift is approximated by cross-fading with a shifted bank
  Resonator s1(f1 * 1.15, 80.0, sr), s2(f2 * 0.9, 120.0, sr), s3(f3 * 1.05, 180.0, sr);
  Resonator band_limit(p.pole1_hz, p.pole1_bw, sr);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double e = band_limit(rng.normal()) * 4.0 + 0.25 * rng.normal();
    const double mix = 0.5 + 0.5 * std::sin(kTwoPi * drift * t);
    const double a = r1(e) + 0.6 * r2(e) + 0.3 * r3(e);
    const double b = s1(e) + 0.6 * s2(e) + 0.3 * s3(e);
    const double env = std::pow(std::abs(std::sin(std::numbers::pi * syllable * t)), 0.7);
    x[i] = env * ((1.0 - mix) * a + mix * b);
  }
  add_noise(x, p.snr_db, rng);
  return x;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::harmonic_stack: return "harmonic-stack";
    case Family::am_noise: return "am-noise";
    case Family::filtered_pulse: return "filtered-pulse";
    case Family::chirp_mix: return "chirp-mix";
    case Family::vocoder_buzz: return "vocoder-buzz";
    case Family::bonafide: return "bonafide";
  }
  return "unknown";
}

std::string api_name(int api_index) {
  if (api_index < 0) return "bonafide";
  return "A" + std::to_string(api_index);
}

int parse_api_name(const std::string& name) {
  if (name == "bonafide") return -1;
  if (name.size() < 2 || name[0] != 'A' ||
      !std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::invalid_argument("malformed API id '" + name + "'");
  }
  const int idx = std::stoi(name.substr(1));
  if (idx >= kNumApis) throw std::invalid_argument("API id out of range: " + name);
  return idx;
}

bool is_seen_api(int api_index) { return api_index >= 0 && api_index <= 20; }

ApiGenSpec make_api_spec(int api_index, std::uint64_t corpus_seed) {
  if (api_index < 0 || api_index >= kNumApis) {
    throw std::invalid_argument("make_api_spec: API index out of range");
  }
  Rng rng(mix_seed(corpus_seed, 1000 + static_cast<std::uint64_t>(api_index)));
  ApiGenSpec spec;
  spec.api_index = api_index;
  spec.family = static_cast<Family>(api_index % 5);
  GenParams& p = spec.params;
  p.f0_lo = rng.uniform(70.0, 320.0);
  p.f0_hi = p.f0_lo * rng.uniform(1.05, 1.4);
  p.harmonics = 4 + static_cast<int>(rng.below(28));
  p.tilt = rng.uniform(0.3, 2.0);
  p.mod_rate = rng.uniform(1.0, 12.0);
  p.mod_depth = rng.uniform(0.1, 0.9);
  p.pole1_hz = rng.uniform(200.0, 2500.0);
  p.pole1_bw = rng.uniform(40.0, 400.0);
  p.pole2_hz = p.pole1_hz + rng.uniform(500.0, 4500.0);
  p.pole2_bw = rng.uniform(60.0, 600.0);
  p.chirp_lo = rng.uniform(100.0, 1500.0);
  p.chirp_hi = p.chirp_lo + rng.uniform(300.0, 5000.0);
  p.chirp_period = rng.uniform(0.1, 1.0);
  p.snr_db = rng.uniform(15.0, 40.0);
  p.quant_levels = 4 + static_cast<int>(rng.below(60));
  return spec;
}

ApiGenSpec bonafide_spec(std::uint64_t corpus_seed) {
  Rng rng(mix_seed(corpus_seed, 999));
  ApiGenSpec spec;
  spec.api_index = -1;
  spec.family = Family::bonafide;
  spec.params.pole1_hz = rng.uniform(1200.0, 1600.0);
  spec.params.pole1_bw = rng.uniform(1800.0, 2400.0);
  spec.params.snr_db = rng.uniform(25.0, 35.0);
  return spec;
}

Waveform generate_utterance(const ApiGenSpec& spec, std::uint64_t utt_seed, double duration_s,
                            double sample_rate) {
  if (!(duration_s >= 1.0 && duration_s <= 10.0)) {
    throw std::invalid_argument("generate_utterance: duration must lie in [1, 10] s");
  }
  Rng rng(mix_seed(utt_seed, 0xA0D10));
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  Waveform w;
  w.sample_rate = sample_rate;
  switch (spec.family) {
    case Family::harmonic_stack: w.samples = harmonic_stack(spec.params, n, sample_rate, rng); break;
    case Family::am_noise: w.samples = am_noise(spec.params, n, sample_rate, rng); break;
    case Family::filtered_pulse: w.samples = filtered_pulse(spec.params, n, sample_rate, rng); break;
    case Family::chirp_mix: w.samples = chirp_mix(spec.params, n, sample_rate, rng); break;
    case Family::vocoder_buzz: w.samples = vocoder_buzz(spec.params, n, sample_rate, rng); break;
    case Family::bonafide: w.samples = bonafide_formants(spec.params, n, sample_rate, rng); break;
  }
  normalize_peak(w.samples);
  return w;
}

// ---- manifest --------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::eval: return "eval";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "dev") return Split::dev;
  if (text == "eval") return Split::eval;
  throw std::invalid_argument("unknown split '" + text + "'");
}

std::vector<ManifestRecord> Manifest::split(Split s) const {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const ManifestRecord& r) { return r.split == s; });
  return out;
}

std::vector<int> Manifest::seen_apis() const {
  std::set<int> apis;
  for (const auto& r : records)
    if (r.split == Split::train && r.label == TrialLabel::spoof) apis.insert(r.api_index);
  return {apis.begin(), apis.end()};
}

std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights) {
  std::size_t wsum = 0;
  for (auto w : weights) wsum += w;
  std::vector<std::size_t> out(weights.size(), 0);
  if (wsum == 0) return out;
  std::vector<std::size_t> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out[i] = total * weights[i] / wsum;
    rem[i] = total * weights[i] % wsum;
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

namespace {

double draw_duration(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xD0));
  return std::round(rng.uniform(2.0, 6.0) * 1000.0) / 1000.0;
}

ManifestRecord make_record(std::uint64_t corpus_seed, int api_index, std::size_t k, Split split) {
  ManifestRecord r;
  r.api_index = api_index;
  r.label = api_index < 0 ? TrialLabel::bonafide : TrialLabel::spoof;
  r.seed = mix_seed(mix_seed(corpus_seed, static_cast<std::uint64_t>(api_index + 1)), k);
  std::ostringstream id;
  id << (api_index < 0 ? std::string("bona") : api_name(api_index)) << '-' << std::setw(5)
     << std::setfill('0') << k;
  r.utt_id = id.str();
  r.split = split;
  r.duration_s = draw_duration(r.seed);
  return r;
}

}  // namespace

Manifest build_manifest(const CorpusOptions& options) {
  if (options.n_per_api < 10) {
    throw std::invalid_argument("build_manifest: n_per_api must be at least 10 to populate every split");
  }
  std::vector<int> apis = options.apis;
  if (apis.empty()) {
    for (int a = 0; a < kNumApis; ++a) apis.push_back(a);
  }
  std::sort(apis.begin(), apis.end());
  if (std::adjacent_find(apis.begin(), apis.end()) != apis.end()) {
    throw std::invalid_argument("build_manifest: duplicate API in selection");
  }
  for (int a : apis) {
    if (a < 0 || a >= kNumApis) throw std::invalid_argument("build_manifest: API index out of range");
  }

  Manifest m;
  m.corpus_seed = options.corpus_seed;
  const auto n = options.n_per_api;
  const auto seen_counts = apportion(n, {7, 1, 2});
  std::vector<std::size_t> spoof_per_split(3, 0);
  for (int a : apis) {
    std::vector<std::size_t> counts(3, 0);
    if (is_seen_api(a)) {
      counts = seen_counts;
    } else if (a <= 23) {
      counts[1] = n;
    } else {
      counts[2] = n;
    }
    std::size_t k = 0;
    for (int s = 0; s < 3; ++s) {
      spoof_per_split[s] += counts[s];
      for (std::size_t i = 0; i < counts[s]; ++i, ++k)
        m.records.push_back(make_record(options.corpus_seed, a, k, static_cast<Split>(s)));
    }
  }

  const std::size_t spoof_total = spoof_per_split[0] + spoof_per_split[1] + spoof_per_split[2];
  const std::size_t n_bona = options.n_bonafide == 0 ? spoof_total : options.n_bonafide;
  const auto bona_counts = apportion(n_bona, spoof_per_split);
  for (int s = 0; s < 3; ++s) {
    if (spoof_per_split[s] > 0 && bona_counts[s] == 0) {
      throw std::invalid_argument("build_manifest: too few bonafide utterances to populate the " +
                                  to_string(static_cast<Split>(s)) + " split");
    }
  }
  std::size_t k = 0;
  for (int s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < bona_counts[s]; ++i, ++k)
      m.records.push_back(make_record(options.corpus_seed, -1, k, static_cast<Split>(s)));
  return m;
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  out << "# nesla-manifest corpus_seed=" << manifest.corpus_seed
      << " generator_version=" << kGeneratorVersion << '\n';
  out << "# utt_id\tseed\tlabel\tapi_id\tsplit\tduration_s\n";
  for (const auto& r : manifest.records) {
    char dur[32];
    std::snprintf(dur, sizeof dur, "%.3f", r.duration_s);
    out << r.utt_id << '\t' << r.seed << '\t' << to_string(r.label) << '\t' << r.api_id() << '\t'
        << to_string(r.split) << '\t' << dur << '\n';
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  write_manifest(out, manifest);
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

Manifest read_manifest(std::istream& in) {
  Manifest m;
  bool have_seed = false;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("corpus_seed=");
      if (pos != std::string::npos) {
        m.corpus_seed = std::stoull(line.substr(pos + 12));
        have_seed = true;
      }
      continue;
    }
    std::istringstream fields(line);
    std::string id, seed, label, api, split, dur;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, seed, '\t') ||
        !std::getline(fields, label, '\t') || !std::getline(fields, api, '\t') ||
        !std::getline(fields, split, '\t') || !std::getline(fields, dur, '\t')) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected 6 tab-separated fields");
    }
    ManifestRecord r;
    try {
      r.utt_id = id;
      r.seed = std::stoull(seed);
      r.label = parse_trial_label(label);
      r.api_index = parse_api_name(api);
      r.split = parse_split(split);
      r.duration_s = std::stod(dur);
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if ((r.label == TrialLabel::bonafide) != (r.api_index < 0)) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": label and api_id disagree");
    }
    if (!ids.insert(r.utt_id).second) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": duplicate utt_id " + r.utt_id);
    }
    m.records.push_back(std::move(r));
  }
  if (!have_seed) throw std::runtime_error("manifest: missing corpus_seed header");
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  return read_manifest(in);
}

Waveform render_utterance(const ManifestRecord& record, std::uint64_t corpus_seed,
                          double sample_rate) {
  const ApiGenSpec spec = record.api_index < 0 ? bonafide_spec(corpus_seed)
                                               : make_api_spec(record.api_index, corpus_seed);
  return generate_utterance(spec, record.seed, record.duration_s, sample_rate);
}

}  // namespace nesla
