#include "nesla/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace nesla {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("config " + key + ": '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("config " + key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* section, const char* key, T RunConfig::*member) {
  return {section, key, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(parse_uint(k, v));
          }};
}

template <typename Outer, typename T>
Field nested_uint(const char* section, const char* key, Outer RunConfig::*outer, T Outer::*member) {
  return {section, key, [=](const RunConfig& c) { return std::to_string(c.*outer.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*outer.*member = static_cast<T>(parse_uint(k, v));
          }};
}

template <typename Outer>
Field nested_double(const char* section, const char* key, Outer RunConfig::*outer,
                    double Outer::*member) {
  return {section, key, [=](const RunConfig& c) { return format_double(c.*outer.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*outer.*member = parse_double(k, v);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"model", "variant", [](const RunConfig& c) { return to_string(c.variant); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.variant = parse_variant(v); }},
      size_field("model", "J", &RunConfig::splits),
      size_field("model", "K", &RunConfig::window_radius),
      size_field("model", "ws_branches", &RunConfig::ws_branches),
      size_field("model", "se_reduction", &RunConfig::se_reduction),
      size_field("model", "kernel_size", &RunConfig::kernel_size),
      size_field("model", "d_attn", &RunConfig::d_attn),
      size_field("model", "n_blocks", &RunConfig::n_blocks),
      size_field("model", "seed", &RunConfig::model_seed),
      nested_uint("encoder", "L", &RunConfig::encoder, &EncoderConfig::layers),
      nested_uint("encoder", "C_enc", &RunConfig::encoder, &EncoderConfig::channels),
      nested_uint("encoder", "hop", &RunConfig::encoder, &EncoderConfig::hop),
      nested_uint("encoder", "window", &RunConfig::encoder, &EncoderConfig::window),
      nested_uint("encoder", "kernel_size", &RunConfig::encoder, &EncoderConfig::kernel_size),
      nested_uint("encoder", "seed", &RunConfig::encoder, &EncoderConfig::seed),
      nested_double("encoder", "sample_rate", &RunConfig::encoder, &EncoderConfig::sample_rate),
      {"encoder", "segment_seconds", [](const RunConfig& c) { return format_double(c.segment_seconds); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.segment_seconds = parse_double(k, v); }},
      nested_double("train", "learning_rate", &RunConfig::train, &TrainOptions::learning_rate),
      nested_double("train", "weight_decay", &RunConfig::train, &TrainOptions::weight_decay),
      nested_uint("train", "batch_size", &RunConfig::train, &TrainOptions::batch_size),
      nested_uint("train", "max_steps", &RunConfig::train, &TrainOptions::max_steps),
      nested_uint("train", "eval_interval", &RunConfig::train, &TrainOptions::eval_interval),
      nested_uint("train", "seed", &RunConfig::train, &TrainOptions::seed),
      nested_double("tracer", "learning_rate", &RunConfig::tracer, &TracerOptions::learning_rate),
      nested_double("tracer", "weight_decay", &RunConfig::tracer, &TracerOptions::weight_decay),
      nested_uint("tracer", "batch_size", &RunConfig::tracer, &TracerOptions::batch_size),
      nested_uint("tracer", "max_steps", &RunConfig::tracer, &TracerOptions::max_steps),
      nested_uint("tracer", "seed", &RunConfig::tracer, &TracerOptions::seed),
      nested_uint("tracer", "se_reduction", &RunConfig::tracer, &TracerOptions::se_reduction),
      nested_double("tracer", "threshold", &RunConfig::tracer, &TracerOptions::threshold),
      nested_double("dcf", "c_miss", &RunConfig::dcf, &DcfCosts::c_miss),
      nested_double("dcf", "c_fa", &RunConfig::dcf, &DcfCosts::c_fa),
      nested_double("dcf", "p_target", &RunConfig::dcf, &DcfCosts::p_target),
  };
  return table;
}

}  // namespace

DetectorConfig RunConfig::detector_config() const {
  DetectorConfig d;
  d.nes.channels = encoder.channels;
  d.nes.splits = splits;
  d.nes.ws_branches = ws_branches;
  d.nes.se_reduction = se_reduction;
  d.nes.kernel_size = kernel_size;
  d.la.window_radius = window_radius;
  d.la.attn_dim = d_attn;
  d.la.n_classes = 2;
  d.n_blocks = n_blocks;
  d.variant = variant;
  return d;
}

TracerConfig RunConfig::tracer_config() const {
  return {encoder.layers, encoder.channels, tracer.se_reduction};
}

std::size_t RunConfig::frames() const {
  const auto n = static_cast<std::size_t>(std::llround(segment_seconds * encoder.sample_rate));
  return encoder.frame_count(n);
}

void RunConfig::validate() const {
  detector_config().nes.validate();
  if (n_blocks == 0) throw std::invalid_argument("config model.n_blocks must be >= 1");
  if (d_attn == 0) throw std::invalid_argument("config model.d_attn must be >= 1");
  if (!(train.learning_rate > 0.0)) throw std::invalid_argument("config train.learning_rate must be > 0");
  if (!(tracer.learning_rate > 0.0)) throw std::invalid_argument("config tracer.learning_rate must be > 0");
  if (train.batch_size == 0 || tracer.batch_size == 0) {
    throw std::invalid_argument("config batch_size must be >= 1");
  }
  if (tracer.threshold > 1.0) throw std::invalid_argument("config tracer.threshold must be <= 1");
  if (!(segment_seconds > 0.0)) throw std::invalid_argument("config encoder.segment_seconds must be > 0");
  dcf.validate();
  frames();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  const Field* match = nullptr;
  for (const auto& f : fields()) {
    const bool hit = dot == std::string::npos
                         ? key == f.key
                         : key.substr(0, dot) == f.section && key.substr(dot + 1) == f.key;
    if (!hit) continue;
    if (match) throw std::invalid_argument("config key '" + key + "' is ambiguous; qualify it with a section");
    match = &f;
  }
  if (!match) throw std::invalid_argument("unknown config key '" + key + "'");
  match->set(*this, std::string(match->section) + "." + match->key, value);
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(std::string(f.section) + "." + f.key);
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(*this) << '\n';
  }
  return os.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw std::invalid_argument("config: key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace nesla
