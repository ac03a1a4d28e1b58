#include "nesla/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace nesla {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "nesla-checkpoint";
constexpr int kVersion = 1;

CheckpointKind parse_kind(const std::string& s) {
  if (s == "detector") return CheckpointKind::detector;
  if (s == "tracer") return CheckpointKind::tracer;
  throw std::runtime_error("checkpoint: unknown kind '" + s + "'");
}

}  // namespace

std::string to_string(CheckpointKind k) {
  return k == CheckpointKind::detector ? "detector" : "tracer";
}

Checkpoint make_checkpoint(CheckpointKind kind, const RunConfig& config,
                           std::uint64_t corpus_seed, const ParameterMap& params,
                           const AdamW* optimizer) {
  Checkpoint c;
  c.kind = kind;
  c.config = config;
  c.corpus_seed = corpus_seed;
  for (const auto& [name, t] : params) c.parameters.add(name, t.detach());
  if (optimizer) {
    c.step = optimizer->steps_taken();
    c.moments = optimizer->moments();
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["kind"] = to_string(ckpt.kind);
  j["config"] = ckpt.config.to_text();
  j["corpus_seed"] = ckpt.corpus_seed;
  j["model_seed"] = ckpt.config.model_seed;
  j["step"] = ckpt.step;
  json params = json::object();
  for (const auto& [name, t] : ckpt.parameters) {
    params[name] = {{"shape", t.shape()},
                    {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  j["parameters"] = std::move(params);
  json moments = json::object();
  for (const auto& [name, m] : ckpt.moments) moments[name] = {{"m", m.first}, {"v", m.second}};
  j["optimizer"] = std::move(moments);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw std::runtime_error("not a nesla checkpoint");
    if (j.at("version").get<int>() != kVersion) {
      throw std::runtime_error("unsupported checkpoint version " + j.at("version").dump());
    }
    Checkpoint c;
    c.kind = parse_kind(j.at("kind").get<std::string>());
    c.config = RunConfig::from_text(j.at("config").get<std::string>());
    c.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
    c.step = j.at("step").get<std::size_t>();
    for (const auto& [name, entry] : j.at("parameters").items()) {
      c.parameters.add(name, Tensor(entry.at("shape").get<Shape>(),
                                    entry.at("values").get<std::vector<double>>()));
    }
    for (const auto& [name, entry] : j.at("optimizer").items()) {
      c.moments[name] = {entry.at("m").get<std::vector<double>>(),
                         entry.at("v").get<std::vector<double>>()};
    }
    return c;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is malformed: " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
}

Detector detector_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::detector) {
    throw std::runtime_error("expected a detector checkpoint, got " + to_string(ckpt.kind));
  }
  Detector d(ckpt.config.detector_config(), ckpt.config.model_seed);
  d.all_parameters().load_values(ckpt.parameters);
  return d;
}

TracerParams tracer_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::tracer) {
    throw std::runtime_error("expected a tracer checkpoint, got " + to_string(ckpt.kind));
  }
  TracerParams p = zero_tracer(ckpt.config.tracer_config());
  ParameterMap map;
  register_parameters(p, "tracer", map);
  map.load_values(ckpt.parameters);
  return p;
}

}  // namespace nesla
