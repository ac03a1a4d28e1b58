// nesla: corpus generation, detector training and scoring, metric reports,
// source tracing and score densities.
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nesla/commands.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Applies trailing --section.key=value flags to the config.
void apply_overrides(nesla::RunConfig& config, const std::vector<std::string>& extras) {
  for (const auto& arg : extras) {
    if (arg.rfind("--", 0) != 0 || arg.find('=') == std::string::npos) {
      throw UsageError("unexpected argument '" + arg + "' (config overrides look like --key=value)");
    }
    const auto eq = arg.find('=');
    try {
      config.set(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
}

nesla::RunConfig load_config(const std::string& path, const std::vector<std::string>& extras) {
  nesla::RunConfig config;
  if (!path.empty()) {
    try {
      config = nesla::RunConfig::from_file(path);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  apply_overrides(config, extras);
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return config;
}

std::vector<int> parse_api_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    try {
      if (dash != std::string::npos) {
        const int lo = nesla::parse_api_name(item.substr(0, dash));
        const int hi = nesla::parse_api_name(item.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument("empty API range " + item);
        for (int a = lo; a <= hi; ++a) out.push_back(a);
      } else {
        out.push_back(nesla::parse_api_name(item));
      }
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--apis: ") + e.what());
    }
  }
  return out;
}

nesla::Split split_arg(const std::string& s) {
  try {
    return nesla::parse_split(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::optional<nesla::fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return nesla::fs::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested-block anti-spoofing back-end with local attention, and API source tracing"};
  app.require_subcommand(1);
  std::function<void()> run;

  // gen-corpus
  nesla::GenCorpusCommand gen;
  std::string gen_apis, gen_wav_dir;
  bool gen_float = false;
  auto* g = app.add_subcommand("gen-corpus", "Write a synthetic corpus manifest");
  g->add_option("--seed", gen.corpus.corpus_seed, "Corpus seed")->capture_default_str();
  g->add_option("--n-per-api", gen.corpus.n_per_api, "Utterances per API (>= 10)")->capture_default_str();
  g->add_option("--n-bonafide", gen.corpus.n_bonafide, "Bonafide utterances (0 = match spoof total)")
      ->capture_default_str();
  g->add_option("--apis", gen_apis, "APIs to include, e.g. A0-A4,A21 (default all)");
  g->add_option("--out", gen.manifest, "Manifest path")->required();
  g->add_option("--wav-dir", gen_wav_dir, "Also write every utterance as WAV here");
  g->add_flag("--float32", gen_float, "Write 32-bit float WAV instead of 16-bit PCM");
  g->callback([&] {
    run = [&] {
      gen.corpus.apis = parse_api_list(gen_apis);
      gen.wav_dir = optional_path(gen_wav_dir);
      gen.format = gen_float ? nesla::SampleFormat::float32 : nesla::SampleFormat::pcm16;
      nesla::cmd_gen_corpus(gen, std::cerr);
    };
  });

  // train
  std::string train_config, train_manifest, train_out, train_wav;
  auto* t = app.add_subcommand("train", "Train the detector; extra --key=value flags override the config");
  t->allow_extras();
  t->add_option("--config", train_config, "Config file");
  t->add_option("--manifest", train_manifest, "Corpus manifest")->required();
  t->add_option("--out", train_out, "Checkpoint path")->required();
  t->add_option("--wav-dir", train_wav, "Read audio from <dir>/<utt_id>.wav");
  t->callback([&] {
    run = [&, t] {
      nesla::TrainCommand cmd{load_config(train_config, t->remaining()), train_manifest, train_out,
                              optional_path(train_wav)};
      nesla::cmd_train_detector(cmd, std::cerr);
    };
  });

  // score
  nesla::ScoreCommand score;
  std::string score_split = "eval", score_wav;
  auto* s = app.add_subcommand("score", "Score one manifest split with a detector checkpoint");
  s->add_option("--checkpoint", score.checkpoint)->required();
  s->add_option("--manifest", score.manifest)->required();
  s->add_option("--split", score_split, "train, dev or eval")->capture_default_str();
  s->add_option("--out", score.out, "Score file")->required();
  s->add_option("--wav-dir", score_wav);
  s->callback([&] {
    run = [&] {
      score.split = split_arg(score_split);
      score.wav_dir = optional_path(score_wav);
      nesla::cmd_score(score, std::cerr);
    };
  });

  // eval
  nesla::EvalCommand eval;
  std::string eval_manifest, eval_out, eval_config;
  std::optional<double> c_miss, c_fa, p_target;
  auto* e = app.add_subcommand("eval", "EER / minDCF / actDCF report for a score file");
  e->add_option("--scores", eval.scores)->required();
  e->add_option("--manifest", eval_manifest, "Manifest sidecar for seen/unseen rows");
  e->add_option("--out", eval_out, "Report path (default stdout)");
  e->add_option("--config", eval_config, "Config file supplying the [dcf] section");
  e->add_option("--c-miss", c_miss);
  e->add_option("--c-fa", c_fa);
  e->add_option("--p-target", p_target, "Bonafide prior");
  e->callback([&] {
    run = [&] {
      eval.costs = load_config(eval_config, {}).dcf;
      if (c_miss) eval.costs.c_miss = *c_miss;
      if (c_fa) eval.costs.c_fa = *c_fa;
      if (p_target) eval.costs.p_target = *p_target;
      try {
        eval.costs.validate();
      } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
      }
      eval.manifest = optional_path(eval_manifest);
      eval.out = optional_path(eval_out);
      const auto report = nesla::cmd_eval(eval);
      if (!eval.out) std::cout << report.text;
    };
  });

  // trace
  std::string trace_config, trace_manifest, trace_out, trace_wav;
  std::optional<double> trace_threshold;
  auto* tr = app.add_subcommand("trace", "Train the API tracer and write decisions and a report");
  tr->allow_extras();
  tr->add_option("--config", trace_config, "Config file");
  tr->add_option("--manifest", trace_manifest)->required();
  tr->add_option("--out-dir", trace_out)->required();
  tr->add_option("--threshold", trace_threshold, "Fixed open-set threshold in [0, 1]");
  tr->add_option("--wav-dir", trace_wav);
  tr->callback([&] {
    run = [&, tr] {
      if (trace_threshold && !(*trace_threshold >= 0.0 && *trace_threshold <= 1.0))
        throw UsageError("--threshold must lie in [0, 1]");
      nesla::TraceCommand cmd{load_config(trace_config, tr->remaining()), trace_manifest, trace_out,
                              optional_path(trace_wav), trace_threshold};
      nesla::cmd_trace(cmd, std::cerr);
    };
  });

  // density
  nesla::DensityCommand density;
  auto* d = app.add_subcommand("density", "Per-label histogram densities of a score file");
  d->add_option("--scores", density.scores)->required();
  d->add_option("--bins", density.bins)->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--out", density.out, "CSV path")->required();
  d->callback([&] { run = [&] { nesla::cmd_density(density); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    run();
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
