#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nesla/corpus.hpp"
#include "nesla/metrics.hpp"
#include "nesla/run_config.hpp"
#include "nesla/score_io.hpp"
#include "nesla/training.hpp"

namespace nesla {

namespace fs = std::filesystem;

// ---- gen-corpus ------------------------------------------------------------
struct GenCorpusCommand {
  CorpusOptions corpus;
  fs::path manifest;
  // When set, every utterance is also written as <wav_dir>/<utt_id>.wav.
  std::optional<fs::path> wav_dir;
  SampleFormat format = SampleFormat::pcm16;
  double sample_rate = 16000.0;
};
Manifest cmd_gen_corpus(const GenCorpusCommand& cmd, std::ostream& log);

// ---- train -----------------------------------------------------------------
struct TrainCommand {
  RunConfig config;
  fs::path manifest;
  // Final checkpoint; <out>.best-dev and <out>.log are written next to it.
  fs::path out;
  std::optional<fs::path> wav_dir;
};
DetectorTraining cmd_train_detector(const TrainCommand& cmd, std::ostream& log);

// ---- score -----------------------------------------------------------------
struct ScoreCommand {
  fs::path checkpoint;
  fs::path manifest;
  Split split = Split::eval;
  fs::path out;
  std::optional<fs::path> wav_dir;
};
ScoreFile cmd_score(const ScoreCommand& cmd, std::ostream& log);

// ---- eval ------------------------------------------------------------------
struct EvalCommand {
  fs::path scores;
  DcfCosts costs;
  // Manifest sidecar; adds seen/unseen rows keyed on each spoof trial's API.
  std::optional<fs::path> manifest;
  std::optional<fs::path> out;
};

struct DetectionRow {
  std::string subset;  // overall, seen or unseen
  std::size_t n_bonafide = 0;
  std::size_t n_spoof = 0;
  bool defined = false;  // both labels present
  EerResult eer;
  DcfResult min_dcf;
  double act_dcf = 0.0;
};

struct EvalReport {
  std::vector<DetectionRow> rows;
  std::string text;
};
EvalReport cmd_eval(const EvalCommand& cmd);

// ---- trace -----------------------------------------------------------------
struct TraceCommand {
  RunConfig config;
  fs::path manifest;
  // Receives tracer.ckpt, decisions.tsv, embeddings.csv and report.txt.
  fs::path out_dir;
  std::optional<fs::path> wav_dir;
  // Overrides both the config threshold and calibration.
  std::optional<double> threshold;
};

struct TraceSplitReport {
  std::size_t n = 0;
  ConfusionTable table{kSeenApis + 1};
  MacroScores seen, unseen, overall;
  MacroScores all_classes;  // mean over all 22 classes
};

struct TraceSummary {
  double threshold = 0.0;
  std::string threshold_source;  // calibrated, config or override
  double calibration_f1 = 0.0;
  std::vector<std::size_t> classes;  // seen classes of the corpus, then UNSEEN
  TracerTraining training;
  TraceSplitReport dev, eval;
};
TraceSummary cmd_trace(const TraceCommand& cmd, std::ostream& log);

// ---- density ---------------------------------------------------------------
struct DensityCommand {
  fs::path scores;
  std::size_t bins = 50;
  fs::path out;
};

struct DensityTable {
  std::vector<double> edges;  // bins + 1
  std::vector<double> bonafide;
  std::vector<double> spoof;
};
// Histogram densities over a shared range [min score, max score].
DensityTable score_density(const std::vector<ScoreRecord>& scores, std::size_t bins);
DensityTable cmd_density(const DensityCommand& cmd);

}  // namespace nesla
