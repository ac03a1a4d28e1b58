#include "nesla/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nesla/checkpoint.hpp"
#include "nesla/features.hpp"

namespace nesla {

namespace {

void echo_config(std::ostream& out, const RunConfig& config, const std::string& prefix) {
  std::istringstream lines(config.to_text());
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) out << prefix << line << '\n';
  }
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void check_written(const std::ofstream& out, const fs::path& path) {
  if (!out) throw std::runtime_error("error writing " + path.string());
}

std::vector<DetectorExample> detector_examples(const FeatureExtractor& fx,
                                               const std::vector<ManifestRecord>& records) {
  std::vector<DetectorExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.utt_id, fx.detector_input(r), r.label});
  return out;
}

std::string api_or_unseen(std::size_t cls) {
  return cls == kUnseenClass ? std::string("UNSEEN") : api_name(static_cast<int>(cls));
}

}  // namespace

// ---- gen-corpus ------------------------------------------------------------

Manifest cmd_gen_corpus(const GenCorpusCommand& cmd, std::ostream& log) {
  const Manifest manifest = build_manifest(cmd.corpus);
  if (cmd.manifest.has_parent_path()) fs::create_directories(cmd.manifest.parent_path());
  write_manifest(cmd.manifest, manifest);
  if (cmd.wav_dir) {
    fs::create_directories(*cmd.wav_dir);
    for (const auto& r : manifest.records) {
      write_wav(*cmd.wav_dir / (r.utt_id + ".wav"),
                render_utterance(r, manifest.corpus_seed, cmd.sample_rate), cmd.format);
    }
  }
  std::size_t spoof = 0;
  for (const auto& r : manifest.records) spoof += r.label == TrialLabel::spoof;
  log << "wrote " << manifest.records.size() << " records (" << spoof << " spoof, "
      << manifest.records.size() - spoof << " bonafide) to " << cmd.manifest.string() << '\n';
  return manifest;
}

// ---- train -----------------------------------------------------------------

DetectorTraining cmd_train_detector(const TrainCommand& cmd, std::ostream& log) {
  cmd.config.validate();
  const Manifest manifest = read_manifest(cmd.manifest);
  const auto train_records = manifest.split(Split::train);
  if (train_records.empty()) throw std::runtime_error("manifest has no train split records");
  const FeatureExtractor fx(cmd.config, manifest.corpus_seed, cmd.wav_dir);
  const auto train = detector_examples(fx, train_records);
  const auto dev = detector_examples(fx, manifest.split(Split::dev));
  log << "train: " << train.size() << " utterances, dev: " << dev.size() << ", T' = "
      << train.front().features.extent(1) << '\n';

  Detector detector(cmd.config.detector_config(), cmd.config.model_seed);
  AdamW optimizer(detector.trainable_parameters(),
                  {cmd.config.train.learning_rate, cmd.config.train.weight_decay});
  DetectorTraining result = train_detector(detector, optimizer, train, dev, cmd.config.train, &log);

  if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
  save_checkpoint(cmd.out, make_checkpoint(CheckpointKind::detector, cmd.config,
                                           manifest.corpus_seed, detector.all_parameters(),
                                           &optimizer));
  if (result.best_dev) {
    Checkpoint best = make_checkpoint(CheckpointKind::detector, cmd.config, manifest.corpus_seed,
                                      *result.best_dev);
    best.step = result.best_dev_step;
    save_checkpoint(cmd.out.string() + ".best-dev", best);
  }

  const fs::path log_path = cmd.out.string() + ".log";
  auto out = open_output(log_path);
  echo_config(out, cmd.config, "# ");
  out << "step\tbatch_loss\ttrain_ce\tdev_eer\n";
  for (const auto& e : result.log) {
    out << e.step << '\t' << format_value(e.batch_loss) << '\t' << format_value(e.train_ce) << '\t'
        << (e.dev_eer ? format_value(*e.dev_eer) : std::string("nan")) << '\n';
  }
  if (result.best_dev) {
    out << "# best_dev_step=" << result.best_dev_step
        << " best_dev_eer=" << format_value(result.best_dev_eer) << '\n';
  }
  check_written(out, log_path);
  log << "final train CE " << result.final_train_ce << ", checkpoint " << cmd.out.string() << '\n';
  return result;
}

// ---- score -----------------------------------------------------------------

ScoreFile cmd_score(const ScoreCommand& cmd, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(cmd.checkpoint);
  const Detector detector = detector_from_checkpoint(ckpt);
  const Manifest manifest = read_manifest(cmd.manifest);
  const auto records = manifest.split(cmd.split);
  if (records.empty()) {
    throw std::runtime_error("manifest has no records in split " + to_string(cmd.split));
  }
  const FeatureExtractor fx(ckpt.config, manifest.corpus_seed, cmd.wav_dir);
  ScoreFile file;
  file.comments.push_back("split=" + to_string(cmd.split));
  file.comments.push_back("corpus_seed=" + std::to_string(manifest.corpus_seed));
  file.comments.push_back("checkpoint_step=" + std::to_string(ckpt.step));
  {
    std::istringstream lines(ckpt.config.to_text());
    std::string line;
    while (std::getline(lines, line))
      if (!line.empty()) file.comments.push_back("config " + line);
  }
  for (const auto& r : records) file.records.push_back({r.utt_id, detector.score(fx.detector_input(r)), r.label});
  if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
  write_scores(cmd.out, file);
  log << "scored " << file.records.size() << " " << to_string(cmd.split) << " utterances to "
      << cmd.out.string() << '\n';
  return file;
}

// ---- eval ------------------------------------------------------------------

namespace {

DetectionRow detection_row(const std::string& subset, const std::vector<ScoreRecord>& scores,
                           const DcfCosts& costs) {
  DetectionRow row;
  row.subset = subset;
  for (const auto& s : scores) (s.label == TrialLabel::bonafide ? row.n_bonafide : row.n_spoof)++;
  row.defined = row.n_bonafide > 0 && row.n_spoof > 0;
  if (row.defined) {
    row.eer = compute_eer(scores);
    row.min_dcf = compute_min_dcf(scores, costs);
    row.act_dcf = compute_act_dcf(scores, costs);
  }
  return row;
}

}  // namespace

EvalReport cmd_eval(const EvalCommand& cmd) {
  cmd.costs.validate();
  const ScoreFile file = read_scores(cmd.scores);
  EvalReport report;
  report.rows.push_back(detection_row("overall", file.records, cmd.costs));

  if (cmd.manifest) {
    const Manifest manifest = read_manifest(*cmd.manifest);
    std::map<std::string, const ManifestRecord*> by_id;
    for (const auto& r : manifest.records) by_id[r.utt_id] = &r;
    const auto seen_list = manifest.seen_apis();
    const std::set<int> seen(seen_list.begin(), seen_list.end());
    std::vector<ScoreRecord> seen_scores, unseen_scores;
    for (const auto& s : file.records) {
      auto it = by_id.find(s.utt_id);
      if (it == by_id.end()) {
        throw std::runtime_error("utterance " + s.utt_id + " is not in the manifest sidecar");
      }
      if (s.label == TrialLabel::bonafide) {
        seen_scores.push_back(s);
        unseen_scores.push_back(s);
      } else if (seen.count(it->second->api_index)) {
        seen_scores.push_back(s);
      } else {
        unseen_scores.push_back(s);
      }
    }
    report.rows.push_back(detection_row("seen", seen_scores, cmd.costs));
    report.rows.push_back(detection_row("unseen", unseen_scores, cmd.costs));
  }

  std::ostringstream os;
  os << "# nesla detection report\n";
  for (const auto& c : file.comments) {
    if (c.rfind("config ", 0) == 0) os << "# " << c.substr(7) << '\n';
    else os << "# " << c << '\n';
  }
  os << "dcf.c_miss = " << format_value(cmd.costs.c_miss) << '\n'
     << "dcf.c_fa = " << format_value(cmd.costs.c_fa) << '\n'
     << "dcf.p_target = " << format_value(cmd.costs.p_target) << '\n';
  for (const auto& row : report.rows) {
    const std::string p = row.subset + ".";
    os << p << "n_bonafide = " << row.n_bonafide << '\n' << p << "n_spoof = " << row.n_spoof << '\n';
    if (!row.defined) {
      os << p << "status = undefined (needs both bonafide and spoof trials)\n";
      continue;
    }
    os << p << "eer = " << format_value(row.eer.eer) << '\n'
       << p << "eer_threshold = " << format_value(row.eer.threshold) << '\n'
       << p << "min_dcf = " << format_value(row.min_dcf.dcf) << '\n'
       << p << "min_dcf_threshold = " << format_value(row.min_dcf.threshold) << '\n'
       << p << "act_dcf = " << format_value(row.act_dcf) << '\n';
  }
  os << "#\n# subset     EER%      minDCF    actDCF\n";
  for (const auto& row : report.rows) {
    char buf[128];
    if (row.defined) {
      std::snprintf(buf, sizeof buf, "# %-9s %8.3f %9.4f %9.4f\n", row.subset.c_str(),
                    100.0 * row.eer.eer, row.min_dcf.dcf, row.act_dcf);
    } else {
      std::snprintf(buf, sizeof buf, "# %-9s %8s %9s %9s\n", row.subset.c_str(), "-", "-", "-");
    }
    os << buf;
  }
  report.text = os.str();
  if (cmd.out) {
    auto out = open_output(*cmd.out);
    out << report.text;
    check_written(out, *cmd.out);
  }
  return report;
}

// ---- trace -----------------------------------------------------------------

namespace {

struct TraceItem {
  const ManifestRecord* record;
  std::vector<Tensor> means;
  std::size_t truth;  // 22-way
};

std::vector<TraceItem> trace_items(const FeatureExtractor& fx,
                                   const std::vector<ManifestRecord>& records) {
  std::vector<TraceItem> out;
  for (const auto& r : records) {
    if (r.label != TrialLabel::spoof) continue;
    const std::size_t truth = is_seen_api(r.api_index) ? static_cast<std::size_t>(r.api_index)
                                                       : kUnseenClass;
    out.push_back({&r, layer_means(fx.stack(r)), truth});
  }
  return out;
}

std::vector<DevSample> dev_samples(const TracerParams& params, const std::vector<TraceItem>& items) {
  std::vector<DevSample> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back({tracer_probabilities(params, it.means), it.truth});
  return out;
}

TraceSplitReport summarize(const std::vector<DevSample>& samples, double threshold,
                           const std::vector<std::size_t>& classes) {
  TraceSplitReport rep;
  rep.n = samples.size();
  rep.table = tabulate(samples, threshold);
  std::vector<std::size_t> seen(classes.begin(), classes.end() - 1);
  const std::size_t unseen[] = {kUnseenClass};
  rep.seen = macro_scores(rep.table, seen);
  rep.unseen = macro_scores(rep.table, unseen);
  rep.overall = macro_scores(rep.table, classes);
  rep.all_classes = macro_f1(rep.table, ClassSubset::overall);
  return rep;
}

void write_split_report(std::ostream& os, const std::string& name, const TraceSplitReport& rep) {
  os << name << ".n = " << rep.n << '\n';
  auto row = [&](const std::string& subset, const MacroScores& m) {
    os << name << '.' << subset << ".precision = " << format_value(m.precision) << '\n'
       << name << '.' << subset << ".recall = " << format_value(m.recall) << '\n'
       << name << '.' << subset << ".f1 = " << format_value(m.f1) << '\n';
  };
  row("seen", rep.seen);
  row("unseen", rep.unseen);
  row("overall", rep.overall);
  os << name << ".all22.f1 = " << format_value(rep.all_classes.f1) << '\n';
  os << name << ".empty_classes =";
  for (auto c : rep.overall.empty_classes) os << ' ' << api_or_unseen(c);
  os << '\n';
}

}  // namespace

TraceSummary cmd_trace(const TraceCommand& cmd, std::ostream& log) {
  cmd.config.validate();
  if (cmd.threshold && !(*cmd.threshold >= 0.0 && *cmd.threshold <= 1.0)) {
    throw std::invalid_argument("trace: threshold must lie in [0, 1]");
  }
  const Manifest manifest = read_manifest(cmd.manifest);
  const FeatureExtractor fx(cmd.config, manifest.corpus_seed, cmd.wav_dir);

  const auto train_records = manifest.split(Split::train);
  const auto dev_records = manifest.split(Split::dev);
  const auto eval_records = manifest.split(Split::eval);
  std::vector<TracerExample> train;
  for (const auto& r : train_records) {
    if (r.label != TrialLabel::spoof || !is_seen_api(r.api_index)) continue;
    train.push_back({r.utt_id, layer_means(fx.stack(r)), static_cast<std::size_t>(r.api_index)});
  }
  if (train.empty()) throw std::runtime_error("trace: train split holds no seen-API spoof records");
  const auto dev_items = trace_items(fx, dev_records);
  const auto eval_items = trace_items(fx, eval_records);

  TraceSummary summary;
  for (int a : manifest.seen_apis()) summary.classes.push_back(static_cast<std::size_t>(a));
  summary.classes.push_back(kUnseenClass);
  log << "tracer: " << train.size() << " train, " << dev_items.size() << " dev, "
      << eval_items.size() << " eval spoof utterances over " << summary.classes.size() - 1
      << " seen APIs\n";

  Rng rng(cmd.config.tracer.seed);
  TracerParams params = init_tracer(cmd.config.tracer_config(), rng);
  ParameterMap map;
  register_parameters(params, "tracer", map);
  AdamW optimizer(map, {cmd.config.tracer.learning_rate, cmd.config.tracer.weight_decay});
  const std::size_t interval = cmd.config.train.eval_interval;
  summary.training = train_tracer(params, optimizer, train, cmd.config.tracer, interval, &log);

  const auto dev = dev_samples(params, dev_items);
  const auto eval = dev_samples(params, eval_items);
  if (cmd.threshold) {
    summary.threshold = *cmd.threshold;
    summary.threshold_source = "override";
  } else if (cmd.config.tracer.threshold >= 0.0) {
    summary.threshold = cmd.config.tracer.threshold;
    summary.threshold_source = "config";
  } else {
    const Calibration cal = calibrate_threshold(dev, summary.classes);
    summary.threshold = cal.threshold;
    summary.calibration_f1 = cal.overall_f1;
    summary.threshold_source = "calibrated";
  }
  summary.dev = summarize(dev, summary.threshold, summary.classes);
  summary.eval = summarize(eval, summary.threshold, summary.classes);

  fs::create_directories(cmd.out_dir);
  Checkpoint ckpt = make_checkpoint(CheckpointKind::tracer, cmd.config, manifest.corpus_seed, map,
                                    &optimizer);
  ckpt.config.tracer.threshold = summary.threshold;
  save_checkpoint(cmd.out_dir / "tracer.ckpt", ckpt);

  {
    const auto path = cmd.out_dir / "decisions.tsv";
    auto out = open_output(path);
    out << "utt_id\ttrue_api\tpred_api\tmax_prob\n";
    for (std::size_t i = 0; i < eval_items.size(); ++i) {
      const TraceDecision d = decide_from_probs(eval[i].probs, summary.threshold);
      out << eval_items[i].record->utt_id << '\t' << api_or_unseen(eval_items[i].truth) << '\t'
          << api_or_unseen(d.predicted) << '\t' << format_value(d.max_prob) << '\n';
    }
    check_written(out, path);
  }
  {
    const auto path = cmd.out_dir / "embeddings.csv";
    auto out = open_output(path);
    out << "utt_id,split,api_id";
    for (std::size_t c = 0; c < cmd.config.encoder.channels; ++c) out << ",e" << c;
    out << '\n';
    NoGradGuard no_grad;
    for (const auto* items : {&dev_items, &eval_items}) {
      for (const auto& it : *items) {
        const Tensor e = attention_pool(it.means, params);
        out << it.record->utt_id << ',' << to_string(it.record->split) << ','
            << it.record->api_id();
        for (double v : e.values()) out << ',' << format_value(v);
        out << '\n';
      }
    }
    check_written(out, path);
  }
  {
    const auto path = cmd.out_dir / "report.txt";
    auto out = open_output(path);
    out << "# nesla source tracing report\n";
    echo_config(out, cmd.config, "# ");
    out << "classes =";
    for (auto c : summary.classes) out << ' ' << api_or_unseen(c);
    out << '\n'
        << "train.final_ce = " << format_value(summary.training.final_train_ce) << '\n'
        << "threshold = " << format_value(summary.threshold) << '\n'
        << "threshold_source = " << summary.threshold_source << '\n';
    if (summary.threshold_source == "calibrated")
      out << "dev.calibration_f1 = " << format_value(summary.calibration_f1) << '\n';
    write_split_report(out, "dev", summary.dev);
    write_split_report(out, "eval", summary.eval);
    out << "#\n#          seen (P / R / F1)       unseen (P / R / F1)     overall (P / R / F1)\n";
    for (const auto& [name, rep] : {std::pair{"dev", &summary.dev}, std::pair{"eval", &summary.eval}}) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "# %-5s %.3f / %.3f / %.3f   %.3f / %.3f / %.3f   %.3f / %.3f / %.3f\n",
                    name, rep->seen.precision, rep->seen.recall, rep->seen.f1, rep->unseen.precision,
                    rep->unseen.recall, rep->unseen.f1, rep->overall.precision, rep->overall.recall,
                    rep->overall.f1);
      out << buf;
    }
    check_written(out, path);
  }
  log << "threshold " << summary.threshold << " (" << summary.threshold_source << "), eval seen F1 "
      << summary.eval.seen.f1 << ", unseen recall " << summary.eval.unseen.recall << '\n';
  return summary;
}

// ---- density ---------------------------------------------------------------

DensityTable score_density(const std::vector<ScoreRecord>& scores, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("density: bins must be >= 1");
  if (scores.empty()) throw std::invalid_argument("density: no scores");
  double lo = scores.front().score, hi = lo;
  std::size_t n_bona = 0, n_spoof = 0;
  for (const auto& s : scores) {
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
    (s.label == TrialLabel::bonafide ? n_bona : n_spoof)++;
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  DensityTable t;
  t.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) t.edges[b] = lo + width * static_cast<double>(b);
  t.edges.back() = hi;
  std::vector<std::size_t> cb(bins, 0), cs(bins, 0);
  for (const auto& s : scores) {
    auto b = static_cast<std::size_t>((s.score - lo) / width);
    b = std::min(b, bins - 1);  // the maximum lands in the last bin
    (s.label == TrialLabel::bonafide ? cb : cs)[b]++;
  }
  t.bonafide.resize(bins);
  t.spoof.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    t.bonafide[b] = n_bona ? static_cast<double>(cb[b]) / (static_cast<double>(n_bona) * width) : 0.0;
    t.spoof[b] = n_spoof ? static_cast<double>(cs[b]) / (static_cast<double>(n_spoof) * width) : 0.0;
  }
  return t;
}

DensityTable cmd_density(const DensityCommand& cmd) {
  const ScoreFile file = read_scores(cmd.scores);
  const DensityTable t = score_density(file.records, cmd.bins);
  auto out = open_output(cmd.out);
  out << "bin_lo,bin_hi,bonafide_density,spoof_density\n";
  for (std::size_t b = 0; b < cmd.bins; ++b) {
    out << format_value(t.edges[b]) << ',' << format_value(t.edges[b + 1]) << ','
        << format_value(t.bonafide[b]) << ',' << format_value(t.spoof[b]) << '\n';
  }
  check_written(out, cmd.out);
  return t;
}

}  // namespace nesla
