#include <unistd.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nesla/checkpoint.hpp"
#include "nesla/commands.hpp"
#include "nesla/score_io.hpp"
#include "oracles.hpp"

using namespace nesla;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nesla-test-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny_config() {
  RunConfig c;
  c.encoder.layers = 3;
  c.encoder.channels = 8;
  c.splits = 2;
  c.d_attn = 4;
  c.segment_seconds = 1.0;
  c.train.learning_rate = 3e-3;
  c.train.max_steps = 6;
  c.train.eval_interval = 3;
  c.train.batch_size = 4;
  c.tracer.learning_rate = 1e-2;
  c.tracer.max_steps = 20;
  return c;
}

fs::path tiny_manifest(const fs::path& dir, std::vector<int> apis, std::size_t n, std::size_t n_bona) {
  GenCorpusCommand g;
  g.corpus.n_per_api = n;
  g.corpus.n_bonafide = n_bona;
  g.corpus.apis = std::move(apis);
  g.manifest = dir / "manifest.tsv";
  std::ostringstream log;
  cmd_gen_corpus(g, log);
  return g.manifest;
}

}  // namespace

TEST_CASE("run config text round trip and overrides") {
  RunConfig c = tiny_config();
  c.dcf.p_target = 0.125;
  c.variant = Variant::nes2net_x;
  const auto text = c.to_text();
  CHECK(RunConfig::from_text(text).to_text() == text);
  CHECK(text.find("[model]") != std::string::npos);
  CHECK(text.find("[dcf]") != std::string::npos);

  RunConfig d;
  d.set("K", "2");
  CHECK(d.window_radius == 2);
  d.set("train.max_steps", "17");
  CHECK(d.train.max_steps == 17);
  CHECK_THROWS_AS(d.set("max_steps", "3"), std::invalid_argument);
  CHECK_THROWS_AS(d.set("model.nope", "3"), std::invalid_argument);
  CHECK_THROWS_AS(d.set("J", "two"), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_text("J = 4\n"), std::invalid_argument);

  RunConfig bad;
  bad.splits = 3;  // 32 channels do not split into 3
  bad.encoder.channels = 32;
  CHECK_THROWS(bad.validate());
  RunConfig lr;
  lr.train.learning_rate = 0;
  CHECK_THROWS_AS(lr.validate(), std::invalid_argument);
  CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("score files") {
  ScoreFile f;
  f.records = {{"u1", 0.1, TrialLabel::bonafide}, {"u2", -1.0 / 3, TrialLabel::spoof}};
  f.comments = {"split=eval"};
  std::stringstream ss;
  write_scores(ss, f);
  CHECK(ss.str().rfind(kOrientationHeader, 0) == 0);
  auto g = read_scores(ss);
  REQUIRE(g.records.size() == 2);
  CHECK(g.records[1].score == -1.0 / 3);
  CHECK(g.records[0].label == TrialLabel::bonafide);
  CHECK(g.comments == f.comments);

  std::istringstream headless("u1\t0.5\tbonafide\n");
  CHECK_THROWS(read_scores(headless));
  std::istringstream flipped("#orientation=spoof-high\nu1\t0.5\tbonafide\n");
  CHECK_THROWS(read_scores(flipped));
}

TEST_CASE("score densities") {
  std::vector<ScoreRecord> s;
  Rng rng(5);
  for (int i = 0; i < 300; ++i) s.push_back({"b", rng.normal(3, 0.3), TrialLabel::bonafide});
  for (int i = 0; i < 200; ++i) s.push_back({"s", rng.normal(-3, 0.3), TrialLabel::spoof});
  auto d = score_density(s, 40);
  REQUIRE(d.edges.size() == 41);
  double ib = 0, is = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    ib += d.bonafide[i] * (d.edges[i + 1] - d.edges[i]);
    is += d.spoof[i] * (d.edges[i + 1] - d.edges[i]);
  }
  const double w = d.edges[1] - d.edges[0];
  CHECK(std::abs(ib - 1) <= 1e-9 * w);
  CHECK(std::abs(is - 1) <= 1e-9 * w);

  // histogram oracle: direct counts into the same edges
  auto mode = [&](TrialLabel lab) {
    std::vector<int> counts(40, 0);
    for (const auto& r : s) {
      if (r.label != lab) continue;
      std::size_t b = 0;
      while (b + 1 < 40 && r.score >= d.edges[b + 1]) ++b;
      ++counts[b];
    }
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  };
  auto argmax = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  CHECK(argmax(d.bonafide) == mode(TrialLabel::bonafide));
  CHECK(argmax(d.spoof) == mode(TrialLabel::spoof));
  CHECK(argmax(d.bonafide) != argmax(d.spoof));

  std::vector<ScoreRecord> flat{{"a", 1, TrialLabel::bonafide}, {"b", 1, TrialLabel::spoof}};
  auto f = score_density(flat, 4);
  CHECK(f.edges.front() < 1.0);
  CHECK(f.edges.back() > 1.0);
  CHECK_THROWS(score_density(flat, 0));

  const auto dir = scratch("density");
  ScoreFile sf{s, {}};
  write_scores(dir / "s.tsv", sf);
  cmd_density({dir / "s.tsv", 40, dir / "a.csv"});
  cmd_density({dir / "s.tsv", 40, dir / "b.csv"});
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv").rfind("bin_lo,bin_hi,bonafide_density,spoof_density", 0) == 0);
}

TEST_CASE("eval report equals library metrics") {
  const auto dir = scratch("eval");
  Rng rng(9);
  ScoreFile sf;
  for (int i = 0; i < 40; ++i)
    sf.records.push_back({"x" + std::to_string(i), rng.normal(i % 2 ? 1 : -1, 1),
                          i % 2 ? TrialLabel::bonafide : TrialLabel::spoof});
  write_scores(dir / "s.tsv", sf);
  EvalCommand cmd;
  cmd.scores = dir / "s.tsv";
  cmd.out = dir / "report.txt";
  auto rep = cmd_eval(cmd);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].eer.eer == compute_eer(sf.records).eer);
  CHECK(rep.rows[0].min_dcf.dcf == compute_min_dcf(sf.records, cmd.costs).dcf);
  CHECK(rep.rows[0].act_dcf == compute_act_dcf(sf.records, cmd.costs));
  const auto text = slurp(dir / "report.txt");
  CHECK(text == rep.text);
  CHECK(text.find("overall.eer = " + format_value(rep.rows[0].eer.eer)) != std::string::npos);
  CHECK(text.find("p_target") != std::string::npos);

  // perfect scores
  ScoreFile perfect{{{"a", 2, TrialLabel::bonafide}, {"b", -2, TrialLabel::spoof}}, {}};
  write_scores(dir / "p.tsv", perfect);
  cmd.scores = dir / "p.tsv";
  cmd.out.reset();
  auto p = cmd_eval(cmd);
  CHECK(p.rows[0].eer.eer == 0.0);
  CHECK(p.rows[0].min_dcf.dcf == 0.0);
}

TEST_CASE("gen-corpus counts and determinism") {
  const auto dir = scratch("gen");
  GenCorpusCommand g;
  g.corpus.n_per_api = 10;
  g.manifest = dir / "a.tsv";
  std::ostringstream log;
  auto m = cmd_gen_corpus(g, log);
  std::size_t spoof = 0;
  for (const auto& r : m.records) spoof += r.label == TrialLabel::spoof;
  CHECK(spoof == 300);
  g.manifest = dir / "b.tsv";
  cmd_gen_corpus(g, log);
  CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));
  g.manifest = dir / "missing" / "deeper" / "c.tsv";
  fs::create_directories(dir / "missing");
  fs::permissions(dir / "missing", fs::perms::owner_read | fs::perms::owner_exec);
  if (::getuid() != 0) CHECK_THROWS(cmd_gen_corpus(g, log));
  fs::permissions(dir / "missing", fs::perms::owner_all);
}

TEST_CASE("train, checkpoint round trip and score") {
  const auto dir = scratch("train");
  const auto manifest = tiny_manifest(dir, {0, 1}, 10, 20);
  std::ostringstream log;
  TrainCommand t{tiny_config(), manifest, dir / "det.ckpt", std::nullopt};
  auto run = cmd_train_detector(t, log);
  REQUIRE(run.log.size() == 2);
  CHECK(run.log[0].step == 3);
  CHECK(run.log[1].step == 6);
  CHECK(run.log[1].dev_eer.has_value());
  CHECK(fs::exists(dir / "det.ckpt.best-dev"));
  CHECK(fs::exists(dir / "det.ckpt.log"));

  t.out = dir / "det2.ckpt";
  auto again = cmd_train_detector(t, log);
  CHECK(again.final_train_ce == run.final_train_ce);
  CHECK(slurp(dir / "det.ckpt") == slurp(dir / "det2.ckpt"));

  auto ck = load_checkpoint(dir / "det.ckpt");
  CHECK(ck.step == 6);
  CHECK(ck.config.to_text() == t.config.to_text());
  save_checkpoint(dir / "det3.ckpt", ck);
  CHECK(slurp(dir / "det3.ckpt") == slurp(dir / "det.ckpt"));

  ScoreCommand s{dir / "det.ckpt", manifest, Split::train, dir / "a.tsv", std::nullopt};
  auto scores = cmd_score(s, log);
  s.checkpoint = dir / "det3.ckpt";
  s.out = dir / "b.tsv";
  cmd_score(s, log);
  const auto a = read_scores(dir / "a.tsv");
  const auto b = read_scores(dir / "b.tsv");
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].score == b.records[i].score);

  auto m = read_manifest(manifest);
  CHECK(scores.records.size() == m.split(Split::train).size());

  ck.kind = CheckpointKind::tracer;
  CHECK_THROWS(detector_from_checkpoint(ck));
  std::ofstream(dir / "junk.ckpt") << "{\"format\": \"other\"}";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), std::runtime_error);
}

TEST_CASE("trace with a zero threshold never rejects") {
  const auto dir = scratch("trace");
  const auto manifest = tiny_manifest(dir, {0, 1, 23, 28}, 10, 10);
  TraceCommand t{tiny_config(), manifest, dir / "out", std::nullopt, 0.0};
  std::ostringstream log;
  auto sum = cmd_trace(t, log);
  CHECK(sum.threshold_source == "override");
  CHECK(sum.eval.unseen.recall == 0.0);
  CHECK(sum.dev.unseen.recall == 0.0);

  // overall-22 F1 against the oracle on the same table
  std::vector<std::vector<double>> dense(kSeenApis + 1, std::vector<double>(kSeenApis + 1));
  for (std::size_t i = 0; i <= kSeenApis; ++i)
    for (std::size_t j = 0; j <= kSeenApis; ++j) dense[i][j] = static_cast<double>(sum.eval.table.at(i, j));
  double f = 0;
  for (std::size_t c = 0; c <= kSeenApis; ++c) f += oracle::class_f1(dense, c);
  CHECK(std::abs(sum.eval.all_classes.f1 - f / 22) < 1e-15);

  for (const char* name : {"tracer.ckpt", "decisions.tsv", "embeddings.csv", "report.txt"})
    CHECK(fs::exists(dir / "out" / name));
  const auto report = slurp(dir / "out" / "report.txt");
  t.out_dir = dir / "again";
  cmd_trace(t, log);
  for (const char* name : {"tracer.ckpt", "decisions.tsv", "embeddings.csv", "report.txt"})
    CHECK(slurp(dir / "out" / name) == slurp(dir / "again" / name));
  CHECK(report.find("threshold_source = override") != std::string::npos);

  // spoof-only train split is required
  const auto empty = tiny_manifest(scratch("trace-empty"), {23}, 10, 10);
  t.manifest = empty;
  CHECK_THROWS(cmd_trace(t, log));
}
