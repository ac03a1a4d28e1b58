#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "nesla/corpus.hpp"
#include "oracles.hpp"

using namespace nesla;

namespace {

std::map<std::pair<int, Split>, std::size_t> count_spoof(const Manifest& m) {
  std::map<std::pair<int, Split>, std::size_t> c;
  for (const auto& r : m.records)
    if (r.label == TrialLabel::spoof) c[{r.api_index, r.split}]++;
  return c;
}

}  // namespace

TEST_CASE("api naming") {
  CHECK(api_name(0) == "A0");
  CHECK(api_name(29) == "A29");
  CHECK(api_name(-1) == "bonafide");
  CHECK(parse_api_name("A17") == 17);
  CHECK(parse_api_name("bonafide") == -1);
  CHECK_THROWS(parse_api_name("A30"));
  CHECK_THROWS(parse_api_name("B3"));
  CHECK(is_seen_api(20));
  CHECK_FALSE(is_seen_api(21));
}

TEST_CASE("apportionment") {
  CHECK(apportion(10, {7, 1, 2}) == std::vector<std::size_t>{7, 1, 2});
  CHECK(apportion(15, {7, 1, 2}) == std::vector<std::size_t>{11, 1, 3});  // 10.5 1.5 3 -> tie to the first
  CHECK(apportion(1, {1, 1}) == std::vector<std::size_t>{1, 0});
  auto a = apportion(1000, {3, 3, 3});
  CHECK(a[0] + a[1] + a[2] == 1000);
}

TEST_CASE("manifest follows the split protocol") {
  for (std::size_t n : {10u, 100u}) {
    CorpusOptions opt;
    opt.n_per_api = n;
    Manifest m = build_manifest(opt);
    auto c = count_spoof(m);
    const auto expect = apportion(n, {7, 1, 2});
    for (int a = 0; a < 21; ++a) {
      CHECK(c[{a, Split::train}] == expect[0]);
      CHECK(c[{a, Split::dev}] == expect[1]);
      CHECK(c[{a, Split::eval}] == expect[2]);
    }
    for (int a = 21; a < 24; ++a) CHECK(c[{a, Split::dev}] == n);
    for (int a = 24; a < 30; ++a) CHECK(c[{a, Split::eval}] == n);
    std::size_t spoof = 0;
    for (const auto& [k, v] : c) spoof += v;
    CHECK(spoof == 30 * n);
    // 1:1 per split
    for (Split s : {Split::train, Split::dev, Split::eval}) {
      std::size_t b = 0, sp = 0;
      for (const auto& r : m.split(s)) (r.label == TrialLabel::bonafide ? b : sp)++;
      CHECK(b == sp);
    }
    std::set<std::string> ids;
    for (const auto& r : m.records) {
      CHECK(ids.insert(r.utt_id).second);
      CHECK(r.duration_s >= 2.0);
      CHECK(r.duration_s <= 6.0);
    }
  }
  CHECK(build_manifest({42, 10, 0, {}}).seen_apis().size() == 21);
  CHECK_THROWS_AS(build_manifest({42, 9, 0, {}}), std::invalid_argument);
}

TEST_CASE("A25 appears only in eval and seeds are not reused across splits") {
  Manifest m = build_manifest({7, 20, 0, {}});
  std::map<int, std::map<std::uint64_t, std::set<Split>>> seeds;
  for (const auto& r : m.records) {
    if (r.api_index == 25) CHECK(r.split == Split::eval);
    seeds[r.api_index][r.seed].insert(r.split);
    if (r.split == Split::train) CHECK(r.api_index <= 20);
    if (r.split == Split::dev && r.label == TrialLabel::spoof && !is_seen_api(r.api_index)) {
      CHECK(r.api_index >= 21);
      CHECK(r.api_index <= 23);
    }
  }
  for (const auto& [api, by_seed] : seeds)
    for (const auto& [seed, splits] : by_seed) CHECK(splits.size() == 1);
}

TEST_CASE("manifest text round trip and determinism") {
  CorpusOptions opt{11, 10, 0, {0, 1, 2, 21, 24}};
  Manifest m = build_manifest(opt);
  std::ostringstream a, b;
  write_manifest(a, m);
  write_manifest(b, build_manifest(opt));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("# nesla-manifest corpus_seed=11 generator_version=1\n", 0) == 0);
  std::istringstream in(a.str());
  Manifest back = read_manifest(in);
  CHECK(back.corpus_seed == 11);
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].utt_id == m.records[i].utt_id);
    CHECK(back.records[i].seed == m.records[i].seed);
    CHECK(back.records[i].split == m.records[i].split);
    CHECK(back.records[i].api_index == m.records[i].api_index);
  }
  std::istringstream bad("# nesla-manifest corpus_seed=1 generator_version=1\nA0-1\t5\tspoof\n");
  CHECK_THROWS(read_manifest(bad));
}

TEST_CASE("generators") {
  SUBCASE("deterministic and peak-normalized") {
    const auto spec = make_api_spec(3, 42);
    CHECK(spec.family == Family::chirp_mix);
    CHECK(make_api_spec(3, 42).params == spec.params);
    auto a = generate_utterance(spec, 77, 2.5);
    auto b = generate_utterance(spec, 77, 2.5);
    CHECK(a.samples == b.samples);
    CHECK(a.samples.size() == 40000);
  }
  SUBCASE("peak amplitude never exceeds 1") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const int api = static_cast<int>(seed % 31) - 1;
      const auto spec = api < 0 ? bonafide_spec(5) : make_api_spec(api, 5);
      auto w = generate_utterance(spec, seed, 1.0);
      double peak = 0;
      for (double v : w.samples) peak = std::max(peak, std::abs(v));
      CHECK(peak <= 1.0);
    }
  }
  SUBCASE("distinct APIs get distinct parameters") {
    for (int a = 0; a < kNumApis; ++a)
      for (int b = a + 1; b < kNumApis; ++b) CHECK_FALSE(make_api_spec(a, 42).params == make_api_spec(b, 42).params);
  }
  SUBCASE("spectral centroids of different APIs differ measurably") {
    // same utterance seed, different generators: centroid gap of at least 50 Hz
    std::vector<double> centroid;
    for (int a : {0, 1, 2, 3, 4, -1}) {
      const auto spec = a < 0 ? bonafide_spec(42) : make_api_spec(a, 42);
      centroid.push_back(oracle::spectral_centroid(generate_utterance(spec, 123, 1.0).samples, 16000.0));
    }
    for (std::size_t i = 0; i < centroid.size(); ++i)
      for (std::size_t j = i + 1; j < centroid.size(); ++j) {
        INFO(i << " vs " << j << ": " << centroid[i] << " " << centroid[j]);
        CHECK(std::abs(centroid[i] - centroid[j]) > 50.0);
      }
  }
  CHECK_THROWS(generate_utterance(make_api_spec(0, 1), 1, 0.5));
  CHECK_THROWS(generate_utterance(make_api_spec(0, 1), 1, 10.5));
}
