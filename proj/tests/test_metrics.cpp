#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nesla/metrics.hpp"
#include "nesla/rng.hpp"
#include "oracles.hpp"

using namespace nesla;

namespace {

std::vector<ScoreRecord> make(const std::vector<double>& bona, const std::vector<double>& spoof) {
  std::vector<ScoreRecord> s;
  for (double b : bona) s.push_back({"b", b, TrialLabel::bonafide});
  for (double x : spoof) s.push_back({"s", x, TrialLabel::spoof});
  return s;
}

std::vector<ScoreRecord> random_set(Rng& rng, std::size_t n) {
  std::vector<ScoreRecord> s;
  const bool ties = rng.below(3) == 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool bona = i == 0 ? true : i == 1 ? false : rng.below(2) == 0;
    double v = rng.normal(bona ? 1.0 : -1.0, 1.5);
    if (ties) v = std::round(v * 2) / 2;
    s.push_back({"u", v, bona ? TrialLabel::bonafide : TrialLabel::spoof});
  }
  return s;
}

}  // namespace

TEST_CASE("EER examples") {
  CHECK(compute_eer(make({0.9, 0.8}, {0.1, 0.2})).eer == 0.0);
  CHECK(compute_eer(make({0.1, 0.2}, {0.8, 0.9})).eer == 1.0);
  CHECK(oracle::eer(make({0.1, 0.2}, {0.8, 0.9})) == 1.0);
  auto r = compute_eer(make({0.9, 0.7, 0.6}, {0.8, 0.2, 0.1}));
  CHECK(std::abs(r.eer - 1.0 / 3) < 1e-15);
  CHECK(std::abs(r.threshold - 0.65) < 1e-12);
  // interpolated crossing: one bonafide, two spoof, fully overlapping
  auto i = compute_eer(make({0.5}, {0.4, 0.6}));
  CHECK(std::abs(i.eer - oracle::eer(make({0.5}, {0.4, 0.6}))) < 1e-15);
  CHECK_THROWS_AS(compute_eer(make({0.5}, {})), std::invalid_argument);
  CHECK_THROWS_AS(compute_eer(make({NAN}, {0.1})), std::invalid_argument);
}

TEST_CASE("DCF examples") {
  DcfCosts c;
  CHECK(compute_min_dcf(make({0.9, 0.8}, {0.1, 0.2}), c).dcf == 0.0);
  CHECK(std::abs(compute_min_dcf(make({0.5, 0.5}, {0.5, 0.5}), c).dcf - 1.0) < 1e-15);
  // separable LLRs straddling the Bayes threshold ln(10*0.95/0.05) ~ 5.25
  CHECK(compute_act_dcf(make({6.0, 7.5}, {1.0, -3.0}), c) == 0.0);
  CHECK(std::abs(c.bayes_threshold() - std::log(190.0)) < 1e-15);
  DcfCosts bad = c;
  bad.p_target = 1.0;
  CHECK_THROWS(compute_min_dcf(make({1}, {0}), bad));
}

TEST_CASE("detection metrics equal brute-force oracles") {
  Rng rng(12345);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_set(rng, 2 + rng.below(60));
    DcfCosts c{0.5 + rng.uniform() * 2, 0.5 + rng.uniform() * 20, 0.01 + 0.98 * rng.uniform()};
    const double eer = compute_eer(s).eer;
    CHECK(std::abs(eer - oracle::eer(s)) <= 1e-12);
    CHECK(eer >= 0.0);
    CHECK(eer <= 1.0);
    const double mn = compute_min_dcf(s, c).dcf;
    CHECK(std::abs(mn - oracle::min_dcf(s, c)) <= 1e-12);
    const double act = compute_act_dcf(s, c);
    CHECK(act == oracle::act_dcf(s, c));
    CHECK(mn <= act + 1e-15);
    CHECK(mn <= 1.0 + 1e-12);

    // strictly increasing transforms
    auto t = s;
    for (auto& r : t) r.score = std::exp(r.score / 4);
    CHECK(std::abs(compute_eer(t).eer - eer) <= 1e-12);
    for (auto& r : t) r.score = 3 * r.score - 7;
    CHECK(std::abs(compute_eer(t).eer - eer) <= 1e-12);

    // swapping labels mirrors FAR and FRR at every operating point
    auto sw = s;
    for (auto& r : sw) r.label = r.label == TrialLabel::bonafide ? TrialLabel::spoof : TrialLabel::bonafide;
    auto p = sweep_operating_points(s);
    auto q = sweep_operating_points(sw);
    REQUIRE(p.size() == q.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      CHECK(std::abs(q[k].far - (1 - p[k].frr)) < 1e-15);
      CHECK(std::abs(q[k].frr - (1 - p[k].far)) < 1e-15);
    }
  }
}

TEST_CASE("confusion table and macro scores") {
  ConfusionTable t(3);
  const std::size_t m[3][3] = {{5, 1, 0}, {0, 4, 2}, {1, 0, 7}};
  std::vector<std::vector<double>> dense(3, std::vector<double>(3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      t.add(i, j, m[i][j]);
      dense[i][j] = static_cast<double>(m[i][j]);
    }
  const std::size_t all[] = {0, 1, 2};
  auto macro = macro_scores(t, all);
  // hand values: P = 5/6, 4/5, 7/9; R = 5/6, 4/6, 7/8
  const double f0 = 5.0 / 6, f1 = 2 * (0.8 * 4 / 6.0) / (0.8 + 4 / 6.0),
               f2 = 2 * (7 / 9.0 * 7 / 8.0) / (7 / 9.0 + 7 / 8.0);
  CHECK(std::abs(macro.f1 - (f0 + f1 + f2) / 3) < 1e-15);
  CHECK(std::abs(macro.f1 - (oracle::class_f1(dense, 0) + oracle::class_f1(dense, 1) + oracle::class_f1(dense, 2)) / 3) < 1e-15);
  CHECK(std::abs(macro.precision - (5.0 / 6 + 0.8 + 7.0 / 9) / 3) < 1e-15);
  CHECK(std::abs(macro.recall - (5.0 / 6 + 4.0 / 6 + 7.0 / 8) / 3) < 1e-15);
  CHECK(t.total() == 20);
  CHECK(t.support(1) == 6);
  CHECK(t.predictions(2) == 9);

  // permutation invariance
  const std::size_t perm[3] = {2, 0, 1};
  ConfusionTable u(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) u.add(perm[i], perm[j], m[i][j]);
  CHECK(std::abs(macro_scores(u, all).f1 - macro.f1) < 1e-15);

  // empty class
  ConfusionTable e(3);
  e.add(0, 0, 4);
  e.add(2, 2, 1);
  auto me = macro_scores(e, all);
  CHECK(std::abs(me.f1 - 2.0 / 3) < 1e-15);
  REQUIRE(me.empty_classes.size() == 1);
  CHECK(me.empty_classes[0] == 1);
  CHECK_THROWS_AS(e.add(3, 0), std::out_of_range);
}
