#include <cmath>

#include "doctest.h"
#include "nesla/detector.hpp"
#include "nesla/grad_check.hpp"
#include "nesla/local_attention.hpp"
#include "oracles.hpp"

using namespace nesla;

namespace {

using Mat = std::vector<std::vector<double>>;

Tensor from(const Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return Tensor({m.size(), m[0].size()}, v);
}

std::vector<double> mv(const Mat& m, const std::vector<double>& x) {
  std::vector<double> y(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i][j] * x[j];
  return y;
}

LAParams random_params(std::size_t width, std::size_t C, std::size_t d, Rng& rng) {
  LAConfig cfg;
  cfg.attn_dim = d;
  return init_la_params(cfg, width, C, rng);
}

std::vector<Tensor> random_blocks(std::size_t J, std::size_t w, std::size_t T, Rng& rng) {
  std::vector<Tensor> h;
  for (std::size_t j = 0; j < J; ++j) h.push_back(random_tensor({w, T}, rng, 1.0, false));
  return h;
}

}  // namespace

TEST_CASE("neighborhood clamps at the edges") {
  // j is 0-based here: j=0 is the first block
  CHECK(neighborhood(0, 8, 1) == std::vector<std::size_t>{0, 1});
  CHECK(neighborhood(3, 8, 1) == std::vector<std::size_t>{2, 3, 4});
  CHECK(neighborhood(7, 8, 1) == std::vector<std::size_t>{6, 7});
  for (std::size_t j = 0; j < 8; ++j) CHECK(neighborhood(j, 8, 0) == std::vector<std::size_t>{j});
  CHECK(neighborhood(2, 8, 10).size() == 8);
}

TEST_CASE("local attention special cases") {
  Rng rng(1);
  SUBCASE("single neighbour with Wo Wv = I returns h_j") {
    LAParams p = random_params(3, 6, 4, rng);
    p.w_value = Tensor({3, 3}, {2, 0, 0, 0, 4, 0, 0, 0, -1});
    p.w_out = Tensor({3, 3}, {0.5, 0, 0, 0, 0.25, 0, 0, 0, -1});
    Tensor h = random_tensor({3, 5}, rng, 1.0, false);
    const Tensor nb[] = {h};
    auto r = local_attention(h, nb, p);
    CHECK(oracle::max_abs_diff(r.output, h) < 1e-15);
  }
  SUBCASE("identical neighbours: the result does not depend on the window size") {
    LAParams p = random_params(2, 4, 3, rng);
    Tensor h = random_tensor({2, 4}, rng, 1.0, false);
    const Tensor one[] = {h};
    const Tensor three[] = {h, h, h};
    auto a = local_attention(h, one, p);
    auto b = local_attention(h, three, p);
    CHECK(oracle::max_abs_diff(a.output, b.output) < 1e-14);
  }
  SUBCASE("two neighbours, d_attn = 1, scalar closed form") {
    LAParams p;
    const double wq = 0.7, wk = -1.1, wv = 1.9, wo = 0.6;
    p.w_query = Tensor({1, 1}, {wq});
    p.w_key = Tensor({1, 1}, {wk});
    p.w_value = Tensor({1, 1}, {wv});
    p.w_out = Tensor({1, 1}, {wo});
    const double hj = 0.9, hn = -0.4;
    const Tensor nb[] = {Tensor({1, 1}, {hj}), Tensor({1, 1}, {hn})};
    auto r = local_attention(nb[0], nb, p);
    const double q = wq * hj;
    const double e0 = std::exp(q * wk * hj), e1 = std::exp(q * wk * hn);
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    CHECK(std::abs(r.output.item() - wo * (a0 * wv * hj + a1 * wv * hn)) < 1e-15);
    CHECK(std::abs(r.weights.at(0) - a0) < 1e-15);
  }
  SUBCASE("attention weights are a distribution per frame") {
    LAParams p = random_params(4, 16, 8, rng);
    auto h = random_blocks(3, 4, 9, rng);
    auto r = local_attention(h[1], h, p);
    for (std::size_t t = 0; t < 9; ++t) {
      double total = 0;
      for (std::size_t m = 0; m < 3; ++m) {
        CHECK(r.weights.at(m, t) >= 0);
        total += r.weights.at(m, t);
      }
      CHECK(std::abs(total - 1) < 1e-12);
    }
    CHECK(r.output.shape() == h[1].shape());
  }
  SUBCASE("empty window") {
    LAParams p = random_params(2, 4, 2, rng);
    CHECK_THROWS(local_attention(Tensor::zeros({2, 3}), std::span<const Tensor>{}, p));
  }
}

TEST_CASE("head: hand computation at J=2, C=4, T'=1") {
  const Mat wq{{0.3, -0.2}}, wk{{0.5, 0.4}};
  const Mat wv{{1.0, 0.2}, {-0.3, 0.8}}, wo{{0.6, -0.1}, {0.2, 0.9}};
  const Mat fc{{0.1, -0.2, 0.3, 0.4}, {-0.5, 0.6, 0.7, -0.8}};
  const std::vector<double> fb{0.05, -0.05};
  LAParams p{from(wq), from(wk), from(wv), from(wo), from(fc), Tensor({2}, fb)};
  LAConfig cfg;
  cfg.window_radius = 1;
  cfg.attn_dim = 1;
  const std::vector<std::vector<double>> h{{0.7, -1.2}, {0.4, 0.9}};
  const std::vector<Tensor> blocks{Tensor({2, 1}, h[0]), Tensor({2, 1}, h[1])};
  Tensor logits = la_head_forward(blocks, p, cfg);

  std::vector<double> o;
  for (std::size_t j = 0; j < 2; ++j) {
    const double q = mv(wq, h[j])[0];
    std::vector<double> s, vsum(2, 0.0);
    for (std::size_t m = 0; m < 2; ++m) s.push_back(std::exp(q * mv(wk, h[m])[0]));
    for (std::size_t m = 0; m < 2; ++m) {
      const auto v = mv(wv, h[m]);
      for (int c = 0; c < 2; ++c) vsum[c] += s[m] / (s[0] + s[1]) * v[c];
    }
    const auto y = mv(wo, vsum);
    for (int c = 0; c < 2; ++c) o.push_back(h[j][c] + y[c]);
  }
  const auto expect = mv(fc, o);
  CHECK(std::abs(logits.at(0) - (expect[0] + fb[0])) < 1e-14);
  CHECK(std::abs(logits.at(1) - (expect[1] + fb[1])) < 1e-14);
  CHECK(std::abs(detection_score(logits) - (logits.at(0) - logits.at(1))) == 0);
}

TEST_CASE("head: zero blocks give the FC bias; zero Wo gives the concat head") {
  Rng rng(4);
  LAParams p = random_params(2, 8, 4, rng);
  LAConfig cfg;
  std::vector<Tensor> zeros(4, Tensor::zeros({2, 5}));
  Tensor logits = la_head_forward(zeros, p, cfg);
  CHECK(oracle::max_abs_diff(logits, p.fc_bias) == 0);

  p.w_out = Tensor::zeros({2, 2});
  for (int trial = 0; trial < 20; ++trial) {
    auto h = random_blocks(4, 2, 6, rng);
    CHECK(oracle::max_abs_diff(la_head_forward(h, p, cfg), concat_pool_head(h, p)) <= 1e-9);
  }
}

TEST_CASE("locality: y_j depends on h_m only inside the window") {
  Rng rng(5);
  for (std::size_t K : {0u, 1u, 2u}) {
    LAParams p = random_params(2, 16, 3, rng);
    auto h = random_blocks(8, 2, 4, rng);
    auto base = local_attention_sweep(h, p, K);
    for (std::size_t m = 0; m < 8; ++m) {
      auto bumped = h;
      bumped[m] = add(h[m], Tensor::full({2, 4}, 0.3));
      auto y = local_attention_sweep(bumped, p, K);
      for (std::size_t j = 0; j < 8; ++j) {
        const bool inside = (j > m ? j - m : m - j) <= K;
        CHECK((oracle::max_abs_diff(y[j], base[j]) > 0) == inside);
      }
    }
  }
}

TEST_CASE("head and detector gradient checks") {
  Rng rng(6);
  LAConfig cfg;
  cfg.attn_dim = 3;
  LAParams p = random_params(2, 8, 3, rng);
  ParameterMap map;
  register_parameters(p, "head", map);
  auto leaves = map.tensors();
  auto h = random_blocks(4, 2, 5, rng);
  for (auto& b : h) leaves.push_back(b);
  auto report = grad_check_leaves([&] { return cross_entropy(la_head_forward(h, p, cfg), 1); }, leaves);
  CHECK(report.max_rel_error < 1e-4);

  DetectorConfig dc;
  dc.nes.channels = 8;
  dc.nes.splits = 4;
  dc.la.attn_dim = 3;
  Detector det(dc, 9);
  auto dleaves = det.all_parameters().tensors();
  Tensor x = random_tensor({8, 6}, rng, 1.0, false);
  auto drep = grad_check_leaves([&] { return cross_entropy(det.logits(x), 0); }, dleaves);
  CHECK(drep.max_rel_error < 1e-4);
}

TEST_CASE("detector variants") {
  DetectorConfig dc;
  dc.nes.channels = 16;
  dc.nes.splits = 8;
  Detector la(dc, 3);
  dc.variant = Variant::nes2net_x;
  Detector x(dc, 3);
  CHECK(la.trainable_parameters().size() == x.trainable_parameters().size() + 4);
  CHECK(la.all_parameters().size() == x.all_parameters().size());
  // same seed, so zeroing Wo on the LA model makes both agree
  Tensor wo = la.params().head.w_out;
  for (auto& v : wo.mutable_values()) v = 0;
  Rng rng(1);
  Tensor f = random_tensor({16, 10}, rng, 1.0, false);
  CHECK(std::abs(la.score(f) - x.score(f)) <= 1e-9);
  CHECK(parse_variant("nes2net-x") == Variant::nes2net_x);
  CHECK_THROWS_AS(parse_variant("nes2net"), std::invalid_argument);
}
