// Independent reference computations used by the unit and acceptance tests.
// Deliberately naive: direct counting, no shared code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>
#include <vector>

#include "nesla/metrics.hpp"
#include "nesla/tensor.hpp"
#include "nesla/tracer.hpp"

namespace oracle {

struct Point {
  double t, far, frr;
};

// All operating points: -inf, every midpoint between distinct scores, +inf.
// Each point is counted from scratch, O(n) per threshold.
inline std::vector<Point> sweep(const std::vector<nesla::ScoreRecord>& s) {
  std::set<double> uniq;
  for (const auto& r : s) uniq.insert(r.score);
  std::vector<double> u(uniq.begin(), uniq.end());
  std::vector<double> ts{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < u.size(); ++i) ts.push_back(u[i] + (u[i + 1] - u[i]) / 2.0);
  ts.push_back(std::numeric_limits<double>::infinity());
  std::vector<Point> out;
  for (double t : ts) {
    double nb = 0, ns = 0, miss = 0, fa = 0;
    for (const auto& r : s) {
      if (r.label == nesla::TrialLabel::bonafide) {
        nb += 1;
        if (!(r.score >= t)) miss += 1;
      } else {
        ns += 1;
        if (r.score >= t) fa += 1;
      }
    }
    out.push_back({t, fa / ns, miss / nb});
  }
  return out;
}

inline double eer(const std::vector<nesla::ScoreRecord>& s) {
  const auto pts = sweep(s);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].far == pts[i].frr) return pts[i].far;
    if (i > 0 && pts[i - 1].far > pts[i - 1].frr && pts[i].far < pts[i].frr) {
      const double a = pts[i - 1].far - pts[i - 1].frr;
      const double b = pts[i].frr - pts[i].far;
      return pts[i - 1].far + (pts[i].far - pts[i - 1].far) * a / (a + b);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double dcf_at(double far, double frr, const nesla::DcfCosts& c) {
  const double norm = std::min(c.c_miss * c.p_target, c.c_fa * (1 - c.p_target));
  return (c.c_miss * c.p_target * frr + c.c_fa * (1 - c.p_target) * far) / norm;
}

inline double min_dcf(const std::vector<nesla::ScoreRecord>& s, const nesla::DcfCosts& c) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : sweep(s)) best = std::min(best, dcf_at(p.far, p.frr, c));
  return best;
}

inline double act_dcf(const std::vector<nesla::ScoreRecord>& s, const nesla::DcfCosts& c) {
  const double t = std::log(c.c_fa * (1 - c.p_target) / (c.c_miss * c.p_target));
  double nb = 0, ns = 0, miss = 0, fa = 0;
  for (const auto& r : s) {
    if (r.label == nesla::TrialLabel::bonafide) {
      nb += 1;
      miss += r.score < t;
    } else {
      ns += 1;
      fa += r.score >= t;
    }
  }
  return dcf_at(fa / ns, miss / nb, c);
}

// Per-class F1 straight from a dense count matrix.
inline double class_f1(const std::vector<std::vector<double>>& m, std::size_t c) {
  double tp = m[c][c], col = 0, row = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    col += m[i][c];
    row += m[c][i];
  }
  const double p = col > 0 ? tp / col : 0;
  const double r = row > 0 ? tp / row : 0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0;
}

// Spectral centroid in Hz via a naive DFT of the first `n` samples.
inline double spectral_centroid(const std::vector<double>& x, double sr, std::size_t n = 2048) {
  n = std::min(n, x.size());
  double num = 0, den = 0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::polar(1.0, -2.0 * M_PI * double(k) * double(i) / double(n));
    const double mag = std::abs(acc);
    num += mag * double(k) * sr / double(n);
    den += mag;
  }
  return den > 0 ? num / den : 0.0;
}

inline double max_abs_diff(const nesla::Tensor& a, const nesla::Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

// Exhaustive scan of the 0.005 threshold grid; the first best threshold wins.
inline double calibration_grid(const std::vector<nesla::DevSample>& dev,
                               const std::vector<std::size_t>& classes) {
  const std::size_t n = nesla::kSeenApis + 1;
  double best_t = 0, best_f = -1;
  for (int i = 0; i <= 200; ++i) {
    const double t = i / 200.0;
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0));
    for (const auto& s : dev) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < s.probs.size(); ++c)
        if (s.probs[c] > s.probs[arg]) arg = c;
      m[s.truth][s.probs[arg] < t ? nesla::kUnseenClass : arg] += 1;
    }
    double f = 0;
    for (auto c : classes) f += class_f1(m, c);
    f /= static_cast<double>(classes.size());
    if (f > best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace oracle
