#include "nesla/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nesla {

std::string to_string(TrialLabel label) {
  return label == TrialLabel::bonafide ? "bonafide" : "spoof";
}

TrialLabel parse_trial_label(const std::string& text) {
  if (text == "bonafide") return TrialLabel::bonafide;
  if (text == "spoof") return TrialLabel::spoof;
  throw std::invalid_argument("unknown trial label '" + text + "'");
}

void DcfCosts::validate() const {
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) throw std::invalid_argument("dcf: costs must be positive");
  if (!(p_target > 0.0 && p_target < 1.0)) throw std::invalid_argument("dcf: p_target must lie in (0, 1)");
}

double DcfCosts::normalizer() const {
  return std::min(c_miss * p_target, c_fa * (1.0 - p_target));
}

double DcfCosts::bayes_threshold() const {
  return std::log((c_fa * (1.0 - p_target)) / (c_miss * p_target));
}

std::vector<OperatingPoint> sweep_operating_points(std::span<const ScoreRecord> scores) {
  std::vector<double> bona, spoof;
  for (const auto& r : scores) {
    if (!std::isfinite(r.score)) throw std::invalid_argument("metrics: non-finite score for " + r.utt_id);
    (r.label == TrialLabel::bonafide ? bona : spoof).push_back(r.score);
  }
  if (bona.empty() || spoof.empty()) {
    throw std::invalid_argument("metrics: need at least one bonafide and one spoof score");
  }
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());

  std::vector<double> unique;
  unique.reserve(bona.size() + spoof.size());
  std::merge(bona.begin(), bona.end(), spoof.begin(), spoof.end(), std::back_inserter(unique));
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  const double nb = static_cast<double>(bona.size());
  const double ns = static_cast<double>(spoof.size());
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<OperatingPoint> points;
  points.reserve(unique.size() + 1);
  points.push_back({-inf, 1.0, 0.0});
  // Between unique[i] and unique[i+1], "score >= t" is "score >= unique[i+1]".
  std::size_t bona_below = 0;  // bonafide scores < unique[i+1]
  std::size_t spoof_below = 0;
  for (std::size_t i = 0; i + 1 < unique.size(); ++i) {
    const double next = unique[i + 1];
    while (bona_below < bona.size() && bona[bona_below] < next) ++bona_below;
    while (spoof_below < spoof.size() && spoof[spoof_below] < next) ++spoof_below;
    const double mid = unique[i] + (next - unique[i]) / 2.0;
    points.push_back({mid, static_cast<double>(spoof.size() - spoof_below) / ns,
                      static_cast<double>(bona_below) / nb});
  }
  points.push_back({inf, 0.0, 1.0});
  return points;
}

EerResult compute_eer(std::span<const ScoreRecord> scores) {
  const auto points = sweep_operating_points(scores);
  // FAR - FRR is non-increasing along the sweep and ends negative.
  std::size_t i = 0;
  while (points[i].frr < points[i].far) ++i;
  const auto& hi = points[i];
  if (hi.frr == hi.far || i == 0) return {hi.far, hi.threshold};
  const auto& lo = points[i - 1];
  const double d_lo = lo.far - lo.frr;  // > 0
  const double d_hi = hi.far - hi.frr;  // < 0
  const double lambda = d_lo / (d_lo - d_hi);
  const double eer = lo.far + lambda * (hi.far - lo.far);
  double threshold;
  if (std::isinf(lo.threshold) && std::isinf(hi.threshold)) {
    threshold = 0.0;
  } else if (std::isinf(lo.threshold)) {
    threshold = hi.threshold;
  } else if (std::isinf(hi.threshold)) {
    threshold = lo.threshold;
  } else {
    threshold = lo.threshold + lambda * (hi.threshold - lo.threshold);
  }
  return {eer, threshold};
}

DcfResult compute_min_dcf(std::span<const ScoreRecord> scores, const DcfCosts& costs) {
  costs.validate();
  const auto points = sweep_operating_points(scores);
  const double w_miss = costs.c_miss * costs.p_target;
  const double w_fa = costs.c_fa * (1.0 - costs.p_target);
  const double norm = costs.normalizer();
  DcfResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& p : points) {
    const double dcf = (w_miss * p.frr + w_fa * p.far) / norm;
    if (dcf < best.dcf) best = {dcf, p.threshold};
  }
  return best;
}

double compute_act_dcf(std::span<const ScoreRecord> scores, const DcfCosts& costs) {
  costs.validate();
  std::size_t nb = 0, ns = 0, miss = 0, fa = 0;
  const double t = costs.bayes_threshold();
  for (const auto& r : scores) {
    if (!std::isfinite(r.score)) throw std::invalid_argument("metrics: non-finite score for " + r.utt_id);
    if (r.label == TrialLabel::bonafide) {
      ++nb;
      if (r.score < t) ++miss;
    } else {
      ++ns;
      if (r.score >= t) ++fa;
    }
  }
  if (nb == 0 || ns == 0) {
    throw std::invalid_argument("metrics: need at least one bonafide and one spoof score");
  }
  const double frr = static_cast<double>(miss) / static_cast<double>(nb);
  const double far = static_cast<double>(fa) / static_cast<double>(ns);
  return (costs.c_miss * costs.p_target * frr + costs.c_fa * (1.0 - costs.p_target) * far) /
         costs.normalizer();
}

// ---- classification --------------------------------------------------------

ConfusionTable::ConfusionTable(std::size_t n_classes)
    : n_(n_classes), counts_(n_classes * n_classes, 0) {
  if (n_classes == 0) throw std::invalid_argument("confusion table: need at least one class");
}

void ConfusionTable::add(std::size_t truth, std::size_t predicted, std::size_t count) {
  if (truth >= n_ || predicted >= n_) {
    throw std::out_of_range("confusion table: class index out of range");
  }
  counts_[truth * n_ + predicted] += count;
}

std::size_t ConfusionTable::at(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * n_ + predicted);
}

std::size_t ConfusionTable::support(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(c, p);
  return s;
}

std::size_t ConfusionTable::predictions(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < n_; ++t) s += at(t, c);
  return s;
}

std::size_t ConfusionTable::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

ClassScores class_scores(const ConfusionTable& table, std::size_t c) {
  const auto tp = static_cast<double>(table.at(c, c));
  const auto pred = static_cast<double>(table.predictions(c));
  const auto sup = static_cast<double>(table.support(c));
  ClassScores s;
  s.precision = pred > 0 ? tp / pred : 0.0;
  s.recall = sup > 0 ? tp / sup : 0.0;
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

MacroScores macro_scores(const ConfusionTable& table, std::span<const std::size_t> classes) {
  MacroScores m;
  if (classes.empty()) return m;
  for (auto c : classes) {
    const auto s = class_scores(table, c);
    m.precision += s.precision;
    m.recall += s.recall;
    m.f1 += s.f1;
    if (table.support(c) == 0 && table.predictions(c) == 0) m.empty_classes.push_back(c);
  }
  const auto n = static_cast<double>(classes.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

MacroScores macro_f1(const ConfusionTable& table, ClassSubset subset) {
  if (table.classes() < 2) throw std::invalid_argument("macro_f1: need seen classes plus UNSEEN");
  const auto unseen = table.classes() - 1;
  std::vector<std::size_t> classes;
  switch (subset) {
    case ClassSubset::seen:
      for (std::size_t c = 0; c < unseen; ++c) classes.push_back(c);
      break;
    case ClassSubset::unseen:
      classes.push_back(unseen);
      break;
    case ClassSubset::overall:
      for (std::size_t c = 0; c <= unseen; ++c) classes.push_back(c);
      break;
  }
  return macro_scores(table, classes);
}

}  // namespace nesla
