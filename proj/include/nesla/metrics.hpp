#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nesla {

enum class TrialLabel { bonafide, spoof };

std::string to_string(TrialLabel label);
TrialLabel parse_trial_label(const std::string& text);

// Detection scores are oriented so that higher means more bonafide.
struct ScoreRecord {
  std::string utt_id;
  double score = 0.0;
  TrialLabel label = TrialLabel::spoof;
};

struct DcfCosts {
  double c_miss = 1.0;
  double c_fa = 10.0;
  double p_target = 0.05;  // prior of the bonafide class

  void validate() const;
  // min(c_miss * p_target, c_fa * (1 - p_target))
  double normalizer() const;
  // ln(c_fa (1 - p_target) / (c_miss p_target))
  double bayes_threshold() const;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct DcfResult {
  double dcf = 0.0;
  double threshold = 0.0;
};

// One operating point of the threshold sweep.
struct OperatingPoint {
  double threshold;
  double far;  // spoof with score >= threshold
  double frr;  // bonafide with score < threshold
};

// Thresholds -inf, the midpoints between adjacent distinct scores, +inf,
// in ascending order. Throws std::invalid_argument unless both labels occur.
std::vector<OperatingPoint> sweep_operating_points(std::span<const ScoreRecord> scores);

// Equal error rate, interpolated linearly between the two sweep points that
// bracket the FAR/FRR crossing when no point hits it exactly.
EerResult compute_eer(std::span<const ScoreRecord> scores);
// Normalized DCF minimised over the sweep.
DcfResult compute_min_dcf(std::span<const ScoreRecord> scores, const DcfCosts& costs);
// Normalized DCF at the Bayes threshold, treating scores as log-likelihood ratios.
double compute_act_dcf(std::span<const ScoreRecord> scores, const DcfCosts& costs);

// counts[true][pred] over n classes.
class ConfusionTable {
 public:
  explicit ConfusionTable(std::size_t n_classes);

  void add(std::size_t truth, std::size_t predicted, std::size_t count = 1);
  std::size_t at(std::size_t truth, std::size_t predicted) const;
  std::size_t classes() const { return n_; }
  std::size_t support(std::size_t c) const;     // row sum
  std::size_t predictions(std::size_t c) const;  // column sum
  std::size_t total() const;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-class precision/recall/F1 with 0/0 taken as 0.
ClassScores class_scores(const ConfusionTable& table, std::size_t c);

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Classes in the average with neither support nor predictions (they count as 0).
  std::vector<std::size_t> empty_classes;
};

// Unweighted mean of class_scores over `classes`.
MacroScores macro_scores(const ConfusionTable& table, std::span<const std::size_t> classes);

enum class ClassSubset { seen, unseen, overall };

// For the 22-class tracing table (21 seen classes, then UNSEEN):
// seen = mean over classes 0..20, unseen = class 21, overall = mean over all 22.
MacroScores macro_f1(const ConfusionTable& table, ClassSubset subset);

}  // namespace nesla
