#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nesla/detector.hpp"
#include "nesla/metrics.hpp"
#include "nesla/optim.hpp"
#include "nesla/run_config.hpp"
#include "nesla/tracer.hpp"

namespace nesla {

// Seeded Fisher-Yates order, reshuffled each time an epoch runs out.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed);
  std::vector<std::size_t> next_batch(std::size_t batch_size);
  std::size_t epochs_started() const { return epoch_; }

 private:
  void reshuffle();

  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

// Detector classes: 0 = bonafide, 1 = spoof.
std::size_t class_index(TrialLabel label);

struct DetectorExample {
  std::string utt_id;
  Tensor features;  // [C x T']
  TrialLabel label = TrialLabel::spoof;
};

double mean_cross_entropy(const Detector& detector, std::span<const DetectorExample> data);
std::vector<ScoreRecord> score_examples(const Detector& detector,
                                        std::span<const DetectorExample> data);

struct TrainLogEntry {
  std::size_t step = 0;
  double batch_loss = 0.0;
  double train_ce = 0.0;
  std::optional<double> dev_eer;
};

struct DetectorTraining {
  std::vector<TrainLogEntry> log;
  double final_train_ce = 0.0;
  // Parameters at the evaluation with the lowest dev EER (earliest on ties).
  std::optional<ParameterMap> best_dev;
  std::size_t best_dev_step = 0;
  double best_dev_eer = 0.0;
};

// Minibatch AdamW on the mean cross-entropy. Every eval_interval steps (and
// after the last one) logs the full-train CE and, when the dev set holds both
// labels, the dev EER. A non-finite loss or activation aborts with the step
// and batch in the message.
DetectorTraining train_detector(Detector& detector, AdamW& optimizer,
                                std::span<const DetectorExample> train,
                                std::span<const DetectorExample> dev,
                                const TrainOptions& options, std::ostream* progress = nullptr);

struct TracerExample {
  std::string utt_id;
  std::vector<Tensor> layer_means;  // L tensors of [C]
  std::size_t label = 0;            // seen API index
};

double tracer_cross_entropy(const TracerParams& params, std::span<const TracerExample> data);
std::vector<double> tracer_probabilities(const TracerParams& params,
                                         std::span<const Tensor> layer_means);

struct TracerTraining {
  std::vector<std::pair<std::size_t, double>> log;  // (step, full-train CE)
  double final_train_ce = 0.0;
};

TracerTraining train_tracer(TracerParams& params, AdamW& optimizer,
                            std::span<const TracerExample> train, const TracerOptions& options,
                            std::size_t log_interval, std::ostream* progress = nullptr);

}  // namespace nesla
