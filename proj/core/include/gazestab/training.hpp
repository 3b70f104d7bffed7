#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gazestab/checkpoint.hpp"
#include "gazestab/gaze_core.hpp"
#include "gazestab/loss.hpp"
#include "gazestab/model.hpp"

namespace gazestab {

struct TrainConfig {
  double lr0 = 0.001;
  std::size_t epochs = 100;
  std::size_t patience = 20;
  std::size_t batch_size = 64;
  std::size_t window = 16;       // l_w, points consumed per rollout step
  std::size_t hist_buffer = 96;  // samples kept before onset
  std::size_t min_history = 32;  // real pre-onset samples required per trial
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  double sample_rate = 60.0;
  bool detach_windows = false;  // cut gradients between rollout steps
  std::size_t threads = 1;

  void validate(const ModelConfig& mcfg) const;
};

/// eta0 / 2 * (1 + cos(pi * epoch / epochs)).
double cosine_lr(double lr0, std::size_t epoch, std::size_t epochs);

/// One training or evaluation pair cut from a trial with a known onset.
struct Example {
  std::string trial_id;
  std::string group;    // trial id without synthetic suffixes
  ad::Mat history;      // [hist_buffer x 4], ends just before the onset
  ad::Mat history_times;  // [hist_buffer x 1], seconds relative to the onset
  ad::Mat target;       // [n x 2] fixation-phase positions, n <= horizon
  Vec2 goal;            // trial target
  std::size_t padded = 0;  // rows of history filled by edge padding
};

/// Channel order of model inputs.
ad::Mat features(const GazeSample& s);

/// Builds the history buffer and fixation targets. Onsets earlier than the
/// buffer are edge-padded with the first sample. Returns nullopt when the
/// trial lacks an onset, has fewer than min_history real pre-onset samples,
/// or has no fixation samples.
std::optional<Example> make_example(const Trial& trial, std::size_t hist_buffer, std::size_t horizon,
                                    std::size_t min_history, double sample_rate);

/// Forecaster maps a [T x C] input and its [T x 1] times to [tau x C].
using Forecaster = std::function<ad::Mat(const ad::Mat&, const ad::Mat&)>;

/// Iterated forecasting: forecast from the latest hist_len rows, keep the first
/// `window` predicted rows, append them to the working buffer, repeat until
/// `horizon` rows exist, then truncate. Appended rows get timestamps that
/// continue at 1 / sample_rate spacing.
ad::Mat sliding_rollout(const Forecaster& model, const ad::Mat& history, const ad::Mat& history_times,
                        std::size_t hist_len, std::size_t window, std::size_t horizon, double sample_rate);

/// Number of forecaster calls sliding_rollout makes.
std::size_t rollout_steps(std::size_t window, std::size_t horizon);

/// Same loop on a tape with gradients through every window (unless detached).
/// `pinned` / `record` hold one PeriodTrace per forecaster call.
ad::Var sliding_rollout(ad::Tape& tape, const Model& model, const Model::Bound& bound, const ad::Mat& history,
                        const ad::Mat& history_times, std::size_t window, double sample_rate,
                        bool detach = false, const std::vector<PeriodTrace>* pinned = nullptr,
                        std::vector<PeriodTrace>* record = nullptr);

/// Convenience wrapper around sliding_rollout with model.predict.
ad::Mat rollout(const Model& model, const ad::Mat& history, const ad::Mat& history_times, std::size_t window,
                double sample_rate);

/// Plain Adam with bias correction.
class Adam {
 public:
  Adam(const ModelParams& shape_like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ModelParams& params, const std::vector<ad::Mat>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<ad::Mat> m_, v_;
};

/// Loss and parameter gradients of one example (gradients include the
/// weight penalty).
struct ExampleGrad {
  double loss = 0.0;
  std::vector<ad::Mat> grads;
};
ExampleGrad example_gradient(const Model& model, const Example& ex, const LossConfig& lcfg,
                             std::size_t window, double sample_rate, bool detach);

/// Objective value without building gradients.
double example_loss(const Model& model, const Example& ex, const LossConfig& lcfg, std::size_t window,
                    double sample_rate);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double alpha = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_skipped = 0;
};

void write_train_log(std::ostream& out, const TrainLog& log);

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

/// Splits examples into train/validation by group so a trial and its
/// synthetic copies land on the same side.
std::pair<std::vector<Example>, std::vector<Example>> split_examples(std::vector<Example> examples,
                                                                     double val_fraction, std::uint64_t seed);

/// Full training run. Throws DomainError when fewer training examples than
/// one batch remain after the split.
TrainResult train(const std::vector<Trial>& corpus, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const LossConfig& lcfg);

}  // namespace gazestab
