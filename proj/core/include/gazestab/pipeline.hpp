#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gazestab/config.hpp"
#include "gazestab/evaluation.hpp"
#include "gazestab/gradcheck.hpp"
#include "gazestab/training.hpp"

namespace gazestab {

using std::filesystem::path;

void cmd_simulate(const PipelineConfig& cfg, const path& out, std::ostream& log);
void cmd_segment(const PipelineConfig& cfg, const path& in, const path& out, const path& report, std::ostream& log);
void cmd_augment(const PipelineConfig& cfg, const path& in, const path& out, std::ostream& log);
TrainLog cmd_train(const PipelineConfig& cfg, const path& in, const path& checkpoint_out, const path& log_out,
                   std::ostream& log);
/// Writes the JSON report to report_out, the per-trial CSV to csv_out when
/// non-empty, and the text summary to log.
MetricsReport cmd_evaluate(const PipelineConfig& cfg, const path& checkpoint, const path& in, const path& report_out,
                           const path& csv_out, std::ostream& log);

struct PlotRequest {
  path input;  // trials JSONL or a JSON metrics report
  path out;
  std::optional<path> checkpoint;  // adds predicted points to trial plots
  std::string trial_id;            // empty selects the first trial
  std::string metric = "ai";       // histogram metric for reports
};
void cmd_plot(const PipelineConfig& cfg, const PlotRequest& req, std::ostream& log);

/// Gradient check on the small configuration in cfg.gradcheck, on a batch of
/// simulated trials with randomly perturbed parameters.
GradCheckReport run_gradcheck(const PipelineConfig& cfg);
/// Returns true when every checked coordinate is within tolerance.
bool cmd_gradcheck(const PipelineConfig& cfg, std::ostream& log);

/// Simulate, clean and blend a training corpus, train, then evaluate on a
/// separately seeded held-out corpus.
struct ExperimentResult {
  TrainResult train;
  MetricsReport report;
  std::size_t n_corpus = 0;
  std::size_t n_heldout = 0;
};
ExperimentResult run_experiment(const PipelineConfig& cfg, std::size_t n_train_trials, std::size_t n_eval_trials);

struct SweepCell {
  std::string grid;  // projection, loss_terms, window, heads
  std::string label;
  ProjectionMode projection = ProjectionMode::fused;
  bool use_center = true;
  bool use_dispersion = true;
  std::size_t window = 16;
  std::size_t n_heads = 8;
  bool reference = false;  // the configuration chosen for the full model
};

struct SweepRow {
  SweepCell cell;
  double ai = 0.0;
  double ci = 0.0;
  double ad_pred = 0.0;
  double ad_raw = 0.0;
  double val_loss = 0.0;
  std::size_t epochs_run = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// Per grid: reference AI >= (1 - tolerance) * best AI in that grid.
  std::vector<std::pair<std::string, bool>> reference_ok;
};

std::vector<SweepCell> sweep_cells();
SweepResult run_sweep(const PipelineConfig& cfg, std::ostream& log);
void write_sweep_csv(std::ostream& out, const SweepResult& result);
SweepResult cmd_sweep(const PipelineConfig& cfg, const path& out_csv, std::ostream& log);

}  // namespace gazestab
