#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazestab/gaze_core.hpp"
#include "gazestab/model.hpp"

namespace gazestab {

/// RMS distance to target of raw over that of pred (plus eps).
double concentration_improvement(std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target,
                                 double eps = 1e-9);
/// Mean distance to target of raw over that of pred (plus eps).
double accuracy_improvement(std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target,
                            double eps = 1e-9);
/// Mean Euclidean distance to target.
double average_distance(std::span<const Vec2> points, Vec2 target);

struct EvalConfig {
  std::size_t window = 16;
  std::size_t hist_buffer = 96;
  std::size_t min_history = 32;
  double sample_rate = 60.0;
  double epsilon = 1e-9;
  /// Wall-clock each rollout. Timings make reports differ between runs, so
  /// this is off unless asked for.
  bool timing = false;
  std::size_t threads = 1;

  void validate(const ModelConfig& mcfg) const;
};

struct TrialMetrics {
  std::string trial_id;
  double ci = 0.0;
  double ai = 0.0;
  double ad_pred = 0.0;
  double ad_raw = 0.0;
  std::size_t n_points = 0;
  double rollout_seconds = 0.0;
};

struct SkippedTrial {
  std::string trial_id;
  std::string reason;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // population
};
Summary summarize(std::span<const double> values);

struct MetricsReport {
  std::vector<TrialMetrics> per_trial;
  std::vector<SkippedTrial> skipped;
  Summary ci, ai, ad_pred, ad_raw;
  std::optional<Summary> timing;
  double epsilon = 1e-9;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Per-trial metrics for a prediction against the raw fixation points: the
/// first min(len(pred), len(raw)) points of each are compared.
TrialMetrics score_trial(const std::string& id, std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target,
                         double eps);

/// Rolls the model out from each trial's pre-onset history and scores the
/// forecast against the recorded fixation points.
MetricsReport evaluate_corpus(const Model& model, const std::vector<Trial>& trials, const EvalConfig& cfg);

/// Positions of the model forecast for one trial, or nullopt with a reason.
struct TrialForecast {
  std::vector<Vec2> raw;
  std::vector<Vec2> pred;
};
std::optional<TrialForecast> forecast_trial(const Model& model, const Trial& trial, const EvalConfig& cfg,
                                            std::string* reason = nullptr);

void write_report_json(std::ostream& out, const MetricsReport& report);
void write_report_text(std::ostream& out, const MetricsReport& report);
void write_report_csv(std::ostream& out, const MetricsReport& report);
MetricsReport read_report_json(const std::filesystem::path& path);

}  // namespace gazestab
