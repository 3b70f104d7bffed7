#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "gazestab/augmentation.hpp"
#include "gazestab/evaluation.hpp"
#include "gazestab/gradcheck.hpp"
#include "gazestab/loss.hpp"
#include "gazestab/model.hpp"
#include "gazestab/segmentation.hpp"
#include "gazestab/simulator.hpp"
#include "gazestab/training.hpp"

namespace gazestab {

/// Small model and batch used by the gradient check command.
struct GradCheckSetup {
  std::size_t d_model = 8;
  std::size_t n_heads = 2;
  std::size_t d_ff = 8;
  std::size_t hist_len = 16;
  std::size_t horizon = 8;
  std::size_t batch = 4;
  double perturb = 0.02;  // stddev of noise added to the initial parameters
  GradCheckConfig check;
};

/// Scale of the ablation sweep.
struct SweepConfig {
  std::size_t n_trials = 200;
  std::size_t n_eval_trials = 50;
  std::size_t epochs = 30;
  double tolerance = 0.10;  // allowed AI shortfall of the reference cells
};

struct IoPaths {
  std::string input;
  std::string output;
  std::string report;
  std::string checkpoint;
  std::string log;
};

struct PipelineConfig {
  SimConfig sim;
  FixationConfig fixation;
  CleaningRules cleaning;
  AugmentConfig augment;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  EvalConfig eval;
  GradCheckSetup gradcheck;
  SweepConfig sweep;
  IoPaths io;
  std::size_t threads = 1;

  /// Validates every section.
  void validate() const;
  /// Sets all seeds (simulation, augmentation, training, gradient check).
  void set_seed(std::uint64_t seed);
};

struct ConfigKey {
  std::string key;
  std::string help;
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

/// Every recognized key in a fixed order.
const std::vector<ConfigKey>& config_keys();

/// Keys whose name starts with one of the prefixes ("sim." or an exact key).
std::vector<const ConfigKey*> keys_with_prefixes(const std::vector<std::string>& prefixes);

/// Sets one key; throws ConfigError naming the key when it is unknown or the
/// value does not parse.
void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// Parses "key = value" lines ('#' starts a comment) into cfg.
void apply_config_text(PipelineConfig& cfg, std::string_view text);
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);

/// Applies "key=value" overrides in order.
void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides);

/// Reads TIMEGAZER_SEED if set and applies it as the seed.
bool apply_seed_env(PipelineConfig& cfg);

/// Writes every key with its current value, one "key = value" per line.
std::string dump_config(const PipelineConfig& cfg);

}  // namespace gazestab
