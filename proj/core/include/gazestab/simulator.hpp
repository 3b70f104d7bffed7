#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "gazestab/gaze_core.hpp"

namespace gazestab {

/// Desk-scale generator of saccade-then-fixation trials.
///
/// Each trial dwells at a start point, follows a minimum-jerk path to a
/// landing point (target plus a per-trial Gaussian bias) and then fixates
/// there. Fixation noise is a stationary AR(1) process with standard
/// deviation fixation_noise_sigma and lag-one correlation
/// fixation_noise_corr, started fresh at landing; white noise at 60 Hz would
/// put typical fixation angular speeds far above the onset threshold. The
/// search phase (dwell and saccade) carries its own white jitter of
/// search_noise_sigma. Offsets are clamped to max_offset so every trial
/// survives the default cleaning rules.
struct SimConfig {
  std::size_t n_trials = 200;
  double sample_rate = 60.0;
  std::size_t trial_len = 300;
  double plane_extent = 2.0;
  double plane_distance = 3.0;
  double saccade_peak_speed = 10.0;  // m/s
  double fixation_noise_sigma = 0.02;
  double fixation_noise_corr = 0.9;
  double search_noise_sigma = 0.005;
  double fixation_bias_sigma = 0.015;
  std::size_t onset_min = 60;
  std::size_t onset_max = 120;
  double min_amplitude = 0.3;  // m, start-to-target distance
  double edge_margin = 0.15;   // m, keeps start and target inside the area
  double max_offset = 0.08;    // m
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Generates one trial from the given generator state.
Trial simulate_trial(const SimConfig& cfg, std::mt19937_64& rng, std::size_t index = 0);

/// n_trials independent trials; trial i draws from its own stream seeded by
/// split_seed(rng_seed, i), so the corpus is independent of generation order.
std::vector<Trial> simulate_corpus(const SimConfig& cfg, std::size_t threads = 1);

/// SplitMix64 derivation of a child seed.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

/// Minimum-jerk progress 10s^3 - 15s^4 + 6s^5 for s in [0, 1].
double min_jerk(double s);

}  // namespace gazestab
