#pragma once

#include <cstdint>
#include <vector>

#include "gazestab/gaze_core.hpp"

namespace gazestab {

struct AugmentConfig {
  double beta = 0.5;         // contraction factor, open interval (0, 1)
  double blend_ratio = 0.5;  // synthetic share of the blended corpus
  std::uint64_t rng_seed = 0;
  // Applies p' = g + beta * p (absolute coordinates) instead of the
  // target-relative p' = g + beta * (p - g). Kept for auditing only.
  bool literal_formula = false;
  double sample_rate = 60.0;

  void validate() const;
};

/// Builds the idealized counterpart of a segmented trial: samples up to and
/// including the onset are copied; every later position is contracted toward
/// the target and its speeds are recomputed by backward differences at
/// 1/sample_rate. The result carries `"synthetic": true` and `"beta"`.
Trial synthesize_trial(const Trial& trial, double beta, bool literal_formula = false,
                       double sample_rate = 60.0);

/// All real trials plus seeded synthetic counterparts so the synthetic share
/// approximates blend_ratio, shuffled with the configured seed. A ratio of 1
/// yields one synthetic counterpart per real trial and no real trials.
std::vector<Trial> blend_corpus(const std::vector<Trial>& real, const AugmentConfig& cfg);

/// Number of synthetic trials blend_corpus adds for `n_real` inputs.
std::size_t synthetic_count(std::size_t n_real, double blend_ratio);

}  // namespace gazestab
