#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gazestab/gaze_core.hpp"

namespace gazestab {

/// Trial-exclusion thresholds.
struct CleaningRules {
  double min_uninterrupted_fixation = 2.5;  // s
  double eval_window = 5.0;                 // s
  std::size_t max_consecutive_outside = 24;
  double outside_radius = 0.1;              // m
  double plane_extent = 2.0;                // m

  void validate() const;
};

enum class ExclusionReason { none, short_fixation, out_of_bounds, fixation_loss };

std::string to_string(ExclusionReason reason);

struct SegmentationResult {
  std::string trial_id;
  std::optional<std::size_t> onset_index;
  std::size_t search_len = 0;
  std::size_t fixation_len = 0;
  bool excluded = false;
  ExclusionReason exclusion_reason = ExclusionReason::none;
};

/// First index i such that samples [i, i + window) all lie within the region
/// around the target and their mean angular speed is below the threshold.
/// Throws InsufficientDataError when the trial is shorter than one window.
std::optional<std::size_t> fixation_onset(const Trial& trial, const FixationConfig& cfg);

struct CleanedCorpus {
  std::vector<Trial> kept;
  std::vector<SegmentationResult> report;
};

/// Classifies every trial. Rules are checked in the order short fixation,
/// out of bounds, fixation loss; the first match wins. A trial with no
/// detectable onset is reported as short_fixation. Never throws for a
/// malformed trial; it is excluded instead.
CleanedCorpus clean_corpus(const std::vector<Trial>& trials, const CleaningRules& rules,
                           const FixationConfig& cfg, std::size_t threads = 1);

struct Phases {
  std::vector<GazeSample> search;
  std::vector<GazeSample> fixation;
};

/// Splits at fixation_onset. Throws StateError when the onset is unset.
Phases split_phases(const Trial& trial);

/// CSV report `trial_id,onset_index,excluded,reason`.
void write_cleaning_report(std::ostream& out, const std::vector<SegmentationResult>& report);

}  // namespace gazestab
