#include "gazestab/segmentation.hpp"

#include <cmath>
#include <ostream>

#include "gazestab/errors.hpp"
#include "gazestab/parallel.hpp"

namespace gazestab {

void CleaningRules::validate() const {
  if (!(min_uninterrupted_fixation > 0.0))
    throw ConfigError("cleaning.min_uninterrupted_fixation must be > 0");
  if (!(eval_window > 0.0)) throw ConfigError("cleaning.eval_window must be > 0");
  if (max_consecutive_outside < 1) throw ConfigError("cleaning.max_consecutive_outside must be >= 1");
  if (!(outside_radius > 0.0)) throw ConfigError("cleaning.outside_radius must be > 0");
  if (!(plane_extent > 0.0)) throw ConfigError("cleaning.plane_extent must be > 0");
}

std::string to_string(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::none: return "none";
    case ExclusionReason::short_fixation: return "short_fixation";
    case ExclusionReason::out_of_bounds: return "out_of_bounds";
    case ExclusionReason::fixation_loss: return "fixation_loss";
  }
  return "unknown";
}

std::optional<std::size_t> fixation_onset(const Trial& trial, const FixationConfig& cfg) {
  cfg.validate();
  const auto& s = trial.samples;
  const std::size_t w = cfg.window_samples;
  if (s.size() < w)
    throw InsufficientDataError("trial " + trial.id + " is shorter than the fixation window");

  // The outside-region count slides; the angular-speed mean is summed fresh
  // for candidate windows so the threshold test never sees accumulated drift.
  std::size_t outside = 0;
  auto is_outside = [&](std::size_t k) {
    return !(distance(s[k].pos, trial.target) <= cfg.region_radius);
  };
  for (std::size_t k = 0; k < w; ++k) outside += is_outside(k);
  for (std::size_t i = 0;; ++i) {
    if (outside == 0) {
      double ang_sum = 0.0;
      for (std::size_t k = i; k < i + w; ++k) ang_sum += s[k].ang_speed;
      if (ang_sum / static_cast<double>(w) < cfg.ang_vel_threshold) return i;
    }
    if (i + w >= s.size()) break;
    outside -= is_outside(i);
    outside += is_outside(i + w);
  }
  return std::nullopt;
}

namespace {

SegmentationResult classify(const Trial& trial, const CleaningRules& rules,
                            const FixationConfig& cfg, std::optional<std::size_t>& onset_out) {
  SegmentationResult r;
  r.trial_id = trial.id;
  auto exclude = [&](ExclusionReason why) {
    r.excluded = true;
    r.exclusion_reason = why;
    r.onset_index.reset();
    r.search_len = 0;
    r.fixation_len = 0;
    return r;
  };
  const auto& s = trial.samples;
  if (s.size() < cfg.window_samples) return exclude(ExclusionReason::short_fixation);

  // (1) longest in-region run within the evaluation window.
  const auto eval_n = static_cast<std::size_t>(std::llround(rules.eval_window * cfg.sample_rate));
  const auto min_run =
      static_cast<std::size_t>(std::ceil(rules.min_uninterrupted_fixation * cfg.sample_rate - 1e-9));
  std::size_t run = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < std::min(eval_n, s.size()); ++i) {
    if (distance(s[i].pos, trial.target) <= rules.outside_radius) {
      best = std::max(best, ++run);
    } else {
      run = 0;
    }
  }
  if (best < min_run) return exclude(ExclusionReason::short_fixation);

  // (2) gaze leaves the target area.
  const double half = rules.plane_extent / 2.0;
  for (const GazeSample& g : s) {
    if (!(std::abs(g.pos.x) <= half && std::abs(g.pos.y) <= half))
      return exclude(ExclusionReason::out_of_bounds);
  }

  std::optional<std::size_t> onset;
  try {
    onset = fixation_onset(trial, cfg);
  } catch (const InsufficientDataError&) {
  }
  if (!onset) return exclude(ExclusionReason::short_fixation);

  // (3) loss of fixation after onset.
  run = 0;
  for (std::size_t i = *onset; i < s.size(); ++i) {
    if (distance(s[i].pos, trial.target) > rules.outside_radius) {
      if (++run >= rules.max_consecutive_outside) return exclude(ExclusionReason::fixation_loss);
    } else {
      run = 0;
    }
  }

  r.onset_index = onset;
  r.search_len = *onset;
  r.fixation_len = s.size() - *onset;
  onset_out = onset;
  return r;
}

}  // namespace

CleanedCorpus clean_corpus(const std::vector<Trial>& trials, const CleaningRules& rules,
                           const FixationConfig& cfg, std::size_t threads) {
  rules.validate();
  cfg.validate();
  std::vector<SegmentationResult> report(trials.size());
  std::vector<std::optional<std::size_t>> onsets(trials.size());
  parallel_for(trials.size(), threads,
               [&](std::size_t i) { report[i] = classify(trials[i], rules, cfg, onsets[i]); });
  CleanedCorpus out;
  out.report = std::move(report);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (out.report[i].excluded) continue;
    Trial kept = trials[i];
    kept.fixation_onset = onsets[i];
    out.kept.push_back(std::move(kept));
  }
  return out;
}

Phases split_phases(const Trial& trial) {
  if (!trial.fixation_onset) throw StateError("split_phases: fixation_onset is not set");
  const std::size_t onset = *trial.fixation_onset;
  if (onset > trial.samples.size()) throw StateError("split_phases: onset beyond trial end");
  Phases p;
  p.search.assign(trial.samples.begin(), trial.samples.begin() + static_cast<std::ptrdiff_t>(onset));
  p.fixation.assign(trial.samples.begin() + static_cast<std::ptrdiff_t>(onset), trial.samples.end());
  return p;
}

void write_cleaning_report(std::ostream& out, const std::vector<SegmentationResult>& report) {
  out << "trial_id,onset_index,excluded,reason\n";
  for (const auto& r : report) {
    out << r.trial_id << ',';
    if (r.onset_index) out << *r.onset_index;
    out << ',' << (r.excluded ? "true" : "false") << ',' << to_string(r.exclusion_reason) << '\n';
  }
}

}  // namespace gazestab
