#include "gazestab/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gazestab/errors.hpp"

namespace gazestab {

void AugmentConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("augment.beta must lie in (0, 1)");
  if (!(blend_ratio >= 0.0 && blend_ratio <= 1.0))
    throw DomainError("augment.blend_ratio must lie in [0, 1]");
  if (!(sample_rate > 0.0)) throw DomainError("augment.sample_rate must be > 0");
}

namespace {

Vec3 lift(Vec2 p, Vec3 origin, double plane_distance) {
  return normalize(Vec3{p.x, p.y, plane_distance} - origin);
}

}  // namespace

Trial synthesize_trial(const Trial& trial, double beta, bool literal_formula,
                       double sample_rate) {
  if (!trial.fixation_onset) throw StateError("synthesize_trial: fixation_onset is not set");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("synthesize_trial: beta must lie in (0, 1)");
  const std::size_t onset = *trial.fixation_onset;
  if (onset >= trial.samples.size()) throw StateError("synthesize_trial: onset beyond trial end");

  const double dt = 1.0 / sample_rate;
  const Vec2 g = trial.target;
  Trial out = trial;
  out.id = trial.id + "#syn";

  bool all_rays = true;
  for (std::size_t t = onset; t < trial.samples.size(); ++t)
    all_rays = all_rays && trial.samples[t].gaze_origin.has_value();

  for (std::size_t t = onset + 1; t < trial.samples.size(); ++t) {
    const GazeSample& src = trial.samples[t];
    GazeSample& dst = out.samples[t];
    const GazeSample& prev = out.samples[t - 1];
    dst.pos = literal_formula ? g + beta * src.pos : g + beta * (src.pos - g);
    dst.lin_speed = distance(dst.pos, prev.pos) / dt;
    if (all_rays) {
      const Vec3 dir = lift(dst.pos, *src.gaze_origin, trial.plane_distance);
      const Vec3 prev_dir = prev.gaze_dir ? *prev.gaze_dir
                                          : lift(prev.pos, *prev.gaze_origin, trial.plane_distance);
      dst.gaze_dir = dir;
      dst.ang_speed = angle_between_deg(dir, prev_dir) / dt;
    } else {
      dst.ang_speed = beta * src.ang_speed;
    }
  }
  if (!out.extra.is_object()) out.extra = nlohmann::json::object();
  out.extra["synthetic"] = true;
  out.extra["beta"] = beta;
  out.extra["ang_speed_method"] = all_rays ? "ray" : "beta_scaled";
  if (literal_formula) out.extra["literal_formula"] = true;
  return out;
}

std::size_t synthetic_count(std::size_t n_real, double blend_ratio) {
  if (blend_ratio >= 1.0) return n_real;
  return static_cast<std::size_t>(
      std::llround(static_cast<double>(n_real) * blend_ratio / (1.0 - blend_ratio)));
}

std::vector<Trial> blend_corpus(const std::vector<Trial>& real, const AugmentConfig& cfg) {
  cfg.validate();
  if (real.empty()) throw DomainError("blend_corpus: no real trials");
  for (const Trial& t : real)
    if (!t.fixation_onset) throw StateError("blend_corpus: trial " + t.id + " has no onset");

  std::mt19937_64 rng(cfg.rng_seed);
  const std::size_t n_syn = synthetic_count(real.size(), cfg.blend_ratio);

  // Pick sources without replacement, cycling through fresh permutations
  // when more synthetic trials than real ones are requested.
  std::vector<std::size_t> sources;
  sources.reserve(n_syn);
  std::vector<std::size_t> perm(real.size());
  while (sources.size() < n_syn) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < perm.size() && sources.size() < n_syn; ++k)
      sources.push_back(perm[k]);
  }

  std::vector<Trial> out;
  if (cfg.blend_ratio < 1.0) out = real;
  std::vector<std::size_t> copies(real.size(), 0);
  for (std::size_t src : sources) {
    Trial syn = synthesize_trial(real[src], cfg.beta, cfg.literal_formula, cfg.sample_rate);
    if (++copies[src] > 1) syn.id += std::to_string(copies[src]);
    out.push_back(std::move(syn));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace gazestab
