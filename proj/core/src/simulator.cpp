#include "gazestab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gazestab/errors.hpp"
#include "gazestab/parallel.hpp"

namespace gazestab {

void SimConfig::validate() const {
  if (!(sample_rate > 0.0)) throw ConfigError("sim.sample_rate must be > 0");
  if (onset_min > onset_max) throw ConfigError("sim.onset_min must not exceed sim.onset_max");
  if (trial_len <= onset_max) throw ConfigError("sim.trial_len must exceed sim.onset_max");
  if (fixation_noise_sigma < 0.0 || fixation_bias_sigma < 0.0 || search_noise_sigma < 0.0)
    throw ConfigError("sim sigmas must be >= 0");
  if (!(fixation_noise_corr >= 0.0 && fixation_noise_corr < 1.0))
    throw ConfigError("sim.fixation_noise_corr must lie in [0, 1)");
  if (!(saccade_peak_speed > 0.0)) throw ConfigError("sim.saccade_peak_speed must be > 0");
  if (!(plane_extent > 2.0 * edge_margin)) throw ConfigError("sim.edge_margin too large");
  if (!(max_offset > 0.0)) throw ConfigError("sim.max_offset must be > 0");
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double min_jerk(double s) {
  s = std::clamp(s, 0.0, 1.0);
  const double s3 = s * s * s;
  return s3 * (10.0 - 15.0 * s + 6.0 * s * s);
}

namespace {

Vec2 clamp_norm(Vec2 v, double max_norm) {
  const double n = norm(v);
  return n > max_norm ? (max_norm / n) * v : v;
}

}  // namespace

Trial simulate_trial(const SimConfig& cfg, std::mt19937_64& rng, std::size_t index) {
  cfg.validate();
  const double half = cfg.plane_extent / 2.0 - cfg.edge_margin;
  std::uniform_real_distribution<double> coord(-half, half);
  std::normal_distribution<double> unit(0.0, 1.0);

  Vec2 start;
  Vec2 target;
  do {
    start = {coord(rng), coord(rng)};
    target = {coord(rng), coord(rng)};
  } while (distance(start, target) < cfg.min_amplitude);

  const Vec2 bias{cfg.fixation_bias_sigma * unit(rng), cfg.fixation_bias_sigma * unit(rng)};
  const std::size_t onset = std::uniform_int_distribution<std::size_t>(cfg.onset_min, cfg.onset_max)(rng);
  const double peak = cfg.saccade_peak_speed * std::exp(0.15 * unit(rng));

  // Minimum-jerk peak speed is 1.875 * amplitude / duration.
  const double amplitude = distance(start, target);
  auto duration = static_cast<std::size_t>(std::ceil(1.875 * amplitude / peak * cfg.sample_rate));
  duration = std::clamp<std::size_t>(duration, 6, std::max<std::size_t>(onset, 1));
  const std::size_t sacc_begin = onset - std::min(duration, onset);

  const double rho = cfg.fixation_noise_corr;
  const double innovation = cfg.fixation_noise_sigma * std::sqrt(1.0 - rho * rho);
  Vec2 noise;

  Trial trial;
  char id[32];
  std::snprintf(id, sizeof id, "sim-%05zu", index);
  trial.id = id;
  trial.target = target;
  trial.plane_distance = cfg.plane_distance;
  trial.plane_extent = cfg.plane_extent;
  trial.samples.resize(cfg.trial_len);
  for (std::size_t i = 0; i < cfg.trial_len; ++i) {
    GazeSample& s = trial.samples[i];
    s.t = static_cast<double>(i) / cfg.sample_rate;
    if (i >= onset) {
      if (i == onset) {
        noise = Vec2{cfg.fixation_noise_sigma * unit(rng), cfg.fixation_noise_sigma * unit(rng)};
      } else {
        noise = Vec2{rho * noise.x + innovation * unit(rng), rho * noise.y + innovation * unit(rng)};
      }
      s.pos = target + clamp_norm(bias + noise, cfg.max_offset);
    } else {
      const double progress =
          i < sacc_begin ? 0.0 : min_jerk(static_cast<double>(i - sacc_begin) / static_cast<double>(onset - sacc_begin));
      const Vec2 jitter{cfg.search_noise_sigma * unit(rng), cfg.search_noise_sigma * unit(rng)};
      s.pos = start + progress * (target - start) + clamp_norm(jitter, cfg.max_offset);
    }
  }
  // Generator ground truth, kept as extra fields for diagnostics and tests.
  trial.extra["sim_onset"] = onset;
  trial.extra["sim_saccade_start"] = sacc_begin;
  trial.extra["sim_bias"] = {bias.x, bias.y};
  if (cfg.trial_len >= 2)
    trial.samples = derive_velocities(trial.samples, cfg.sample_rate, cfg.plane_distance);
  return trial;
}

std::vector<Trial> simulate_corpus(const SimConfig& cfg, std::size_t threads) {
  cfg.validate();
  std::vector<Trial> out(cfg.n_trials);
  parallel_for(cfg.n_trials, threads, [&](std::size_t i) {
    std::mt19937_64 rng(split_seed(cfg.rng_seed, i));
    out[i] = simulate_trial(cfg, rng, i);
  });
  return out;
}

}  // namespace gazestab
