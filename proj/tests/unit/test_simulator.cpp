#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gazestab/segmentation.hpp"
#include "gazestab/simulator.hpp"

using namespace gazestab;

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i], mb += rb[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("noiseless fixation sits on the target") {
  SimConfig cfg;
  cfg.fixation_noise_sigma = 0.0;
  cfg.fixation_bias_sigma = 0.0;
  cfg.n_trials = 20;
  for (const Trial& t : simulate_corpus(cfg)) {
    const std::size_t onset = t.extra["sim_onset"].get<std::size_t>();
    for (std::size_t i = onset; i < t.samples.size(); ++i) CHECK(distance(t.samples[i].pos, t.target) == 0.0);
  }
}

TEST_CASE("simulation is seed deterministic and seed sensitive") {
  SimConfig cfg;
  cfg.n_trials = 5;
  std::mt19937_64 a(3), b(3);
  const Trial x = simulate_trial(cfg, a), y = simulate_trial(cfg, b);
  REQUIRE(x.samples.size() == y.samples.size());
  for (std::size_t i = 0; i < x.samples.size(); ++i) CHECK(x.samples[i].pos == y.samples[i].pos);

  const auto c1 = simulate_corpus(cfg, 1), c2 = simulate_corpus(cfg, 3);
  for (std::size_t k = 0; k < c1.size(); ++k)
    for (std::size_t i = 0; i < c1[k].samples.size(); ++i) CHECK(c1[k].samples[i].pos == c2[k].samples[i].pos);
  cfg.rng_seed = 1;
  const auto d = simulate_corpus(cfg);
  bool differs = false;
  for (std::size_t k = 0; k < d.size(); ++k) differs = differs || !(d[k].samples[50].pos == c1[k].samples[50].pos);
  CHECK(differs);

  cfg.n_trials = 0;
  CHECK(simulate_corpus(cfg).empty());
}

TEST_CASE("fixation noise has the configured per-axis spread") {
  SimConfig cfg;
  cfg.fixation_bias_sigma = 0.0;
  cfg.n_trials = 100;
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (const Trial& t : simulate_corpus(cfg)) {
    const std::size_t onset = t.extra["sim_onset"].get<std::size_t>();
    for (std::size_t i = onset; i < t.samples.size(); ++i) {
      const Vec2 d = t.samples[i].pos - t.target;
      sx += d.x * d.x;
      sy += d.y * d.y;
      ++n;
    }
  }
  REQUIRE(n >= 10000);
  CHECK(std::sqrt(sx / n) == doctest::Approx(0.02).epsilon(0.05));
  CHECK(std::sqrt(sy / n) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("default corpus survives cleaning") {
  SimConfig cfg;
  cfg.n_trials = 200;
  const auto cleaned = clean_corpus(simulate_corpus(cfg), CleaningRules{}, FixationConfig{});
  CHECK(cleaned.kept.size() == 200);
}

TEST_CASE("saccades approach the target") {
  SimConfig cfg;
  cfg.n_trials = 100;
  for (const Trial& t : simulate_corpus(cfg)) {
    const std::size_t begin = t.extra["sim_saccade_start"].get<std::size_t>();
    const std::size_t onset = t.extra["sim_onset"].get<std::size_t>();
    std::vector<double> idx, dist;
    for (std::size_t i = begin; i < onset; ++i) {
      idx.push_back(static_cast<double>(i));
      dist.push_back(distance(t.samples[i].pos, t.target));
    }
    CHECK(spearman(idx, dist) < -0.9);
  }
}

TEST_CASE("mean bias magnitude matches the Rayleigh mean") {
  SimConfig cfg;
  cfg.fixation_noise_sigma = 0.0;
  cfg.n_trials = 2000;
  double sum = 0;
  for (const Trial& t : simulate_corpus(cfg)) {
    const std::size_t onset = t.extra["sim_onset"].get<std::size_t>();
    sum += distance(t.samples[onset + 10].pos, t.target);
  }
  const double expected = cfg.fixation_bias_sigma * std::sqrt(M_PI / 2.0);
  CHECK(sum / 2000.0 == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("min_jerk profile") {
  CHECK(min_jerk(0.0) == 0.0);
  CHECK(min_jerk(1.0) == doctest::Approx(1.0));
  CHECK(min_jerk(0.5) == doctest::Approx(0.5));
  for (double s = 0.0; s < 1.0; s += 0.01) CHECK(min_jerk(s + 0.01) >= min_jerk(s));
}
