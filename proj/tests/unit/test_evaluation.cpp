#include <doctest.h>

#include <random>
#include <sstream>

#include "gazestab/errors.hpp"
#include "gazestab/evaluation.hpp"
#include "gazestab/segmentation.hpp"
#include "gazestab/simulator.hpp"

using namespace gazestab;

namespace {

std::vector<Vec2> random_set(std::mt19937_64& rng, std::size_t n, double s) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<Vec2> v(n);
  for (auto& p : v) p = {d(rng), d(rng)};
  return v;
}

double naive_mean_dist(const std::vector<Vec2>& v, Vec2 g) {
  double s = 0;
  for (auto p : v) s += std::sqrt((p.x - g.x) * (p.x - g.x) + (p.y - g.y) * (p.y - g.y));
  return s / static_cast<double>(v.size());
}

double naive_rms(const std::vector<Vec2>& v, Vec2 g) {
  double s = 0;
  for (auto p : v) s += (p.x - g.x) * (p.x - g.x) + (p.y - g.y) * (p.y - g.y);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("metric examples") {
  const Vec2 o{0, 0};
  const std::vector<Vec2> raw{{0.1, 0}, {-0.1, 0}}, pred{{0.05, 0}, {-0.05, 0}};
  CHECK(concentration_improvement(raw, pred, o) == doctest::Approx(2.0));
  CHECK(concentration_improvement(raw, raw, o) == doctest::Approx(1.0));
  CHECK(accuracy_improvement(raw, raw, o) == doctest::Approx(1.0));
  const std::vector<Vec2> r8{{0.08, 0}, {0, -0.08}}, p4{{0.04, 0}, {0, 0.04}};
  CHECK(accuracy_improvement(r8, p4, o) == doctest::Approx(2.0));
  const std::vector<Vec2> at{{0, 0}, {0, 0}};
  CHECK(concentration_improvement(raw, at, o, 1e-9) == doctest::Approx(0.1 / 1e-9));
  CHECK(accuracy_improvement(raw, at, o, 1e-9) == doctest::Approx(0.1 / 1e-9));
  CHECK(std::isfinite(accuracy_improvement(raw, at, o)));
  CHECK(average_distance(at, o) == 0.0);
  const std::vector<Vec2> tri{{0.03, 0.04}};
  CHECK(average_distance(tri, o) == doctest::Approx(0.05));
  CHECK_THROWS_AS(average_distance(std::vector<Vec2>{}, o), DomainError);
}

TEST_CASE("metrics match a naive oracle") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = len(rng);
    const auto raw = random_set(rng, n, 0.05), pred = random_set(rng, n, 0.02);
    const Vec2 g{0.01 * i, -0.005 * i};
    const double ai = (naive_mean_dist(raw, g)) / (naive_mean_dist(pred, g) + 1e-9);
    const double ci = naive_rms(raw, g) / (naive_rms(pred, g) + 1e-9);
    CHECK(std::abs(accuracy_improvement(raw, pred, g) - ai) <= 1e-9 * ai);
    CHECK(std::abs(concentration_improvement(raw, pred, g) - ci) <= 1e-9 * ci);
    CHECK(std::abs(average_distance(pred, g) - naive_mean_dist(pred, g)) <= 1e-9 * naive_mean_dist(pred, g));
  }
}

TEST_CASE("metric invariances") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto raw = random_set(rng, 20, 0.05), pred = random_set(rng, 20, 0.02);
    const Vec2 g{0.1, 0.2};
    const double s = 0.5 + i * 0.1;
    const Vec2 shift{0.3, -0.7};
    std::vector<Vec2> rs, ps, rt, pt;
    for (auto p : raw) rs.push_back(g + s * (p - g)), rt.push_back(p + shift);
    for (auto p : pred) ps.push_back(g + s * (p - g)), pt.push_back(p + shift);
    CHECK(accuracy_improvement(rs, ps, g, 0.0) == doctest::Approx(accuracy_improvement(raw, pred, g, 0.0)));
    CHECK(concentration_improvement(rs, ps, g, 0.0) == doctest::Approx(concentration_improvement(raw, pred, g, 0.0)));
    CHECK(average_distance(ps, g) == doctest::Approx(s * average_distance(pred, g)));
    CHECK(accuracy_improvement(rt, pt, g + shift) == doctest::Approx(accuracy_improvement(raw, pred, g)));
    CHECK(concentration_improvement(rt, pt, g + shift) == doctest::Approx(concentration_improvement(raw, pred, g)));
    std::vector<Vec2> closer;
    for (auto p : raw) closer.push_back(g + 0.9 * (p - g));
    CHECK(accuracy_improvement(raw, closer, g) > 1.0);
  }
}

TEST_CASE("summaries and report formats") {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const Summary s = summarize(v);
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));

  MetricsReport r;
  r.per_trial.push_back(score_trial("a", std::vector<Vec2>{{0.1, 0}}, std::vector<Vec2>{{0.05, 0}}, {0, 0}, 1e-9));
  r.per_trial.push_back(score_trial("b", std::vector<Vec2>{{0.2, 0}, {0.1, 0}}, std::vector<Vec2>{{0.1, 0}}, {0, 0}, 1e-9));
  CHECK(r.per_trial[1].n_points == 1);
  std::vector<double> ai{r.per_trial[0].ai, r.per_trial[1].ai};
  r.ai = summarize(ai);
  std::stringstream js;
  write_report_json(js, r);
  const MetricsReport back = MetricsReport::from_json(nlohmann::json::parse(js.str()));
  CHECK(back.per_trial.size() == 2);
  CHECK(back.ai.mean == doctest::Approx(r.ai.mean));
  CHECK(nlohmann::json::parse(js.str())["timing"].is_null());
  std::ostringstream txt, csv;
  write_report_text(txt, r);
  write_report_csv(csv, r);
  CHECK(txt.str().find("AI") != std::string::npos);
  CHECK(csv.str().rfind("trial_id,ci,ai,ad_pred,ad_raw,n_points,rollout_seconds\n", 0) == 0);
}

TEST_CASE("echo model on a noiseless corpus has zero AD and a deterministic report") {
  SimConfig s;
  s.n_trials = 10;
  s.fixation_noise_sigma = 0.0;
  s.fixation_bias_sigma = 0.0;
  s.search_noise_sigma = 0.0;
  const auto trials = clean_corpus(simulate_corpus(s), CleaningRules{}, FixationConfig{}).kept;
  REQUIRE(trials.size() == 10);
  // Echo the last settled point: under the noiseless simulator it is the target.
  for (const auto& t : trials) {
    const std::size_t settled = t.extra["sim_onset"].get<std::size_t>();
    std::vector<Vec2> raw, echo;
    for (std::size_t i = *t.fixation_onset; i < t.samples.size(); ++i) {
      raw.push_back(t.samples[i].pos);
      echo.push_back(t.samples[settled].pos);
    }
    const TrialMetrics m = score_trial(t.id, raw, echo, t.target, 1e-9);
    CHECK(m.ad_pred == 0.0);
  }
  ModelConfig mc;
  mc.d_model = 8;
  mc.n_heads = 2;
  mc.d_ff = 8;
  mc.hist_len = 16;
  mc.horizon = 8;
  const Model model(mc, 1);
  EvalConfig ec;
  ec.window = 4;
  ec.hist_buffer = 24;
  ec.min_history = 16;
  std::ostringstream a, b;
  write_report_json(a, evaluate_corpus(model, trials, ec));
  ec.threads = 3;
  write_report_json(b, evaluate_corpus(model, trials, ec));
  CHECK(a.str() == b.str());
}
