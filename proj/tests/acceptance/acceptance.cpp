// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   acceptance [criterion ids...]   (no ids runs all of them)
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "gazestab/augmentation.hpp"
#include "gazestab/config.hpp"
#include "gazestab/evaluation.hpp"
#include "gazestab/gradcheck.hpp"
#include "gazestab/loss.hpp"
#include "gazestab/pipeline.hpp"
#include "gazestab/segmentation.hpp"
#include "gazestab/simulator.hpp"
#include "gazestab/training.hpp"

using namespace gazestab;
using ad::Mat;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e);
  return buf;
}

// 1 -----------------------------------------------------------------------

Outcome visual_angle_check() {
  const double v = visual_angle(0.2, 3.0);
  return {std::abs(v - 3.81) <= 0.01, fmt("visual_angle(0.2, 3.0) = %.4f deg, expected 3.81 +/- 0.01", v)};
}

// 2 -----------------------------------------------------------------------

double brute_mean(const std::vector<Vec2>& v, Vec2 g) {
  double s = 0;
  for (auto p : v) s += std::sqrt((p.x - g.x) * (p.x - g.x) + (p.y - g.y) * (p.y - g.y));
  return s / static_cast<double>(v.size());
}

double brute_rms(const std::vector<Vec2>& v, Vec2 g) {
  double s = 0;
  for (auto p : v) s += (p.x - g.x) * (p.x - g.x) + (p.y - g.y) * (p.y - g.y);
  return std::sqrt(s / static_cast<double>(v.size()));
}

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.001, 0.2);
  const double eps = 1e-9;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t m = len(rng);
    const Vec2 g{n(rng) * 0.5, n(rng) * 0.5};
    const double sr = scale(rng), sp = scale(rng);
    std::vector<Vec2> raw(m), pred(m);
    for (auto& p : raw) p = {g.x + sr * n(rng), g.y + sr * n(rng)};
    for (auto& p : pred) p = {g.x + sp * n(rng), g.y + sp * n(rng)};
    const double ci = brute_rms(raw, g) / (brute_rms(pred, g) + eps);
    const double ai = brute_mean(raw, g) / (brute_mean(pred, g) + eps);
    const double ad = brute_mean(pred, g);
    worst = std::max(worst, std::abs(concentration_improvement(raw, pred, g, eps) - ci) / ci);
    worst = std::max(worst, std::abs(accuracy_improvement(raw, pred, g, eps) - ai) / ai);
    worst = std::max(worst, std::abs(average_distance(pred, g) - ad) / ad);
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-9 && s < 1.0, fmt("max relative error %.3g over 50 sets (limit 1e-9), %.3f s", worst, s)};
}

// 3 -----------------------------------------------------------------------

Outcome loss_identities() {
  const auto t0 = Clock::now();
  const LossConfig d;
  Mat truth(4, 2);
  truth << 0.1, 0.2, -0.3, 0.05, 0.0, 0.4, 0.25, -0.1;
  const double zero = loss_comb(truth, truth, d.lambda_c, d.lambda_v);
  Mat shifted = truth;
  shifted.col(0).array() += 0.1;
  const double trans = loss_comb(shifted, truth, d.lambda_c, d.lambda_v);
  Mat a(2, 2), b(2, 2);
  a << 2, 0, -2, 0;
  b << 1, 0, -1, 0;
  const double disp = loss_comb(a, b, d.lambda_c, d.lambda_v);
  const double e_trans = 0.01 + 0.001 * 0.01;
  const double e_disp = 1.0 + 0.05 * 3.0;
  const bool ok = zero == 0.0 && std::abs(trans - e_trans) <= 1e-12 && std::abs(disp - e_disp) <= 1e-12 &&
                  seconds_since(t0) < 1.0;
  return {ok, fmt("identity %.3g, translation %.12g (expected %.12g), dispersion %.12g (expected %.12g)", zero, trans,
                  e_trans, disp, e_disp)};
}

// 4 -----------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  PipelineConfig cfg;
  cfg.gradcheck.d_model = 8;
  cfg.gradcheck.hist_len = 16;
  cfg.gradcheck.horizon = 8;
  cfg.gradcheck.check.n_coords = 240;
  const GradCheckReport r = run_gradcheck(cfg);
  const double s = seconds_since(t0);
  std::set<ParamGroup> groups;
  for (const auto& e : r.entries) groups.insert(e.group);
  const std::size_t coords = r.entries.size();
  const bool ok = r.passed && r.max_rel < 1e-4 && coords >= 200 && groups.size() == 8 && s < 30.0;
  return {ok, fmt("max relative error %.3g (limit 1e-4) over %.0f coordinates in %.0f groups, %.1f s (limit 30)",
                  r.max_rel, static_cast<double>(coords), static_cast<double>(groups.size()), s)};
}

// 5 -----------------------------------------------------------------------

Outcome augmentation_exactness() {
  const auto t0 = Clock::now();
  SimConfig sc;
  sc.n_trials = 100;
  sc.rng_seed = 55;
  const auto kept = clean_corpus(simulate_corpus(sc), CleaningRules{}, FixationConfig{}).kept;
  double worst_ratio = 0.0, worst_vel = 0.0;
  std::size_t points = 0;
  for (double beta : {0.25, 0.5, 0.75}) {
    for (const Trial& t : kept) {
      const Trial s = synthesize_trial(t, beta);
      const std::size_t onset = *t.fixation_onset;
      for (std::size_t i = onset + 1; i < t.samples.size(); ++i) {
        const double lhs = distance(s.samples[i].pos, t.target);
        const double rhs = beta * distance(t.samples[i].pos, t.target);
        worst_ratio = std::max(worst_ratio, std::abs(lhs - rhs));
        const double v = distance(s.samples[i].pos, s.samples[i - 1].pos) * sc.sample_rate;
        worst_vel = std::max(worst_vel, std::abs(s.samples[i].lin_speed - v));
        ++points;
      }
    }
  }
  const double s = seconds_since(t0);
  const bool ok = kept.size() == 100 && worst_ratio <= 1e-9 && worst_vel <= 1e-9 && s < 5.0;
  return {ok, fmt("%.0f trials, %.0f points, max contraction error %.3g, max velocity error %.3g, %.2f s",
                  static_cast<double>(kept.size()), static_cast<double>(points), worst_ratio, worst_vel, s)};
}

// 6 -----------------------------------------------------------------------

Outcome segmentation_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(12, 200);
  const FixationConfig cfg;
  std::size_t agree = 0, nones = 0;
  for (int k = 0; k < 100; ++k) {
    Trial t;
    t.id = "r" + std::to_string(k);
    t.target = {0.0, 0.0};
    const int n = len(rng);
    const double p_in = u(rng);
    for (int i = 0; i < n; ++i) {
      GazeSample s;
      s.t = i / 60.0;
      const double r = u(rng) < p_in + 0.4 ? 0.1 * u(rng) : 0.1 + u(rng);
      const double a = 2 * M_PI * u(rng);
      s.pos = {r * std::cos(a), r * std::sin(a)};
      s.ang_speed = u(rng) < 0.8 ? 25.0 * u(rng) : 20.0 + 60.0 * u(rng);
      t.samples.push_back(s);
    }
    std::optional<std::size_t> expect;
    for (std::size_t i = 0; i + cfg.window_samples <= t.samples.size() && !expect; ++i) {
      bool inside = true;
      double ang = 0.0;
      for (std::size_t j = i; j < i + cfg.window_samples; ++j) {
        inside = inside && distance(t.samples[j].pos, t.target) <= cfg.region_radius;
        ang += t.samples[j].ang_speed;
      }
      if (inside && ang / static_cast<double>(cfg.window_samples) < cfg.ang_vel_threshold) expect = i;
    }
    const auto got = fixation_onset(t, cfg);
    agree += got == expect;
    nones += !expect.has_value();
  }
  const double s = seconds_since(t0);
  return {agree == 100 && nones > 0 && nones < 100 && s < 5.0,
          fmt("%.0f/100 exact matches (%.0f without onset), %.3f s", static_cast<double>(agree),
              static_cast<double>(nones), s)};
}

// 7 -----------------------------------------------------------------------

Outcome rollout_contract() {
  std::size_t calls = 0;
  Forecaster echo = [&](const Mat& x, const Mat&) {
    ++calls;
    Mat out(64, x.cols());
    for (Eigen::Index i = 0; i < 64; ++i) out.row(i) = x.row(x.rows() - 1);
    return out;
  };
  Mat h = Mat::Random(96, 4), times(96, 1);
  for (Eigen::Index i = 0; i < 96; ++i) times(i, 0) = (i - 96) / 60.0;
  const Mat a = sliding_rollout(echo, h, times, 64, 16, 64, 60.0);
  const std::size_t calls16 = calls;
  calls = 0;
  const Mat b = sliding_rollout(echo, h, times, 64, 24, 64, 60.0);
  const std::size_t calls24 = calls;
  const bool ok = calls16 == 4 && a.rows() == 64 && calls24 == 3 && b.rows() == 64;
  return {ok, fmt("l_w=16: %.0f calls, %.0f points; l_w=24: %.0f calls, %.0f points", static_cast<double>(calls16),
                  static_cast<double>(a.rows()), static_cast<double>(calls24), static_cast<double>(b.rows()))};
}

// 8 -----------------------------------------------------------------------

// Desk-scale training settings. Architecture and loss weights are the
// defaults; the optimizer settings are tuned for a corpus of a few hundred
// examples (see README).
PipelineConfig desk_config() {
  PipelineConfig cfg;
  cfg.set_seed(1);
  cfg.sim.fixation_noise_sigma = 0.02;
  cfg.sim.fixation_bias_sigma = 0.015;
  cfg.augment.beta = 0.5;
  cfg.augment.blend_ratio = 0.5;
  cfg.train.lr0 = 0.005;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 80;
  cfg.loss.weight_decay = 1e-6;
  return cfg;
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const PipelineConfig cfg = desk_config();
  const ExperimentResult r = run_experiment(cfg, 200, 50);
  const double s = seconds_since(t0);
  const double ai = r.report.ai.mean, ci = r.report.ci.mean;
  const double ratio = r.report.ad_pred.mean / r.report.ad_raw.mean;
  const bool ok = ai >= 1.2 && ci >= 1.0 && ratio <= 0.8 && s <= 600.0;
  return {ok, fmt("AI %.3f (>= 1.2), CI %.3f (>= 1.0), AD pred/raw %.3f (<= 0.8), ", ai, ci, ratio) +
                  fmt("AD pred %.4f m, raw %.4f m, ", r.report.ad_pred.mean, r.report.ad_raw.mean) +
                  fmt("%.0f epochs, %.0f s (limit 600)", static_cast<double>(r.train.log.epochs.size()), s)};
}

// 9 -----------------------------------------------------------------------

Outcome latency() {
  const Model model(ModelConfig{}, 0);
  Mat h = Mat::Random(96, 4) * 0.1, times(96, 1);
  for (Eigen::Index i = 0; i < 96; ++i) times(i, 0) = (i - 96) / 60.0;
  rollout(model, h, times, 16, 60.0);  // warm-up
  double best = 1e9, total = 0.0;
  const int reps = 20;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    const Mat out = rollout(model, h, times, 16, 60.0);
    const double s = seconds_since(t0);
    best = std::min(best, s);
    total += s;
  }
  const double mean = total / reps;
  return {mean < 0.1, fmt("mean %.2f ms, best %.2f ms per 64-point rollout (limit 100 ms)", mean * 1e3, best * 1e3)};
}

// 10 ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  return rc;
}

Outcome determinism(const std::string& cli) {
  const auto t0 = Clock::now();
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not found: " + cli};
  const fs::path root = fs::temp_directory_path() / "gazestab_determinism";
  fs::remove_all(root);
  const std::string common = " --threads 1 --set seed=7";
  const std::string train_set = " --set train.epochs=6 --set train.batch_size=16 --set train.lr0=0.003";
  std::vector<std::string> digests;
  for (int runno = 0; runno < 2; ++runno) {
    const fs::path d = root / ("run" + std::to_string(runno));
    fs::create_directories(d);
    const std::string q = "'" + cli + "'";
    const auto p = [&](const char* name) { return " '" + (d / name).string() + "'"; };
    int rc = 0;
    rc |= run(q + " simulate" + common + " --set sim.n_trials=60 -o" + p("sim.jsonl"));
    rc |= run(q + " segment" + common + " -i" + p("sim.jsonl") + " -o" + p("seg.jsonl") + " -r" + p("clean.csv"));
    rc |= run(q + " augment" + common + " -i" + p("seg.jsonl") + " -o" + p("aug.jsonl"));
    rc |= run(q + " train" + common + train_set + " -i" + p("aug.jsonl") + " -c" + p("model.tgzr") + " -l" + p("train.csv"));
    rc |= run(q + " evaluate" + common + " -c" + p("model.tgzr") + " -i" + p("seg.jsonl") + " -r" + p("report.json"));
    if (rc != 0) return {false, "a pipeline stage failed in run " + std::to_string(runno)};
    std::string all;
    for (const char* f : {"sim.jsonl", "seg.jsonl", "clean.csv", "aug.jsonl", "model.tgzr", "train.csv", "report.json"})
      all += std::string(f) + ":" + slurp(d / f) + "\n";
    digests.push_back(all);
  }
  const bool same_ckpt = slurp(root / "run0" / "model.tgzr") == slurp(root / "run1" / "model.tgzr");
  const bool same_report = slurp(root / "run0" / "report.json") == slurp(root / "run1" / "report.json");
  const double s = seconds_since(t0);
  const bool ok = digests[0] == digests[1] && same_ckpt && same_report && s <= 600.0;
  return {ok, std::string("checkpoints ") + (same_ckpt ? "identical" : "differ") + ", reports " +
                  (same_report ? "identical" : "differ") + ", all stage outputs " +
                  (digests[0] == digests[1] ? "identical" : "differ") + fmt(", %.0f s", s)};
}

// 11 ----------------------------------------------------------------------

Outcome sweep_shape() {
  const auto t0 = Clock::now();
  PipelineConfig cfg = desk_config();
  cfg.set_seed(11);
  std::ostringstream log;
  const fs::path out = fs::temp_directory_path() / "gazestab_sweep.csv";
  const SweepResult r = cmd_sweep(cfg, out, log);
  const double s = seconds_since(t0);
  std::ifstream in(out);
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  while (std::getline(in, line)) ++rows;
  bool all_ok = true;
  std::string grids;
  for (const auto& [g, ok] : r.reference_ok) {
    all_ok = all_ok && ok;
    grids += " " + g + (ok ? ":ok" : ":out");
  }
  bool finite = true;
  for (const auto& row : r.rows) finite = finite && std::isfinite(row.ai) && std::isfinite(row.ci);
  const bool pass = rows == 14 && finite && all_ok && s <= 45 * 60.0;
  return {pass, fmt("%.0f CSV rows (expected 14), ", static_cast<double>(rows)) + "reference within 10% of best:" +
                    grids + fmt(", %.0f s (limit 2700)", s)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
#ifdef GAZESTAB_CLI_PATH
  cli = GAZESTAB_CLI_PATH;
#endif
  if (const char* env = std::getenv("GAZESTAB_CLI")) cli = env;

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"visual angle", visual_angle_check}},
      {2, {"metric oracle equivalence", metric_oracle}},
      {3, {"loss identities", loss_identities}},
      {4, {"gradient verification", gradient_check}},
      {5, {"augmentation exactness", augmentation_exactness}},
      {6, {"segmentation oracle", segmentation_oracle}},
      {7, {"sliding-window contract", rollout_contract}},
      {8, {"end-to-end desk-scale training", end_to_end}},
      {9, {"inference latency", latency}},
      {10, {"determinism", [&] { return determinism(cli); }}},
      {11, {"ablation sweep structure", sweep_shape}},
  };
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  if (ids.empty())
    for (const auto& [id, _] : criteria) ids.push_back(id);

  int failures = 0;
  for (int id : ids) {
    auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << it->second.first << "): " << o.detail
              << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
