#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gazestab/checkpoint.hpp"
#include "gazestab/config.hpp"
#include "gazestab/errors.hpp"
#include "gazestab/pipeline.hpp"
#include "gazestab/plot.hpp"
#include "gazestab/trial_io.hpp"

using namespace gazestab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gazestab_unit";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("config keys parse, reject unknown keys and round trip") {
  PipelineConfig cfg;
  apply_config_text(cfg, "# comment\nmodel.d_model = 32\nmodel.n_heads=4\n\ntrain.lr0 = 0.01\n");
  CHECK(cfg.model.d_model == 32);
  CHECK(cfg.model.n_heads == 4);
  CHECK(cfg.train.lr0 == 0.01);
  try {
    apply_setting(cfg, "model.bogus", "1");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(cfg, "model.d_model = abc\n"), ConfigError);
  CHECK_THROWS_AS(apply_overrides(cfg, {"novalue"}), ConfigError);

  PipelineConfig other;
  apply_config_text(other, dump_config(cfg));
  CHECK(dump_config(other) == dump_config(cfg));

  // Registry defaults equal each module's defaults.
  const PipelineConfig fresh;
  CHECK(fresh.model.d_model == ModelConfig{}.d_model);
  CHECK(fresh.train.lr0 == TrainConfig{}.lr0);
  CHECK(fresh.loss.lambda == LossConfig{}.lambda);
  CHECK(fresh.sim.n_trials == SimConfig{}.n_trials);
  PipelineConfig parsed;
  apply_config_text(parsed, dump_config(fresh));
  CHECK(dump_config(parsed) == dump_config(fresh));

  PipelineConfig seeded;
  apply_setting(seeded, "seed", "42");
  CHECK(seeded.sim.rng_seed == 42);
  CHECK(seeded.train.seed == 42);
  CHECK(seeded.augment.rng_seed == 42);
}

TEST_CASE("simulate writes one line per trial and is repeatable") {
  PipelineConfig cfg;
  cfg.sim.n_trials = 12;
  std::ostringstream log;
  cmd_simulate(cfg, scratch("a.jsonl"), log);
  cmd_simulate(cfg, scratch("b.jsonl"), log);
  const std::string a = slurp(scratch("a.jsonl"));
  CHECK(count(a, "\n") == 12);
  CHECK(a == slurp(scratch("b.jsonl")));
  CHECK(log.str().find("seed=0") != std::string::npos);
  cfg.sim.n_trials = 0;
  cmd_simulate(cfg, scratch("empty.jsonl"), log);
  CHECK(slurp(scratch("empty.jsonl")).empty());
  CHECK_THROWS_AS(cmd_simulate(cfg, "/nonexistent_dir/x.jsonl", log), IoError);
}

TEST_CASE("segment keeps every noiseless trial") {
  PipelineConfig cfg;
  cfg.sim.n_trials = 20;
  cfg.sim.fixation_noise_sigma = 0.0;
  cfg.sim.fixation_bias_sigma = 0.0;
  std::ostringstream log;
  cmd_simulate(cfg, scratch("clean_in.jsonl"), log);
  cmd_segment(cfg, scratch("clean_in.jsonl"), scratch("clean_out.jsonl"), scratch("clean.csv"), log);
  CHECK(read_trials(scratch("clean_out.jsonl")).size() == 20);
  CHECK(count(slurp(scratch("clean.csv")), "\n") == 21);
}

TEST_CASE("plots are deterministic and count markers") {
  PipelineConfig cfg;
  cfg.sim.n_trials = 2;
  cfg.sim.fixation_noise_sigma = 0.0;
  cfg.sim.fixation_bias_sigma = 0.0;
  std::ostringstream log;
  cmd_simulate(cfg, scratch("p.jsonl"), log);
  cmd_segment(cfg, scratch("p.jsonl"), scratch("ps.jsonl"), "", log);
  PlotRequest req;
  req.input = scratch("ps.jsonl");
  req.out = scratch("p1.svg");
  cmd_plot(cfg, req, log);
  req.out = scratch("p2.svg");
  cmd_plot(cfg, req, log);
  const std::string svg = slurp(scratch("p1.svg"));
  CHECK(svg == slurp(scratch("p2.svg")));
  const Trial t = read_trials(scratch("ps.jsonl")).front();
  CHECK(count(svg, "class=\"raw\"") == t.samples.size() - *t.fixation_onset);

  CHECK_THROWS_AS(trial_svg(std::vector<Vec2>{}, std::vector<Vec2>{}, {0, 0}, "x"), DomainError);
  CHECK_THROWS_AS(histogram_svg(std::vector<double>{}, "x"), DomainError);
  MetricsReport empty;
  std::ofstream(scratch("empty_report.json")) << empty.to_json().dump(2);
  req.input = scratch("empty_report.json");
  req.out = scratch("h.svg");
  CHECK_THROWS_AS(cmd_plot(cfg, req, log), DomainError);
}

TEST_CASE("sweep enumerates every ablation cell") {
  const auto cells = sweep_cells();
  CHECK(cells.size() == 3 + 4 + 3 + 4);
  std::size_t refs = 0;
  for (const auto& c : cells) refs += c.reference;
  CHECK(refs == 4);
}
