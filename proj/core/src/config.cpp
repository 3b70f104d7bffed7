#include "gazestab/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gazestab/errors.hpp"

namespace gazestab {

void PipelineConfig::validate() const {
  sim.validate();
  fixation.validate();
  cleaning.validate();
  augment.validate();
  model.validate();
  train.validate(model);
  loss.validate();
  eval.validate(model);
  if (sweep.n_trials < 1 || sweep.n_eval_trials < 1 || sweep.epochs < 1)
    throw ConfigError("sweep.n_trials, sweep.n_eval_trials and sweep.epochs must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

void PipelineConfig::set_seed(std::uint64_t seed) {
  sim.rng_seed = seed;
  augment.rng_seed = seed;
  train.seed = seed;
  gradcheck.check.seed = seed;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for config key '" + std::string(key) + "' (expected " +
                    expected + ")");
}

template <class T>
T parse_value(std::string_view key, std::string_view raw);

template <>
double parse_value<double>(std::string_view key, std::string_view raw) {
  const std::string s = trim(raw);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) bad_value(key, raw, "a real number");
  return v;
}

template <>
std::uint64_t parse_value<std::uint64_t>(std::string_view key, std::string_view raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, raw, "a non-negative integer");
  return v;
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t keys parse as uint64_t");

template <>
bool parse_value<bool>(std::string_view key, std::string_view raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, raw, "true or false");
}

template <>
std::string parse_value<std::string>(std::string_view, std::string_view raw) {
  return trim(raw);
}

template <>
std::vector<std::size_t> parse_value<std::vector<std::size_t>>(std::string_view key, std::string_view raw) {
  std::vector<std::size_t> out;
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_value<std::size_t>(key, item));
  if (out.empty()) bad_value(key, raw, "a comma-separated list of integers");
  return out;
}

template <>
ProjectionMode parse_value<ProjectionMode>(std::string_view key, std::string_view raw) {
  try {
    return projection_mode_from_string(trim(raw));
  } catch (const ConfigError&) {
    bad_value(key, raw, "fused, attention_only or linear_only");
  }
}

std::string show(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }
std::string show(ProjectionMode v) { return to_string(v); }
std::string show(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <class Ref>
ConfigKey make_key(std::string key, std::string help, Ref ref) {
  ConfigKey k;
  k.key = key;
  k.help = std::move(help);
  k.set = [key, ref](PipelineConfig& c, std::string_view v) {
    auto& slot = ref(c);
    slot = parse_value<std::remove_reference_t<decltype(slot)>>(key, v);
  };
  k.get = [ref](const PipelineConfig& c) {
    return show(ref(const_cast<PipelineConfig&>(c)));
  };
  return k;
}

#define GZ_KEY(name, help, field) make_key(name, help, [](PipelineConfig& c) -> auto& { return c.field; })

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  ConfigKey seed;
  seed.key = "seed";
  seed.help = "seed for simulation, augmentation, training and gradient check";
  seed.set = [](PipelineConfig& c, std::string_view v) { c.set_seed(parse_value<std::uint64_t>("seed", v)); };
  seed.get = [](const PipelineConfig& c) { return show(c.sim.rng_seed); };
  keys.push_back(seed);
  keys.push_back(GZ_KEY("threads", "worker threads; 1 is fully serial", threads));

  keys.push_back(GZ_KEY("sim.n_trials", "number of simulated trials", sim.n_trials));
  keys.push_back(GZ_KEY("sim.sample_rate", "sampling rate in Hz", sim.sample_rate));
  keys.push_back(GZ_KEY("sim.trial_len", "samples per trial", sim.trial_len));
  keys.push_back(GZ_KEY("sim.plane_extent", "side of the square target area in m", sim.plane_extent));
  keys.push_back(GZ_KEY("sim.plane_distance", "viewing distance in m", sim.plane_distance));
  keys.push_back(GZ_KEY("sim.saccade_peak_speed", "median saccade peak speed in m/s", sim.saccade_peak_speed));
  keys.push_back(GZ_KEY("sim.fixation_noise_sigma", "fixation noise stddev per axis in m", sim.fixation_noise_sigma));
  keys.push_back(GZ_KEY("sim.fixation_noise_corr", "lag-one correlation of fixation noise", sim.fixation_noise_corr));
  keys.push_back(GZ_KEY("sim.search_noise_sigma", "search-phase jitter stddev per axis in m", sim.search_noise_sigma));
  keys.push_back(GZ_KEY("sim.fixation_bias_sigma", "per-trial bias stddev per axis in m", sim.fixation_bias_sigma));
  keys.push_back(GZ_KEY("sim.onset_min", "earliest landing sample", sim.onset_min));
  keys.push_back(GZ_KEY("sim.onset_max", "latest landing sample", sim.onset_max));
  keys.push_back(GZ_KEY("sim.min_amplitude", "minimum start-to-target distance in m", sim.min_amplitude));
  keys.push_back(GZ_KEY("sim.edge_margin", "margin kept from the area border in m", sim.edge_margin));
  keys.push_back(GZ_KEY("sim.max_offset", "clamp on fixation offsets in m", sim.max_offset));
  keys.push_back(GZ_KEY("sim.rng_seed", "simulation seed", sim.rng_seed));

  keys.push_back(GZ_KEY("fixation.region_radius", "fixation region radius in m", fixation.region_radius));
  keys.push_back(GZ_KEY("fixation.ang_vel_threshold", "mean angular speed threshold in deg/s", fixation.ang_vel_threshold));
  keys.push_back(GZ_KEY("fixation.window_samples", "onset window length in samples", fixation.window_samples));
  keys.push_back(GZ_KEY("fixation.sample_rate", "sampling rate in Hz", fixation.sample_rate));

  keys.push_back(GZ_KEY("cleaning.min_uninterrupted_fixation", "required fixation run in s", cleaning.min_uninterrupted_fixation));
  keys.push_back(GZ_KEY("cleaning.eval_window", "window for the fixation run check in s", cleaning.eval_window));
  keys.push_back(GZ_KEY("cleaning.max_consecutive_outside", "samples outside before fixation loss", cleaning.max_consecutive_outside));
  keys.push_back(GZ_KEY("cleaning.outside_radius", "fixation loss radius in m", cleaning.outside_radius));
  keys.push_back(GZ_KEY("cleaning.plane_extent", "side of the allowed area in m", cleaning.plane_extent));

  keys.push_back(GZ_KEY("augment.beta", "contraction factor in (0, 1)", augment.beta));
  keys.push_back(GZ_KEY("augment.blend_ratio", "synthetic share of the blended corpus", augment.blend_ratio));
  keys.push_back(GZ_KEY("augment.rng_seed", "augmentation seed", augment.rng_seed));
  keys.push_back(GZ_KEY("augment.literal_formula", "use the printed contraction formula verbatim", augment.literal_formula));
  keys.push_back(GZ_KEY("augment.sample_rate", "sampling rate in Hz", augment.sample_rate));

  keys.push_back(GZ_KEY("model.c_in", "input channels", model.c_in));
  keys.push_back(GZ_KEY("model.d_model", "embedding width", model.d_model));
  keys.push_back(GZ_KEY("model.n_heads", "attention heads", model.n_heads));
  keys.push_back(GZ_KEY("model.n_blocks", "frequency blocks in the backbone", model.n_blocks));
  keys.push_back(GZ_KEY("model.top_k_periods", "periods per block", model.top_k_periods));
  keys.push_back(GZ_KEY("model.inception_kernels", "odd kernel sizes, comma separated", model.inception_kernels));
  keys.push_back(GZ_KEY("model.d_ff", "hidden width inside each block", model.d_ff));
  keys.push_back(GZ_KEY("model.hist_len", "input length T", model.hist_len));
  keys.push_back(GZ_KEY("model.horizon", "forecast length", model.horizon));
  keys.push_back(GZ_KEY("model.alpha_init", "initial branch balance", model.alpha_init));
  keys.push_back(GZ_KEY("model.std_epsilon", "floor of the standardization scale", model.std_epsilon));
  keys.push_back(GZ_KEY("model.projection", "fused, attention_only or linear_only", model.projection));

  keys.push_back(GZ_KEY("train.lr0", "initial learning rate", train.lr0));
  keys.push_back(GZ_KEY("train.epochs", "maximum epochs", train.epochs));
  keys.push_back(GZ_KEY("train.patience", "early stopping patience in epochs", train.patience));
  keys.push_back(GZ_KEY("train.batch_size", "examples per optimizer step", train.batch_size));
  keys.push_back(GZ_KEY("train.window", "points kept per rollout step", train.window));
  keys.push_back(GZ_KEY("train.hist_buffer", "history samples kept before onset", train.hist_buffer));
  keys.push_back(GZ_KEY("train.min_history", "real history samples required", train.min_history));
  keys.push_back(GZ_KEY("train.seed", "training seed", train.seed));
  keys.push_back(GZ_KEY("train.val_fraction", "held-out share of trial groups", train.val_fraction));
  keys.push_back(GZ_KEY("train.sample_rate", "sampling rate in Hz", train.sample_rate));
  keys.push_back(GZ_KEY("train.detach_windows", "stop gradients between rollout steps", train.detach_windows));

  keys.push_back(GZ_KEY("loss.lambda_c", "centroid term weight", loss.lambda_c));
  keys.push_back(GZ_KEY("loss.lambda_v", "dispersion term weight", loss.lambda_v));
  keys.push_back(GZ_KEY("loss.lambda", "combined vs velocity loss balance", loss.lambda));
  keys.push_back(GZ_KEY("loss.weight_decay", "L2 penalty on weights", loss.weight_decay));
  keys.push_back(GZ_KEY("loss.velocity_dt", "time step of velocity differences", loss.velocity_dt));
  keys.push_back(GZ_KEY("loss.use_center", "include the centroid term", loss.use_center));
  keys.push_back(GZ_KEY("loss.use_dispersion", "include the dispersion term", loss.use_dispersion));

  keys.push_back(GZ_KEY("eval.window", "points kept per rollout step", eval.window));
  keys.push_back(GZ_KEY("eval.hist_buffer", "history samples kept before onset", eval.hist_buffer));
  keys.push_back(GZ_KEY("eval.min_history", "real history samples required", eval.min_history));
  keys.push_back(GZ_KEY("eval.sample_rate", "sampling rate in Hz", eval.sample_rate));
  keys.push_back(GZ_KEY("eval.epsilon", "ratio guard", eval.epsilon));
  keys.push_back(GZ_KEY("eval.timing", "record wall-clock time per rollout", eval.timing));

  keys.push_back(GZ_KEY("gradcheck.d_model", "embedding width of the check model", gradcheck.d_model));
  keys.push_back(GZ_KEY("gradcheck.n_heads", "attention heads of the check model", gradcheck.n_heads));
  keys.push_back(GZ_KEY("gradcheck.d_ff", "block width of the check model", gradcheck.d_ff));
  keys.push_back(GZ_KEY("gradcheck.hist_len", "input length of the check model", gradcheck.hist_len));
  keys.push_back(GZ_KEY("gradcheck.horizon", "forecast length of the check model", gradcheck.horizon));
  keys.push_back(GZ_KEY("gradcheck.batch", "examples in the checked batch", gradcheck.batch));
  keys.push_back(GZ_KEY("gradcheck.perturb", "noise added to initial parameters", gradcheck.perturb));
  keys.push_back(GZ_KEY("gradcheck.n_coords", "coordinates to check", gradcheck.check.n_coords));
  keys.push_back(GZ_KEY("gradcheck.step", "central difference step", gradcheck.check.step));
  keys.push_back(GZ_KEY("gradcheck.tolerance", "maximum relative error", gradcheck.check.tolerance));
  keys.push_back(GZ_KEY("gradcheck.rel_floor", "relative error denominator floor", gradcheck.check.rel_floor));
  keys.push_back(GZ_KEY("gradcheck.window", "rollout window of the check", gradcheck.check.window));

  keys.push_back(GZ_KEY("sweep.n_trials", "simulated training trials per cell", sweep.n_trials));
  keys.push_back(GZ_KEY("sweep.n_eval_trials", "simulated held-out trials", sweep.n_eval_trials));
  keys.push_back(GZ_KEY("sweep.epochs", "maximum epochs per cell", sweep.epochs));
  keys.push_back(GZ_KEY("sweep.tolerance", "allowed AI shortfall of the reference cells", sweep.tolerance));

  keys.push_back(GZ_KEY("io.input", "input path", io.input));
  keys.push_back(GZ_KEY("io.output", "output path", io.output));
  keys.push_back(GZ_KEY("io.report", "report path", io.report));
  keys.push_back(GZ_KEY("io.checkpoint", "checkpoint path", io.checkpoint));
  keys.push_back(GZ_KEY("io.log", "training log path", io.log));
  return keys;
}

#undef GZ_KEY

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

std::vector<const ConfigKey*> keys_with_prefixes(const std::vector<std::string>& prefixes) {
  std::vector<const ConfigKey*> out;
  for (const auto& k : config_keys())
    for (const auto& p : prefixes)
      if (k.key == p || (!p.empty() && p.back() == '.' && k.key.rfind(p, 0) == 0)) {
        out.push_back(&k);
        break;
      }
  return out;
}

void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : config_keys()) {
    if (k.key == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(PipelineConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      apply_setting(cfg, trim(body.substr(0, eq)), body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must look like key=value");
    apply_setting(cfg, trim(std::string_view(o).substr(0, eq)), std::string_view(o).substr(eq + 1));
  }
}

bool apply_seed_env(PipelineConfig& cfg) {
  const char* v = std::getenv("TIMEGAZER_SEED");
  if (!v || !*v) return false;
  cfg.set_seed(parse_value<std::uint64_t>("TIMEGAZER_SEED", v));
  return true;
}

std::string dump_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.key + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace gazestab
