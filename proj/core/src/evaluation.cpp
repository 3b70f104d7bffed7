#include "gazestab/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "gazestab/errors.hpp"
#include "gazestab/parallel.hpp"
#include "gazestab/training.hpp"

namespace gazestab {

namespace {

void require_points(std::span<const Vec2> pts, const char* what) {
  if (pts.empty()) throw DomainError(std::string(what) + ": empty point set");
}

double rms_distance(std::span<const Vec2> pts, Vec2 target) {
  double s = 0.0;
  for (Vec2 p : pts) {
    const Vec2 d = p - target;
    s += d.x * d.x + d.y * d.y;
  }
  return std::sqrt(s / static_cast<double>(pts.size()));
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double concentration_improvement(std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target, double eps) {
  require_points(raw, "concentration_improvement");
  require_points(pred, "concentration_improvement");
  return rms_distance(raw, target) / (rms_distance(pred, target) + eps);
}

double accuracy_improvement(std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target, double eps) {
  require_points(raw, "accuracy_improvement");
  require_points(pred, "accuracy_improvement");
  return average_distance(raw, target) / (average_distance(pred, target) + eps);
}

double average_distance(std::span<const Vec2> points, Vec2 target) {
  require_points(points, "average_distance");
  double s = 0.0;
  for (Vec2 p : points) s += distance(p, target);
  return s / static_cast<double>(points.size());
}

void EvalConfig::validate(const ModelConfig& mcfg) const {
  if (window < 1 || window > mcfg.horizon) throw ConfigError("eval.window must lie in [1, model.horizon]");
  if (hist_buffer < mcfg.hist_len) throw ConfigError("eval.hist_buffer must be >= model.hist_len");
  if (min_history < 1 || min_history > hist_buffer) throw ConfigError("eval.min_history must lie in [1, eval.hist_buffer]");
  if (!(sample_rate > 0.0)) throw ConfigError("eval.sample_rate must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("eval.epsilon must be > 0");
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(values.size()));
  return s;
}

TrialMetrics score_trial(const std::string& id, std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target,
                         double eps) {
  require_points(raw, "score_trial");
  require_points(pred, "score_trial");
  const std::size_t n = std::min(raw.size(), pred.size());
  const auto r = raw.first(n);
  const auto p = pred.first(n);
  TrialMetrics m;
  m.trial_id = id;
  m.ci = concentration_improvement(r, p, target, eps);
  m.ai = accuracy_improvement(r, p, target, eps);
  m.ad_pred = average_distance(p, target);
  m.ad_raw = average_distance(r, target);
  m.n_points = n;
  return m;
}

std::optional<TrialForecast> forecast_trial(const Model& model, const Trial& trial, const EvalConfig& cfg,
                                            std::string* reason) {
  auto fail = [&](const char* why) -> std::optional<TrialForecast> {
    if (reason) *reason = why;
    return std::nullopt;
  };
  if (!trial.fixation_onset) return fail("no fixation onset");
  const std::size_t onset = *trial.fixation_onset;
  if (onset >= trial.samples.size()) return fail("no fixation samples");
  if (onset < cfg.min_history) return fail("insufficient history");
  const auto ex = make_example(trial, cfg.hist_buffer, model.config().horizon, cfg.min_history, cfg.sample_rate);
  if (!ex) return fail("insufficient history");
  const ad::Mat pred = rollout(model, ex->history, ex->history_times, cfg.window, cfg.sample_rate);
  TrialForecast f;
  for (Eigen::Index i = 0; i < ex->target.rows(); ++i) f.raw.push_back({ex->target(i, 0), ex->target(i, 1)});
  for (Eigen::Index i = 0; i < pred.rows(); ++i) f.pred.push_back({pred(i, 0), pred(i, 1)});
  return f;
}

MetricsReport evaluate_corpus(const Model& model, const std::vector<Trial>& trials, const EvalConfig& cfg) {
  cfg.validate(model.config());
  struct Slot {
    std::optional<TrialMetrics> metrics;
    std::string reason;
  };
  std::vector<Slot> slots(trials.size());
  auto run = [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    auto f = forecast_trial(model, trials[i], cfg, &slots[i].reason);
    const auto stop = std::chrono::steady_clock::now();
    if (!f) return;
    TrialMetrics m = score_trial(trials[i].id, f->raw, f->pred, trials[i].target, cfg.epsilon);
    if (cfg.timing) m.rollout_seconds = std::chrono::duration<double>(stop - start).count();
    slots[i].metrics = m;
  };
  // Timed runs stay on one thread so workers do not skew each other.
  parallel_for(trials.size(), cfg.timing ? 1 : cfg.threads, run);

  MetricsReport report;
  report.epsilon = cfg.epsilon;
  std::vector<double> ci, ai, adp, adr, secs;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!slots[i].metrics) {
      report.skipped.push_back({trials[i].id, slots[i].reason});
      continue;
    }
    const TrialMetrics& m = *slots[i].metrics;
    report.per_trial.push_back(m);
    ci.push_back(m.ci);
    ai.push_back(m.ai);
    adp.push_back(m.ad_pred);
    adr.push_back(m.ad_raw);
    secs.push_back(m.rollout_seconds);
  }
  report.ci = summarize(ci);
  report.ai = summarize(ai);
  report.ad_pred = summarize(adp);
  report.ad_raw = summarize(adr);
  if (cfg.timing && !secs.empty()) report.timing = summarize(secs);
  return report;
}

namespace {

nlohmann::ordered_json summary_json(const Summary& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

Summary summary_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("stddev").get<double>()}; }

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["epsilon"] = epsilon;
  j["n_trials"] = per_trial.size();
  j["aggregate"] = {{"ci", summary_json(ci)},
                    {"ai", summary_json(ai)},
                    {"ad_pred", summary_json(ad_pred)},
                    {"ad_raw", summary_json(ad_raw)}};
  j["timing"] = timing ? summary_json(*timing) : nlohmann::ordered_json(nullptr);
  j["per_trial"] = nlohmann::ordered_json::array();
  for (const auto& m : per_trial) {
    nlohmann::ordered_json t;
    t["trial_id"] = m.trial_id;
    t["ci"] = m.ci;
    t["ai"] = m.ai;
    t["ad_pred"] = m.ad_pred;
    t["ad_raw"] = m.ad_raw;
    t["n_points"] = m.n_points;
    if (timing) t["rollout_seconds"] = m.rollout_seconds;
    j["per_trial"].push_back(t);
  }
  j["skipped"] = nlohmann::ordered_json::array();
  for (const auto& s : skipped) j["skipped"].push_back({{"trial_id", s.trial_id}, {"reason", s.reason}});
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.epsilon = j.at("epsilon").get<double>();
    const auto& agg = j.at("aggregate");
    r.ci = summary_from(agg.at("ci"));
    r.ai = summary_from(agg.at("ai"));
    r.ad_pred = summary_from(agg.at("ad_pred"));
    r.ad_raw = summary_from(agg.at("ad_raw"));
    if (j.contains("timing") && !j.at("timing").is_null()) r.timing = summary_from(j.at("timing"));
    for (const auto& t : j.at("per_trial")) {
      TrialMetrics m;
      m.trial_id = t.at("trial_id").get<std::string>();
      m.ci = t.at("ci").get<double>();
      m.ai = t.at("ai").get<double>();
      m.ad_pred = t.at("ad_pred").get<double>();
      m.ad_raw = t.at("ad_raw").get<double>();
      m.n_points = t.at("n_points").get<std::size_t>();
      m.rollout_seconds = t.value("rollout_seconds", 0.0);
      r.per_trial.push_back(m);
    }
    if (j.contains("skipped"))
      for (const auto& s : j.at("skipped"))
        r.skipped.push_back({s.at("trial_id").get<std::string>(), s.at("reason").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("metrics report: ") + e.what());
  }
  return r;
}

void write_report_json(std::ostream& out, const MetricsReport& report) { out << report.to_json().dump(2) << '\n'; }

void write_report_text(std::ostream& out, const MetricsReport& report) {
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %14s %14s\n", "metric", "mean", "stddev");
  out << line;
  auto row = [&](const char* name, const Summary& s) {
    std::snprintf(line, sizeof line, "%-10s %14.6f %14.6f\n", name, s.mean, s.stddev);
    out << line;
  };
  row("CI", report.ci);
  row("AI", report.ai);
  row("AD_pred", report.ad_pred);
  row("AD_raw", report.ad_raw);
  if (report.timing) row("seconds", *report.timing);
  out << "trials " << report.per_trial.size() << ", skipped " << report.skipped.size() << '\n';
}

void write_report_csv(std::ostream& out, const MetricsReport& report) {
  out << "trial_id,ci,ai,ad_pred,ad_raw,n_points,rollout_seconds\n";
  for (const auto& m : report.per_trial)
    out << m.trial_id << ',' << fmt(m.ci, "%.9g") << ',' << fmt(m.ai, "%.9g") << ',' << fmt(m.ad_pred, "%.9g") << ','
        << fmt(m.ad_raw, "%.9g") << ',' << m.n_points << ',' << fmt(m.rollout_seconds, "%.9g") << '\n';
}

MetricsReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return MetricsReport::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("metrics report: ") + e.what());
  }
}

}  // namespace gazestab
