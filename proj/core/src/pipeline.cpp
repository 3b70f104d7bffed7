#include "gazestab/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "gazestab/checkpoint.hpp"
#include "gazestab/errors.hpp"
#include "gazestab/plot.hpp"
#include "gazestab/trial_io.hpp"

namespace gazestab {

namespace {

std::ofstream open_out(const path& p) {
  if (p.has_parent_path() && !std::filesystem::exists(p.parent_path()))
    throw IoError("directory does not exist: " + p.parent_path().string());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return out;
}

void write_text(const path& p, const std::string& text) {
  auto out = open_out(p);
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void cmd_simulate(const PipelineConfig& cfg, const path& out, std::ostream& log) {
  const auto trials = simulate_corpus(cfg.sim, cfg.threads);
  write_trials(out, trials);
  log << "simulate seed=" << cfg.sim.rng_seed << " trials=" << trials.size() << " out=" << out.string() << '\n';
}

void cmd_segment(const PipelineConfig& cfg, const path& in, const path& out, const path& report, std::ostream& log) {
  const auto trials = read_trials(in);
  const CleanedCorpus cleaned = clean_corpus(trials, cfg.cleaning, cfg.fixation, cfg.threads);
  write_trials(out, cleaned.kept);
  if (!report.empty()) {
    auto r = open_out(report);
    write_cleaning_report(r, cleaned.report);
  }
  log << "segment trials=" << trials.size() << " kept=" << cleaned.kept.size()
      << " excluded=" << trials.size() - cleaned.kept.size() << '\n';
}

void cmd_augment(const PipelineConfig& cfg, const path& in, const path& out, std::ostream& log) {
  const auto trials = read_trials(in);
  const auto blended = blend_corpus(trials, cfg.augment);
  write_trials(out, blended);
  log << "augment seed=" << cfg.augment.rng_seed << " real=" << trials.size() << " total=" << blended.size()
      << " beta=" << cfg.augment.beta << '\n';
}

TrainLog cmd_train(const PipelineConfig& cfg, const path& in, const path& checkpoint_out, const path& log_out,
                   std::ostream& log) {
  const auto trials = read_trials(in);
  TrainConfig tcfg = cfg.train;
  tcfg.threads = cfg.threads;
  TrainResult result = train(trials, cfg.model, tcfg, cfg.loss);
  save_checkpoint(checkpoint_out, result.checkpoint);
  if (!log_out.empty()) {
    auto out = open_out(log_out);
    write_train_log(out, result.log);
  }
  log << "train examples=" << result.log.n_train << " val=" << result.log.n_val << " skipped=" << result.log.n_skipped
      << " epochs=" << result.log.epochs.size() << " best_epoch=" << result.log.best_epoch
      << " val_loss=" << result.checkpoint.val_loss << " alpha=" << Model(result.checkpoint.config, result.checkpoint.params).alpha()
      << " checkpoint=" << checkpoint_out.string() << '\n';
  return result.log;
}

MetricsReport cmd_evaluate(const PipelineConfig& cfg, const path& checkpoint, const path& in, const path& report_out,
                           const path& csv_out, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Model model(ckpt.config, ckpt.params);
  const auto trials = read_trials(in);
  EvalConfig ecfg = cfg.eval;
  ecfg.threads = cfg.threads;
  const MetricsReport report = evaluate_corpus(model, trials, ecfg);
  if (!report_out.empty()) {
    auto out = open_out(report_out);
    write_report_json(out, report);
  }
  if (!csv_out.empty()) {
    auto out = open_out(csv_out);
    write_report_csv(out, report);
  }
  write_report_text(log, report);
  return report;
}

void cmd_plot(const PipelineConfig& cfg, const PlotRequest& req, std::ostream& log) {
  std::ifstream probe(req.input);
  if (!probe) throw IoError("cannot open " + req.input.string());
  std::stringstream buffer;
  buffer << probe.rdbuf();
  const std::string text = buffer.str();

  // A report is a single JSON object with per_trial; anything else is JSONL.
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (!doc.is_discarded() && doc.is_object() && doc.contains("per_trial")) {
    const MetricsReport report = MetricsReport::from_json(doc);
    const auto values = report_metric(report, req.metric);
    write_text(req.out, histogram_svg(values, req.metric + " per trial"));
    log << "plot histogram metric=" << req.metric << " values=" << values.size() << " out=" << req.out.string() << '\n';
    return;
  }

  std::istringstream lines(text);
  const auto trials = read_trials(lines);
  if (trials.empty()) throw DomainError("plot: input has no trials");
  const Trial* trial = &trials.front();
  if (!req.trial_id.empty()) {
    trial = nullptr;
    for (const auto& t : trials)
      if (t.id == req.trial_id) trial = &t;
    if (!trial) throw DomainError("plot: no trial with id " + req.trial_id);
  }
  std::vector<Vec2> raw;
  std::vector<Vec2> pred;
  if (req.checkpoint) {
    const Checkpoint ckpt = load_checkpoint(*req.checkpoint);
    const Model model(ckpt.config, ckpt.params);
    std::string reason;
    auto f = forecast_trial(model, *trial, cfg.eval, &reason);
    if (!f) throw DomainError("plot: cannot forecast trial " + trial->id + ": " + reason);
    const std::size_t n = std::min(f->raw.size(), f->pred.size());
    raw.assign(f->raw.begin(), f->raw.begin() + static_cast<std::ptrdiff_t>(n));
    pred.assign(f->pred.begin(), f->pred.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    const std::size_t from = trial->fixation_onset.value_or(0);
    for (std::size_t i = from; i < trial->samples.size(); ++i) raw.push_back(trial->samples[i].pos);
  }
  write_text(req.out, trial_svg(raw, pred, trial->target, trial->id));
  log << "plot trial=" << trial->id << " raw=" << raw.size() << " pred=" << pred.size() << " out=" << req.out.string()
      << '\n';
}

GradCheckReport run_gradcheck(const PipelineConfig& cfg) {
  const GradCheckSetup& g = cfg.gradcheck;
  ModelConfig mcfg = cfg.model;
  mcfg.d_model = g.d_model;
  mcfg.n_heads = g.n_heads;
  mcfg.d_ff = g.d_ff;
  mcfg.hist_len = g.hist_len;
  mcfg.horizon = g.horizon;
  mcfg.validate();

  SimConfig scfg = cfg.sim;
  scfg.n_trials = std::max<std::size_t>(g.batch * 2, 4);
  scfg.rng_seed = g.check.seed;
  const CleanedCorpus corpus = clean_corpus(simulate_corpus(scfg, cfg.threads), cfg.cleaning, cfg.fixation);
  std::vector<Example> batch;
  for (const Trial& t : corpus.kept) {
    if (batch.size() == g.batch) break;
    auto ex = make_example(t, mcfg.hist_len, mcfg.horizon, std::min<std::size_t>(mcfg.hist_len, 8), cfg.sim.sample_rate);
    if (ex && static_cast<std::size_t>(ex->target.rows()) == mcfg.horizon) batch.push_back(std::move(*ex));
  }
  if (batch.empty()) throw DomainError("gradcheck: no usable trials");

  Model model(mcfg, g.check.seed);
  std::mt19937_64 rng(split_seed(g.check.seed, 7));
  std::normal_distribution<double> noise(0.0, g.perturb);
  if (g.perturb > 0.0)
    for (auto& t : model.params().tensors())
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += noise(rng);

  GradCheckConfig check = g.check;
  check.window = std::min(check.window, mcfg.horizon);
  return grad_check(model, batch, cfg.loss, check);
}

bool cmd_gradcheck(const PipelineConfig& cfg, std::ostream& log) {
  const GradCheckReport report = run_gradcheck(cfg);
  log << "gradcheck d_model=" << cfg.gradcheck.d_model << " hist_len=" << cfg.gradcheck.hist_len
      << " horizon=" << cfg.gradcheck.horizon << " batch=" << cfg.gradcheck.batch << " loss=" << report.loss << '\n';
  write_gradcheck_report(log, report);
  return report.passed;
}

ExperimentResult run_experiment(const PipelineConfig& cfg, std::size_t n_train_trials, std::size_t n_eval_trials) {
  SimConfig scfg = cfg.sim;
  scfg.n_trials = n_train_trials;
  const CleanedCorpus cleaned = clean_corpus(simulate_corpus(scfg, cfg.threads), cfg.cleaning, cfg.fixation, cfg.threads);
  const auto corpus = blend_corpus(cleaned.kept, cfg.augment);

  SimConfig hcfg = cfg.sim;
  hcfg.n_trials = n_eval_trials;
  hcfg.rng_seed = split_seed(cfg.sim.rng_seed, (1ull << 40) + 0x4e1d);
  const CleanedCorpus heldout = clean_corpus(simulate_corpus(hcfg, cfg.threads), cfg.cleaning, cfg.fixation, cfg.threads);

  ExperimentResult r;
  r.n_corpus = corpus.size();
  r.n_heldout = heldout.kept.size();
  TrainConfig tcfg = cfg.train;
  tcfg.threads = cfg.threads;
  r.train = train(corpus, cfg.model, tcfg, cfg.loss);
  EvalConfig ecfg = cfg.eval;
  ecfg.threads = cfg.threads;
  const Model model(r.train.checkpoint.config, r.train.checkpoint.params);
  r.report = evaluate_corpus(model, heldout.kept, ecfg);
  return r;
}

std::vector<SweepCell> sweep_cells() {
  std::vector<SweepCell> cells;
  auto add = [&](SweepCell c) { cells.push_back(std::move(c)); };
  const SweepCell base;
  for (auto [mode, label] : {std::pair{ProjectionMode::attention_only, "mha_only"},
                             std::pair{ProjectionMode::linear_only, "linear_only"},
                             std::pair{ProjectionMode::fused, "fused"}}) {
    SweepCell c = base;
    c.grid = "projection";
    c.label = label;
    c.projection = mode;
    c.reference = mode == ProjectionMode::fused;
    add(c);
  }
  for (bool center : {false, true}) {
    for (bool dispersion : {false, true}) {
      SweepCell c = base;
      c.grid = "loss_terms";
      c.label = std::string(center ? "+center" : "-center") + (dispersion ? "+dispersion" : "-dispersion");
      c.use_center = center;
      c.use_dispersion = dispersion;
      c.reference = center && dispersion;
      add(c);
    }
  }
  for (std::size_t w : {4, 8, 16}) {
    SweepCell c = base;
    c.grid = "window";
    c.label = "l_w=" + std::to_string(w);
    c.window = w;
    c.reference = w == 16;
    add(c);
  }
  for (std::size_t h : {2, 4, 8, 16}) {
    SweepCell c = base;
    c.grid = "heads";
    c.label = "heads=" + std::to_string(h);
    c.n_heads = h;
    c.reference = h == 8;
    add(c);
  }
  return cells;
}

SweepResult run_sweep(const PipelineConfig& cfg, std::ostream& log) {
  SweepResult result;
  // Cells with identical settings (the reference appears in every grid) are
  // trained once.
  std::map<std::string, SweepRow> cache;
  for (const SweepCell& cell : sweep_cells()) {
    const std::string key = to_string(cell.projection) + "/" + std::to_string(cell.use_center) + "/" +
                            std::to_string(cell.use_dispersion) + "/" + std::to_string(cell.window) + "/" +
                            std::to_string(cell.n_heads);
    auto it = cache.find(key);
    if (it == cache.end()) {
      PipelineConfig c = cfg;
      c.model.projection = cell.projection;
      c.model.n_heads = cell.n_heads;
      c.loss.use_center = cell.use_center;
      c.loss.use_dispersion = cell.use_dispersion;
      c.train.window = cell.window;
      c.train.epochs = cfg.sweep.epochs;
      c.eval.window = cell.window;
      c.eval.timing = false;
      const ExperimentResult r = run_experiment(c, cfg.sweep.n_trials, cfg.sweep.n_eval_trials);
      SweepRow row;
      row.ai = r.report.ai.mean;
      row.ci = r.report.ci.mean;
      row.ad_pred = r.report.ad_pred.mean;
      row.ad_raw = r.report.ad_raw.mean;
      row.val_loss = r.train.checkpoint.val_loss;
      row.epochs_run = r.train.log.epochs.size();
      it = cache.emplace(key, row).first;
      log << "sweep " << cell.grid << ' ' << cell.label << " ai=" << fmt(row.ai) << " ci=" << fmt(row.ci)
          << " epochs=" << row.epochs_run << '\n';
    }
    SweepRow row = it->second;
    row.cell = cell;
    result.rows.push_back(row);
  }
  std::map<std::string, std::pair<double, double>> grid_stats;  // best, reference
  std::vector<std::string> order;
  for (const auto& row : result.rows) {
    if (!grid_stats.count(row.cell.grid)) order.push_back(row.cell.grid);
    auto& [best, ref] = grid_stats[row.cell.grid];
    best = std::max(best, row.ai);
    if (row.cell.reference) ref = row.ai;
  }
  for (const auto& g : order) {
    const auto [best, ref] = grid_stats[g];
    result.reference_ok.emplace_back(g, ref >= (1.0 - cfg.sweep.tolerance) * best);
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "grid,cell,projection,use_center,use_dispersion,window,n_heads,reference,ai,ci,ad_pred,ad_raw,val_loss,epochs\n";
  for (const auto& r : result.rows) {
    out << r.cell.grid << ',' << r.cell.label << ',' << to_string(r.cell.projection) << ',' << r.cell.use_center << ','
        << r.cell.use_dispersion << ',' << r.cell.window << ',' << r.cell.n_heads << ',' << r.cell.reference << ','
        << fmt(r.ai) << ',' << fmt(r.ci) << ',' << fmt(r.ad_pred) << ',' << fmt(r.ad_raw) << ','
        << fmt(r.val_loss) << ',' << r.epochs_run << '\n';
  }
}

SweepResult cmd_sweep(const PipelineConfig& cfg, const path& out_csv, std::ostream& log) {
  SweepResult result = run_sweep(cfg, log);
  auto out = open_out(out_csv);
  write_sweep_csv(out, result);
  for (const auto& [grid, ok] : result.reference_ok)
    log << "sweep grid=" << grid << " reference_within_tolerance=" << (ok ? "yes" : "no") << '\n';
  return result;
}

}  // namespace gazestab
