#include "gazestab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>

#include "gazestab/errors.hpp"

namespace gazestab {

using ad::Mat;
using ad::Tape;
using ad::Var;

double batch_objective(const Model& model, const std::vector<Example>& batch, const LossConfig& lcfg,
                       std::size_t window, double sample_rate, const std::vector<std::vector<PeriodTrace>>* traces) {
  if (batch.empty()) throw DomainError("batch_objective: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape tape(false);
    const Model::Bound bound = model.bind(tape);
    Var pred = sliding_rollout(tape, model, bound, batch[i].history, batch[i].history_times, window, sample_rate,
                               false, traces ? &(*traces)[i] : nullptr);
    sum += total_loss(tape.value(pred), batch[i].target, lcfg, model.params());
  }
  return sum / static_cast<double>(batch.size());
}

namespace {

struct Coord {
  std::size_t tensor;
  std::size_t index;
};

std::vector<Coord> sample_coords(const ModelParams& params, std::size_t n, std::mt19937_64& rng) {
  std::vector<Coord> coords;
  auto seen = [&](Coord c) {
    return std::any_of(coords.begin(), coords.end(),
                       [&](const Coord& o) { return o.tensor == c.tensor && o.index == c.index; });
  };
  // Every tensor once, then an equal quota per group, then uniform top-up.
  std::map<int, std::vector<Coord>> pool;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto size = static_cast<std::size_t>(params.tensors()[t].value.size());
    coords.push_back({t, std::uniform_int_distribution<std::size_t>(0, size - 1)(rng)});
    for (std::size_t i = 0; i < size; ++i) pool[static_cast<int>(params.tensors()[t].group)].push_back({t, i});
  }
  const std::size_t quota = n / std::max<std::size_t>(pool.size(), 1);
  for (auto& [group, members] : pool) {
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t taken = 0;
    for (const Coord& c : members) {
      if (taken >= quota) break;
      if (!seen(c)) coords.push_back(c);
      ++taken;
    }
  }
  const std::size_t total = params.coordinate_count();
  std::uniform_int_distribution<std::size_t> flat(0, total - 1);
  std::size_t guard = 0;
  while (coords.size() < std::min(n, total) && guard++ < 100 * n) {
    std::size_t k = flat(rng);
    std::size_t t = 0;
    while (k >= static_cast<std::size_t>(params.tensors()[t].value.size())) {
      k -= static_cast<std::size_t>(params.tensors()[t].value.size());
      ++t;
    }
    if (!seen({t, k})) coords.push_back({t, k});
  }
  return coords;
}

}  // namespace

GradCheckReport grad_check(const Model& model, const std::vector<Example>& batch, const LossConfig& lcfg,
                           const GradCheckConfig& cfg) {
  if (batch.empty()) throw DomainError("grad_check: empty batch");
  if (!(cfg.step > 0.0)) throw ConfigError("grad_check: step must be > 0");

  // Analytic pass, recording period choices.
  std::vector<std::vector<PeriodTrace>> traces(batch.size());
  std::vector<Mat> grads;
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape tape;
    const Model::Bound bound = model.bind(tape);
    Var pred = sliding_rollout(tape, model, bound, batch[i].history, batch[i].history_times, cfg.window,
                               cfg.sample_rate, false, nullptr, &traces[i]);
    Var l = total_loss(tape, pred, batch[i].target, lcfg, model.params(), bound);
    tape.backward(l);
    loss += tape.value(l)(0, 0);
    for (std::size_t p = 0; p < bound.vars.size(); ++p) {
      if (i == 0) grads.push_back(tape.grad(bound.vars[p]));
      else grads[p] += tape.grad(bound.vars[p]);
    }
  }
  const auto n = static_cast<double>(batch.size());
  for (auto& g : grads) g /= n;

  std::mt19937_64 rng(cfg.seed);
  const std::vector<Coord> coords = sample_coords(model.params(), cfg.n_coords, rng);

  GradCheckReport report;
  report.loss = loss / n;
  Model probe = model;
  for (const Coord& c : coords) {
    double& w = probe.params().tensors()[c.tensor].value.data()[c.index];
    const double saved = w;
    w = saved + cfg.step;
    const double up = batch_objective(probe, batch, lcfg, cfg.window, cfg.sample_rate, &traces);
    w = saved - cfg.step;
    const double down = batch_objective(probe, batch, lcfg, cfg.window, cfg.sample_rate, &traces);
    w = saved;
    GradCheckEntry e;
    e.tensor = model.params().tensors()[c.tensor].name;
    e.group = model.params().tensors()[c.tensor].group;
    e.index = c.index;
    e.analytic = grads[c.tensor].data()[c.index];
    e.numeric = (up - down) / (2.0 * cfg.step);
    e.rel_error = std::abs(e.analytic - e.numeric) /
                  std::max({std::abs(e.analytic), std::abs(e.numeric), cfg.rel_floor});
    report.max_rel = std::max(report.max_rel, e.rel_error);
    if (!(e.rel_error < cfg.tolerance)) report.offenders.push_back(e);
    report.entries.push_back(e);
  }

  std::map<int, GroupErrors> by_group;
  for (const auto& e : report.entries) {
    GroupErrors& g = by_group[static_cast<int>(e.group)];
    g.group = e.group;
    ++g.count;
    g.max_rel = std::max(g.max_rel, e.rel_error);
    g.mean_rel += e.rel_error;
  }
  for (auto& [key, g] : by_group) {
    g.mean_rel /= static_cast<double>(g.count);
    report.groups.push_back(g);
  }
  report.passed = report.offenders.empty() && !report.entries.empty();
  return report;
}

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report) {
  out << std::left << std::setw(16) << "group" << std::setw(8) << "coords" << std::setw(14) << "max_rel"
      << "mean_rel\n";
  out << std::scientific << std::setprecision(3);
  for (const auto& g : report.groups)
    out << std::setw(16) << to_string(g.group) << std::setw(8) << g.count << std::setw(14) << g.max_rel << g.mean_rel
        << '\n';
  out << "checked " << report.entries.size() << " coordinates, max relative error " << report.max_rel << ", "
      << (report.passed ? "PASS" : "FAIL") << '\n';
  for (const auto& e : report.offenders)
    out << "offender " << e.tensor << '[' << e.index << "] analytic=" << e.analytic << " numeric=" << e.numeric
        << " rel=" << e.rel_error << '\n';
  out << std::defaultfloat;
}

}  // namespace gazestab
