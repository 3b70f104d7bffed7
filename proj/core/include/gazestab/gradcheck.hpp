#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gazestab/training.hpp"

namespace gazestab {

struct GradCheckConfig {
  std::size_t n_coords = 240;
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is ~0 are judged on absolute error.
  double rel_floor = 1e-6;
  std::size_t window = 4;
  double sample_rate = 60.0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string tensor;
  ParamGroup group = ParamGroup::backbone;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GroupErrors {
  ParamGroup group = ParamGroup::backbone;
  std::size_t count = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::vector<GroupErrors> groups;  // only groups that own parameters
  std::vector<GradCheckEntry> offenders;
  double max_rel = 0.0;
  double loss = 0.0;
  bool passed = false;
};

/// Mean total loss over the batch, with the period choices of each forward
/// call pinned to `traces` when given.
double batch_objective(const Model& model, const std::vector<Example>& batch, const LossConfig& lcfg,
                       std::size_t window, double sample_rate,
                       const std::vector<std::vector<PeriodTrace>>* traces = nullptr);

/// Compares tape gradients of batch_objective with central differences on a
/// sample of coordinates that covers every tensor. Period selection is frozen
/// to the choices of the unperturbed forward so the objective is smooth.
GradCheckReport grad_check(const Model& model, const std::vector<Example>& batch, const LossConfig& lcfg,
                           const GradCheckConfig& cfg);

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report);

}  // namespace gazestab
