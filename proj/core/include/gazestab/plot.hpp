#pragma once

#include <span>
#include <string>

#include "gazestab/evaluation.hpp"
#include "gazestab/gaze_core.hpp"

namespace gazestab {

/// Scatter of raw (class "raw") and predicted (class "pred") points with the
/// target drawn as a cross (class "target"). Throws DomainError when both
/// point sets are empty. Output depends only on the inputs.
std::string trial_svg(std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target,
                      const std::string& title);

/// Histogram of values with `bins` equal-width bars (class "bar"). Throws
/// DomainError for no values.
std::string histogram_svg(std::span<const double> values, const std::string& title, std::size_t bins = 20);

/// Per-trial values of "ci", "ai", "ad_pred" or "ad_raw" from a report.
std::vector<double> report_metric(const MetricsReport& report, const std::string& metric);

}  // namespace gazestab
