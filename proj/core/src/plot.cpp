#include "gazestab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gazestab/errors.hpp"

namespace gazestab {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 40.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  return s;
}

}  // namespace

std::string trial_svg(std::span<const Vec2> raw, std::span<const Vec2> pred, Vec2 target, const std::string& title) {
  if (raw.empty() && pred.empty()) throw DomainError("trial_svg: nothing to plot");
  // Square window centred on the target that holds every point.
  double half = 0.01;
  for (Vec2 p : raw) half = std::max({half, std::abs(p.x - target.x), std::abs(p.y - target.y)});
  for (Vec2 p : pred) half = std::max({half, std::abs(p.x - target.x), std::abs(p.y - target.y)});
  half *= 1.1;
  const double span = kWidth - 2 * kMargin;
  auto sx = [&](double x) { return kMargin + (x - target.x + half) / (2 * half) * span; };
  auto sy = [&](double y) { return kMargin + (target.y + half - y) / (2 * half) * span; };

  std::string s = header(title);
  s += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(span) + "\" height=\"" + num(span) +
       "\" fill=\"none\" stroke=\"#888\"/>\n";
  s += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeight - 12) + "\" font-family=\"sans-serif\" font-size=\"11\">half-width " +
       num(half) + " m</text>\n";
  s += "<g>\n";
  for (Vec2 p : raw)
    s += "<circle class=\"raw\" cx=\"" + num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) + "\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
  for (Vec2 p : pred)
    s += "<circle class=\"pred\" cx=\"" + num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) + "\" r=\"3\" fill=\"#d62728\" fill-opacity=\"0.6\"/>\n";
  s += "</g>\n";
  const double cx = sx(target.x);
  const double cy = sy(target.y);
  s += "<path class=\"target\" d=\"M" + num(cx - 8) + " " + num(cy) + " H" + num(cx + 8) + " M" + num(cx) + " " +
       num(cy - 8) + " V" + num(cy + 8) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  s += "</svg>\n";
  return s;
}

std::string histogram_svg(std::span<const double> values, const std::string& title, std::size_t bins) {
  if (values.empty()) throw DomainError("histogram_svg: no values");
  if (bins < 1) throw ConfigError("histogram_svg: bins must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    counts[std::min(b, bins - 1)]++;
  }
  const std::size_t peak = *std::max_element(counts.begin(), counts.end());
  const double span = kWidth - 2 * kMargin;
  const double bar = span / static_cast<double>(bins);

  std::string s = header(title);
  s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kHeight - kMargin) + "\" x2=\"" + num(kWidth - kMargin) +
       "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
  for (std::size_t b = 0; b < bins; ++b) {
    const double h = static_cast<double>(counts[b]) / static_cast<double>(peak) * span;
    s += "<rect class=\"bar\" x=\"" + num(kMargin + bar * static_cast<double>(b)) + "\" y=\"" +
         num(kHeight - kMargin - h) + "\" width=\"" + num(bar * 0.9) + "\" height=\"" + num(h) +
         "\" fill=\"#1f77b4\" data-count=\"" + std::to_string(counts[b]) + "\"/>\n";
  }
  s += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeight - 12) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
       num(lo) + "</text>\n";
  s += "<text x=\"" + num(kWidth - kMargin) + "\" y=\"" + num(kHeight - 12) +
       "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(hi) + "</text>\n";
  s += "</svg>\n";
  return s;
}

std::vector<double> report_metric(const MetricsReport& report, const std::string& metric) {
  double TrialMetrics::*field = nullptr;
  if (metric == "ci") field = &TrialMetrics::ci;
  else if (metric == "ai") field = &TrialMetrics::ai;
  else if (metric == "ad_pred") field = &TrialMetrics::ad_pred;
  else if (metric == "ad_raw") field = &TrialMetrics::ad_raw;
  else throw ConfigError("unknown metric '" + metric + "' (expected ci, ai, ad_pred or ad_raw)");
  std::vector<double> out;
  for (const auto& m : report.per_trial) out.push_back(m.*field);
  return out;
}

}  // namespace gazestab
