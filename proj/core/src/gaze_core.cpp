#include "gazestab/gaze_core.hpp"

#include <algorithm>
#include <numbers>

#include "gazestab/errors.hpp"

namespace gazestab {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

Vec3 normalize(Vec3 v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw DomainError("cannot normalize a zero vector");
  return (1.0 / n) * v;
}

void FixationConfig::validate() const {
  if (!(region_radius > 0.0)) throw ConfigError("fixation.region_radius must be > 0");
  if (!(ang_vel_threshold > 0.0)) throw ConfigError("fixation.ang_vel_threshold must be > 0");
  if (window_samples < 2) throw ConfigError("fixation.window_samples must be >= 2");
  if (!(sample_rate > 0.0)) throw ConfigError("fixation.sample_rate must be > 0");
}

std::optional<std::string> check_trial(const Trial& trial, double sample_rate,
                                       double jitter_tolerance) {
  if (trial.samples.empty()) return "trial has no samples";
  const double half = trial.plane_extent / 2.0;
  if (std::abs(trial.target.x) > half || std::abs(trial.target.y) > half)
    return "target lies outside the plane extent";
  const double dt = 1.0 / sample_rate;
  for (std::size_t i = 0; i < trial.samples.size(); ++i) {
    const GazeSample& s = trial.samples[i];
    if (!std::isfinite(s.t)) return "sample " + std::to_string(i) + " has non-finite t";
    if (s.lin_speed < 0.0 || s.ang_speed < 0.0)
      return "sample " + std::to_string(i) + " has negative speed";
    if (s.gaze_dir && std::abs(norm(*s.gaze_dir) - 1.0) > 1e-6)
      return "sample " + std::to_string(i) + " gaze_dir is not unit length";
    if (i > 0) {
      const double step = s.t - trial.samples[i - 1].t;
      if (step < 0.0) return "timestamps decrease at sample " + std::to_string(i);
      if (std::abs(step - dt) > jitter_tolerance * dt)
        return "sampling interval out of tolerance at sample " + std::to_string(i);
    }
  }
  if (trial.fixation_onset) {
    const std::size_t onset = *trial.fixation_onset;
    if (onset >= trial.samples.size() || trial.samples.size() - onset < 12)
      return "fixation_onset leaves fewer than 12 samples";
  }
  return std::nullopt;
}

double visual_angle(double object_diameter, double distance) {
  if (!(distance > 0.0)) throw DomainError("visual_angle: distance must be positive");
  if (object_diameter < 0.0) throw DomainError("visual_angle: diameter must be >= 0");
  return 2.0 * std::atan(object_diameter / (2.0 * distance)) * kRadToDeg;
}

Vec2 project_to_plane(Vec3 origin, Vec3 direction, double plane_distance) {
  // Plane normal is +z; the ray must travel toward the plane.
  const double toward = (plane_distance - origin.z);
  if (direction.z == 0.0 || toward / direction.z < 0.0 ||
      (toward == 0.0 && direction.z < 0.0))
    throw NoIntersectionError("gaze ray does not intersect the target plane");
  const double s = toward / direction.z;
  return {origin.x + s * direction.x, origin.y + s * direction.y};
}

double angle_between_deg(Vec3 a, Vec3 b) {
  const double c = dot(a, b) / (norm(a) * norm(b));
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

std::vector<GazeSample> derive_velocities(std::span<const GazeSample> samples,
                                          double sample_rate, double plane_distance) {
  if (samples.size() < 2)
    throw InsufficientDataError("derive_velocities needs at least 2 samples");
  if (!(sample_rate > 0.0)) throw DomainError("sample_rate must be positive");
  const double dt = 1.0 / sample_rate;
  std::vector<GazeSample> out(samples.begin(), samples.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    const GazeSample& prev = samples[i - 1];
    const GazeSample& cur = samples[i];
    if (!std::isfinite(cur.pos.x) || !std::isfinite(cur.pos.y))
      throw DomainError("derive_velocities: non-finite position at sample " + std::to_string(i));
    const double disp = distance(cur.pos, prev.pos);
    out[i].lin_speed = disp / dt;
    if (cur.gaze_dir && prev.gaze_dir) {
      out[i].ang_speed = angle_between_deg(*cur.gaze_dir, *prev.gaze_dir) / dt;
    } else {
      out[i].ang_speed = disp / plane_distance * kRadToDeg / dt;
    }
  }
  out[0].lin_speed = out[1].lin_speed;
  out[0].ang_speed = out[1].ang_speed;
  return out;
}

}  // namespace gazestab
