#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gazestab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(Vec3 a, Vec3 b) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }
Vec3 normalize(Vec3 v);

/// One timestamped gaze measurement in target-plane coordinates (meters,
/// origin at the plane center). The 3D fields are optional pass-through data.
struct GazeSample {
  double t = 0.0;          // seconds
  Vec2 pos;                // meters on the target plane
  double lin_speed = 0.0;  // m/s
  double ang_speed = 0.0;  // deg/s
  std::optional<Vec3> head_pos;
  std::optional<Vec3> gaze_origin;
  std::optional<Vec3> gaze_dir;  // unit vector
  nlohmann::json extra;          // unknown JSONL fields, kept for round-trip
};

/// One saccade-then-fixation episode.
struct Trial {
  std::string id;
  Vec2 target;
  std::vector<GazeSample> samples;
  double plane_distance = 3.0;
  double plane_extent = 2.0;  // side length of the square target area
  std::optional<std::size_t> fixation_onset;
  nlohmann::json extra;
};

struct FixationConfig {
  double region_radius = 0.1;       // m
  double ang_vel_threshold = 20.0;  // deg/s
  std::size_t window_samples = 12;
  double sample_rate = 60.0;        // Hz

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Returns a description of the first violated Trial invariant, or nullopt.
/// `jitter_tolerance` is the allowed relative deviation of each sampling
/// interval from 1/sample_rate.
std::optional<std::string> check_trial(const Trial& trial, double sample_rate = 60.0,
                                       double jitter_tolerance = 0.2);

/// Angular size (degrees) of an object of the given diameter at `distance`.
double visual_angle(double object_diameter, double distance);

/// Intersects a gaze ray with the plane z = plane_distance and returns the hit
/// point in plane coordinates. Throws NoIntersectionError when the ray is
/// parallel to the plane or points away from it.
Vec2 project_to_plane(Vec3 origin, Vec3 direction, double plane_distance);

/// Angle between two direction vectors in degrees (arccos of the clamped
/// normalized dot product).
double angle_between_deg(Vec3 a, Vec3 b);

/// Fills lin_speed and ang_speed by backward differences at a fixed
/// 1/sample_rate interval; index 0 copies index 1. Angular speed uses gaze_dir
/// when both samples carry it, otherwise the small-angle relation
/// displacement / plane_distance.
std::vector<GazeSample> derive_velocities(std::span<const GazeSample> samples,
                                          double sample_rate,
                                          double plane_distance = 3.0);

}  // namespace gazestab
