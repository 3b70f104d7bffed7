#pragma once

#include <vector>

#include "gazestab/gaze_core.hpp"

namespace testutil {

inline gazestab::GazeSample sample(double t, double x, double y, double ang = 0.0) {
  gazestab::GazeSample s;
  s.t = t;
  s.pos = {x, y};
  s.ang_speed = ang;
  return s;
}

inline gazestab::Trial trial_from(const std::vector<gazestab::Vec2>& pos, gazestab::Vec2 target,
                                  const std::vector<double>& ang = {}) {
  gazestab::Trial t;
  t.id = "t";
  t.target = target;
  for (std::size_t i = 0; i < pos.size(); ++i)
    t.samples.push_back(sample(static_cast<double>(i) / 60.0, pos[i].x, pos[i].y, ang.empty() ? 0.0 : ang[i]));
  return t;
}

}  // namespace testutil
