#include <doctest.h>

#include <random>
#include <sstream>

#include "gazestab/errors.hpp"
#include "gazestab/gaze_core.hpp"
#include "gazestab/trial_io.hpp"
#include "helpers.hpp"

using namespace gazestab;

TEST_CASE("visual angle examples") {
  CHECK(std::abs(visual_angle(0.2, 3.0) - 3.818) < 0.01);
  CHECK(visual_angle(0.0, 3.0) == 0.0);
  CHECK(visual_angle(6.0, 3.0) == doctest::Approx(90.0));
  CHECK_THROWS_AS(visual_angle(0.2, 0.0), DomainError);
  CHECK_THROWS_AS(visual_angle(-1.0, 3.0), DomainError);
}

TEST_CASE("visual angle is monotone in diameter and distance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int i = 0; i < 500; ++i) {
    const double h = u(rng), d = u(rng), dh = u(rng) * 0.1, dd = u(rng) * 0.1;
    CHECK(visual_angle(h + dh, d) > visual_angle(h, d));
    CHECK(visual_angle(h, d + dd) < visual_angle(h, d));
  }
}

TEST_CASE("project_to_plane examples") {
  const Vec2 a = project_to_plane({0, 0, 0}, {0, 0, 1}, 3.0);
  CHECK(a.x == 0.0);
  CHECK(a.y == 0.0);
  const Vec2 b = project_to_plane({0, 0, 0}, normalize({1, 0, 1}), 3.0);
  CHECK(b.x == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(b.y == doctest::Approx(0.0));
  CHECK_THROWS_AS(project_to_plane({0, 0, 0}, {0, 1, 0}, 3.0), NoIntersectionError);
}

TEST_CASE("projected point lies on the original ray") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 o{u(rng), u(rng), u(rng) - 1.0};
    const Vec3 d = normalize({u(rng) * 0.5, u(rng) * 0.5, 1.0});
    const Vec2 p = project_to_plane(o, d, 3.0);
    // Walk back along the ray to the plane point and compare.
    const double s = (3.0 - o.z) / d.z;
    const Vec3 q = o + s * d;
    CHECK(std::abs(q.x - p.x) < 1e-9);
    CHECK(std::abs(q.y - p.y) < 1e-9);
    CHECK(std::abs(q.z - 3.0) < 1e-9);
  }
}

TEST_CASE("derive_velocities examples") {
  std::vector<GazeSample> still(10, testutil::sample(0, 0.3, 0.3));
  for (const auto& s : derive_velocities(still, 60.0)) CHECK(s.lin_speed == 0.0);

  std::vector<GazeSample> moving;
  for (int i = 0; i < 10; ++i) moving.push_back(testutil::sample(i / 60.0, 0.1 * i, 0.0));
  for (const auto& s : derive_velocities(moving, 60.0)) CHECK(s.lin_speed == doctest::Approx(6.0));

  std::vector<GazeSample> turning;
  for (int i = 0; i < 5; ++i) {
    GazeSample s = testutil::sample(i / 60.0, 0, 0);
    const double a = i * M_PI / 180.0;
    s.gaze_dir = Vec3{std::sin(a), 0.0, std::cos(a)};
    turning.push_back(s);
  }
  for (const auto& s : derive_velocities(turning, 60.0)) CHECK(s.ang_speed == doctest::Approx(60.0).epsilon(1e-6));
  CHECK_THROWS_AS(derive_velocities(std::vector<GazeSample>(1), 60.0), InsufficientDataError);
}

TEST_CASE("derive_velocities is translation invariant") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.05);
  std::vector<GazeSample> a, b;
  for (int i = 0; i < 100; ++i) {
    a.push_back(testutil::sample(i / 60.0, n(rng), n(rng)));
    b.push_back(a.back());
    b.back().pos = b.back().pos + Vec2{0.7, -0.4};
  }
  const auto va = derive_velocities(a, 60.0), vb = derive_velocities(b, 60.0);
  for (std::size_t i = 0; i < va.size(); ++i) CHECK(std::abs(va[i].lin_speed - vb[i].lin_speed) <= 1e-12 * 60.0 + 1e-12);
}

TEST_CASE("check_trial flags invariant violations") {
  auto t = testutil::trial_from(std::vector<Vec2>(30, Vec2{0, 0}), {0, 0});
  CHECK_FALSE(check_trial(t).has_value());
  auto bad = t;
  bad.samples[5].t = -1.0;
  CHECK(check_trial(bad).has_value());
  bad = t;
  bad.samples[3].lin_speed = -1.0;
  CHECK(check_trial(bad).has_value());
  bad = t;
  bad.target = {5.0, 0.0};
  CHECK(check_trial(bad).has_value());
  bad = t;
  bad.samples[2].gaze_dir = Vec3{1.0, 1.0, 0.0};
  CHECK(check_trial(bad).has_value());
  bad = t;
  bad.fixation_onset = 25;
  CHECK(check_trial(bad).has_value());
  bad = t;
  bad.samples.clear();
  CHECK(check_trial(bad).has_value());
}

TEST_CASE("trial JSONL round trip keeps unknown fields") {
  const std::string line =
      R"({"id":"a","target":[0.1,0.2],"plane_distance":3.0,"samples":[{"t":0.0,"pos":[0.1,0.2],"lin_speed":0.0,"ang_speed":0.0,"pupil":4.5},{"t":0.0166667,"pos":[0.1,0.2],"lin_speed":0.0,"ang_speed":0.0,"pupil":4.4}],"session":"s1"})";
  std::istringstream in(line + "\n");
  const auto trials = read_trials(in);
  REQUIRE(trials.size() == 1);
  CHECK(trials[0].extra["session"] == "s1");
  CHECK(trials[0].samples[0].extra["pupil"] == 4.5);
  std::ostringstream out;
  write_trials(out, trials);
  std::istringstream again(out.str());
  const auto round = read_trials(again);
  std::ostringstream out2;
  write_trials(out2, round);
  CHECK(out.str() == out2.str());
  CHECK(nlohmann::json::parse(out.str())["session"] == "s1");
}

TEST_CASE("schema errors name the line") {
  std::istringstream in("{\"id\":\"a\",\"target\":[0,0],\"plane_distance\":3,\"samples\":[{\"t\":0,\"pos\":[0,0],\"lin_speed\":0,\"ang_speed\":0}]}\n{\"id\":\"b\"}\n");
  try {
    read_trials(in);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
