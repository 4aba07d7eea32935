#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "escapekit/energy.hpp"
#include "escapekit/scenarios.hpp"

using namespace escapekit;
using namespace escapekit::scenarios;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Pushing spec with a 1 cm pusher and 1.5 cm margin: sector band half-width 2.5 cm.
ScenarioSpec small_pusher() {
  ScenarioSpec s = make_pushing_scenario({{"ee", {{"shape", "circle"}, {"radius", 0.01}}}});
  REQUIRE(s.capture.ee_radius == doctest::Approx(0.01));
  REQUIRE(s.capture.margin == doctest::Approx(0.015));
  return s;
}

SystemState ee_at(Vec2 p, Twist2 tw) {
  SystemState z;
  z.ee_pose = {p.x, p.y, 0.0};
  z.ee_twist = tw;
  return z;
}

SystemState object_at(Vec2 p) {
  SystemState z;
  z.object_pose = {p.x, p.y, 0.0};
  return z;
}

std::vector<SystemState> run_script(const ScenarioSpec& spec, std::uint64_t seed) {
  Rollout ro(spec, spec.initial);
  std::vector<SystemState> out{spec.initial};
  dynamics::SimError err;
  for (int k = 0;; ++k) {
    const EeCommand cmd = scripted_control(spec, ro.state(), k, seed);
    if (cmd.finished) break;
    ro.command(cmd);
    for (int i = 0; i < spec.script.control_period; ++i) {
      REQUIRE(ro.step({}, err));
      out.push_back(ro.state());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("every scenario starts captured and not yet successful") {
  for (const auto& name : scenario_names()) {
    CAPTURE(name);
    const ScenarioSpec s = make_scenario(name);
    CHECK(capture_contains(s, s.initial, s.initial));
    CHECK_FALSE(success_contains(s, s.initial));
    CHECK(s.initial.finite());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const ScenarioSpec r = make_scenario(name, randomize_config(name, {}, seed));
      CHECK(capture_contains(r, r.initial, r.initial));
      CHECK_FALSE(success_contains(r, r.initial));
    }
  }
}

TEST_CASE("unknown scenario lists valid names") {
  try {
    make_scenario("juggling");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("pushing") != std::string::npos);
    CHECK(msg.find("toppling") != std::string::npos);
  }
}

TEST_CASE("pushing builds with rectangle object and round pusher") {
  const ScenarioSpec s = make_pushing_scenario(
      {{"object", {{"shape", "box"}, {"half_extents", {0.025, 0.05}}, {"mass", 0.15}}},
       {"ee", {{"shape", "circle"}, {"radius", 0.02}}}});
  CHECK(s.world.body_count() == 3);
  CHECK(s.ee_policy == EePolicy::constant_velocity);
  CHECK(s.capture.kind == CaptureKind::swept_sector);
  CHECK(s.world.gravity() == Vec2{0.0, 0.0});
  CHECK(s.world.options().ground_normal_accel == doctest::Approx(9.81));
}

TEST_CASE("pushing rejects a degenerate object polygon") {
  CHECK_THROWS_AS(make_pushing_scenario({{"object",
                                          {{"shape", "polygon"},
                                           {"vertices", {{0.0, 0.0}, {0.1, 0.0}, {0.2, 0.0}}},
                                           {"mass", 0.1}}}}),
                  std::invalid_argument);
}

TEST_CASE("swept strip for a translating pusher") {
  const ScenarioSpec s = small_pusher();
  const SystemState ee = ee_at({0.0, 0.0}, {0.1, 0.0, 0.0});
  CHECK(capture_contains(s, ee, object_at({0.05, 0.0})));
  CHECK(capture_contains(s, ee, object_at({0.05, 0.02})));
  CHECK_FALSE(capture_contains(s, ee, object_at({0.05, 0.03})));
  CHECK_FALSE(capture_contains(s, ee, object_at({-0.05, 0.0})));  // behind
  CHECK(capture_contains(s, ee, object_at({0.12, 0.0})));          // inside the leading cap
  CHECK_FALSE(capture_contains(s, ee, object_at({0.13, 0.0})));
}

TEST_CASE("swept sector about the instantaneous center of rotation") {
  const ScenarioSpec s = small_pusher();
  // Pusher at the origin moving +x while turning left at 0.4 rad/s: ICR at (0, 0.5).
  const SystemState ee = ee_at({0.0, 0.0}, {0.2, 0.0, 0.4});
  const Vec2 icr{0.0, 0.5};
  const auto at_angle = [&](double ahead, double radius) {
    const double a = -kPi / 2 + ahead;
    return object_at(icr + radius * Vec2{std::cos(a), std::sin(a)});
  };
  CHECK(capture_contains(s, ee, at_angle(0.1, 0.5)));
  CHECK(capture_contains(s, ee, at_angle(0.1, 0.52)));
  CHECK_FALSE(capture_contains(s, ee, at_angle(0.1, 0.53)));
  CHECK_FALSE(capture_contains(s, ee, at_angle(0.5, 0.5)));
  CHECK_FALSE(capture_contains(s, ee, at_angle(-0.1, 0.5)));
  // Clockwise turn mirrors the sector.
  const SystemState cw = ee_at({0.0, 0.0}, {0.2, 0.0, -0.4});
  CHECK(capture_contains(s, cw, object_at({0.5 * std::sin(0.1), -0.5 + 0.5 * std::cos(0.1)})));
}

TEST_CASE("stationary pusher degenerates to its dilated footprint") {
  const ScenarioSpec s = small_pusher();
  const SystemState ee = ee_at({0.2, 0.1}, {});
  CHECK(capture_contains(s, ee, object_at({0.22, 0.1})));
  CHECK(capture_contains(s, ee, object_at({0.2, 0.076})));
  CHECK_FALSE(capture_contains(s, ee, object_at({0.23, 0.1})));
  // Pure rotation in place behaves the same.
  CHECK(capture_contains(s, ee_at({0.2, 0.1}, {0.0, 0.0, 1.0}), object_at({0.22, 0.1})));
}

TEST_CASE("longer horizon never shrinks the sector") {
  ScenarioSpec s = small_pusher();
  ScenarioSpec longer = s;
  longer.capture.horizon = 2.0;
  const SystemState ee = ee_at({0.0, 0.0}, {0.15, 0.02, 0.7});
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) {
      const SystemState z = object_at({-0.1 + 0.01 * i, -0.2 + 0.01 * j});
      if (capture_contains(s, ee, z)) CHECK(capture_contains(longer, ee, z));
    }
}

TEST_CASE("pushing success needs the wall region and alignment") {
  const ScenarioSpec s = make_pushing_scenario({{"wall_x", 0.3}});
  SystemState z;
  z.object_pose = {0.3 - 0.032, 0.05, 0.05};
  CHECK(success_contains(s, z));
  z.object_pose.theta = kPi + 0.05;  // same long-edge line
  CHECK(success_contains(s, z));
  z.object_pose.theta = 0.15;
  CHECK_FALSE(success_contains(s, z));
  z.object_pose = {0.3 - 0.04, 0.05, 0.0};
  CHECK_FALSE(success_contains(s, z));
}

TEST_CASE("toppling predicates") {
  const ScenarioSpec s = make_toppling_scenario();
  CHECK(s.capture.slip_threshold == doctest::Approx(0.1));
  CHECK(s.ee_policy == EePolicy::spring_dynamics);
  SystemState z = s.initial;
  CHECK(capture_contains(s, z, z));
  z.object_twist = {0.2, 0.0, 0.0};
  CHECK_FALSE(capture_contains(s, s.initial, z));
  z.object_twist = {-0.05, 0.0, 0.0};
  CHECK(capture_contains(s, s.initial, z));
  // Pure rotation about the pivot is not slip.
  z = s.initial;
  const Vec2 pivot = pivot_point(s, z.object_pose);
  const double w = 2.0;
  const Vec2 v = cross(w, z.object_pose.position() - pivot);
  z.object_twist = {v.x, v.y, w};
  CHECK(capture_contains(s, s.initial, z));

  SystemState g = s.initial;
  g.object_pose.theta = kPi / 2 - 0.01;
  CHECK(success_contains(s, g));
  g.object_pose.theta = kPi / 2 - 0.06;
  CHECK_FALSE(success_contains(s, g));
}

TEST_CASE("toppling rejects invalid stiffness") {
  CHECK_THROWS_WITH_AS(make_toppling_scenario({{"stiffness", -5.0}}), doctest::Contains("invalid stiffness"),
                       std::invalid_argument);
  CHECK_THROWS_AS(make_toppling_scenario({{"stiffness", 0.0}}), std::invalid_argument);
}

TEST_CASE("balance scenario construction") {
  const ScenarioSpec s = make_balance_scenario(
      {{"slope_deg", 35.0}, {"cube_half", 0.03}, {"support_half_length", 0.06}});
  CHECK(s.capture.kind == CaptureKind::support_region);
  CHECK_NOTHROW(make_balance_scenario({{"slope_deg", 0.0}}));
  CHECK_THROWS_WITH_AS(make_balance_scenario({{"offset", 0.06}}), doctest::Contains("initially uncaptured"),
                       std::invalid_argument);
  CHECK_THROWS_AS(make_balance_scenario({{"cube_half", 0.07}}), std::invalid_argument);
  CHECK_THROWS_AS(make_balance_scenario({{"slope_deg", 95.0}}), std::invalid_argument);

  SystemState z = s.initial;
  z.object_pose.x += 0.5;
  CHECK_FALSE(success_contains(s, z));
  CHECK_FALSE(capture_contains(s, s.initial, z));
}

TEST_CASE("balance on a 35 degree slope rests in equilibrium") {
  const ScenarioSpec s = make_balance_scenario({{"slope_deg", 35.0}, {"mu", 0.9}});
  Rollout ro(s, s.initial);
  dynamics::SimError err;
  for (int i = 0; i < 240; ++i) REQUIRE(ro.step({}, err));
  const SystemState z = ro.state();
  CHECK(length(z.object_pose.position() - s.initial.object_pose.position()) < 1e-3);
  CHECK(capture_contains(s, s.initial, z));
}

TEST_CASE("scripted control is deterministic and stops past the horizon") {
  for (const char* name : {"pushing", "toppling", "balance"}) {
    CAPTURE(name);
    const ScenarioSpec s = make_scenario(name, randomize_config(name, {}, 3));
    const auto a = run_script(s, 3);
    const auto b = run_script(s, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].object_pose == b[i].object_pose);
      CHECK(a[i].ee_pose == b[i].ee_pose);
    }
    const int beyond = s.script.horizon_steps / s.script.control_period + 1;
    const EeCommand c = scripted_control(s, s.initial, beyond, 3);
    CHECK(c.finished);
    CHECK(c.twist == Twist2{});
    CHECK(c.anchor_velocity == Vec2{});
  }
}

TEST_CASE("pushing seed batch yields both outcomes") {
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ScenarioSpec s = make_pushing_scenario(randomize_config("pushing", {}, seed));
    successes += success_contains(s, run_script(s, seed).back());
  }
  CHECK(successes >= 10);
  CHECK(successes <= 40);
}

TEST_CASE("constant velocity end-effector propagation") {
  const ScenarioSpec s = make_pushing_scenario();
  SystemState z = s.initial;
  z.ee_twist = {0.1, 0.0, 0.0};
  const SystemState z1 = propagate_ee(s, z, 0.5);
  CHECK(z1.ee_pose.x - z.ee_pose.x == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(z1.ee_pose.y == doctest::Approx(z.ee_pose.y));
  z.ee_twist = {};
  CHECK(propagate_ee(s, z, 0.5).ee_pose == z.ee_pose);
  // Turning motion follows the arc about the ICR; a quarter turn on a 0.25 m radius.
  z.ee_pose = {0.0, 0.0, 0.0};
  z.ee_twist = {0.25 * kPi / 2, 0.0, kPi / 2};
  const SystemState q = propagate_ee(s, z, 1.0);
  CHECK(q.ee_pose.x == doctest::Approx(0.25));
  CHECK(q.ee_pose.y == doctest::Approx(0.25));
  CHECK(q.ee_twist.vx == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rollout keeps a kinematic end-effector on its arc") {
  const ScenarioSpec s = make_pushing_scenario();
  SystemState z = s.initial;
  z.ee_pose = {-0.2, -0.3, 0.0};  // far from the object
  z.ee_twist = {0.1, 0.0, 0.5};
  Rollout ro(s, z);
  dynamics::SimError err;
  for (int i = 0; i < 240; ++i) REQUIRE(ro.step({}, err));
  const SystemState ref = propagate_ee(s, z, 1.0);
  CHECK(length(ro.state().ee_pose.position() - ref.ee_pose.position()) < 1e-12);
}

TEST_CASE("spring fingertip oscillates with closed energy") {
  const ScenarioSpec s = make_toppling_scenario({{"damping", 0.0}});
  SystemState z = s.initial;
  z.ee_pose.x += 0.02;  // away from the box, displaced from rest
  const double k = s.world.springs()[0].stiffness;
  const double m = s.world.bodies()[s.ee].def.mass;
  const double e_spring = 0.5 * k * 0.02 * 0.02;
  double min_x = z.ee_pose.x;
  SystemState cur = z;
  for (int i = 0; i < 60; ++i) {
    cur = propagate_ee(s, cur, s.dt);
    min_x = std::min(min_x, cur.ee_pose.x);
    const double ke = 0.5 * m * length_squared(cur.ee_twist.linear());
    const Vec2 d = cur.ee_pose.position() - cur.ee_anchor;
    const double pe = 0.5 * k * length_squared(d) + m * 9.81 * cur.ee_pose.y;
    const Vec2 d0 = z.ee_pose.position() - z.ee_anchor;
    const double e0 = 0.5 * k * length_squared(d0) + m * 9.81 * z.ee_pose.y;
    CHECK(ke + pe == doctest::Approx(e0).epsilon(1e-9));
  }
  CHECK(min_x < s.initial.ee_pose.x - 0.015);  // swung through rest to the other side
  CHECK(e_spring > 0.0);
}

TEST_CASE("predicates are pure") {
  const ScenarioSpec s = make_pushing_scenario();
  const SystemState z = s.initial;
  const bool c = capture_contains(s, z, z);
  const bool g = success_contains(s, z);
  for (int i = 0; i < 5; ++i) {
    CHECK(capture_contains(s, z, z) == c);
    CHECK(success_contains(s, z) == g);
  }
}

TEST_CASE("friction override rebuilds the scenario") {
  const ScenarioSpec s = make_pushing_scenario();
  const ScenarioSpec t = with_object_friction(s, 0.8);
  CHECK(t.mu == 0.8);
  CHECK(t.world.bodies()[t.object].def.friction_mu == 0.8);
  CHECK(t.initial.object_pose == s.initial.object_pose);
}

TEST_CASE("well scenario geometry") {
  const ScenarioSpec s = make_well_scenario();
  CHECK(s.capture.kind == CaptureKind::height_below);
  CHECK(s.capture.max_height == doctest::Approx(0.15));
  Rollout ro(s, s.initial);
  dynamics::SimError err;
  for (int i = 0; i < 240; ++i) REQUIRE(ro.step({}, err));
  CHECK(ro.state().object_pose.y == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(ro.energy() == doctest::Approx(9.81 * 0.05).epsilon(1e-6));
}
