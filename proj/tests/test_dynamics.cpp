#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "escapekit/energy.hpp"
#include "escapekit/world.hpp"

using namespace escapekit;
using namespace escapekit::dynamics;

namespace {

BodyDef ground_box(double half_w = 5.0, double half_h = 0.5, Pose2 pose = {0.0, -0.5, 0.0}) {
  BodyDef b;
  b.name = "ground";
  b.shape = make_box(half_w, half_h);
  b.motion = MotionKind::fixed;
  b.pose = pose;
  return b;
}

BodyDef ball(double r, Pose2 pose, double mass = 1.0) {
  BodyDef b;
  b.name = "ball";
  b.shape = Circle{r};
  b.mass = mass;
  b.pose = pose;
  return b;
}

// Closed rectangular arena of fixed walls, inner size w x h centered at the origin.
std::vector<BodyDef> arena(double w, double h, double mu, double e) {
  std::vector<BodyDef> walls;
  const double t = 0.25;
  const Pose2 poses[] = {{0.0, -h / 2 - t, 0.0}, {0.0, h / 2 + t, 0.0}, {-w / 2 - t, 0.0, 0.0},
                         {w / 2 + t, 0.0, 0.0}};
  for (int i = 0; i < 4; ++i) {
    BodyDef b;
    b.name = "wall" + std::to_string(i);
    b.shape = i < 2 ? make_box(w / 2 + 2 * t, t) : make_box(t, h / 2 + 2 * t);
    b.motion = MotionKind::fixed;
    b.pose = poses[i];
    b.friction_mu = mu;
    b.restitution = e;
    walls.push_back(b);
  }
  return walls;
}

}  // namespace

TEST_CASE("resting box on ground reports one contact pair") {
  BodyDef box;
  box.name = "box";
  box.shape = make_box(0.5, 0.5);
  box.pose = {0.0, 0.5, 0.0};
  World w = build_world({ground_box(), box}, {}, {0.0, -9.81});
  CHECK(w.body_count() == 2);
  auto r = step(w, w.initial_state(), {}, 1.0 / 240.0);
  REQUIRE(r.has_value());
  CHECK(r->second.contact_pairs() == 1);
  CHECK(r->first.poses[1].y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("empty world steps as a no-op") {
  World w = build_world({}, {}, {0.0, -9.81});
  auto r = step(w, w.initial_state(), {}, 0.01);
  REQUIRE(r.has_value());
  CHECK(r->first.poses.empty());
  CHECK(r->second.contacts.empty());
  CHECK(r->second.w_noncons == 0.0);
}

TEST_CASE("collinear polygon is rejected as degenerate") {
  BodyDef b;
  b.shape = ConvexPolygon{{{0, 0}, {1, 0}, {2, 0}}, {}};
  try {
    build_world({b}, {}, {});
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("degenerate shape") != std::string::npos);
  }
}

TEST_CASE("non-positive mass and non-convex polygons are rejected") {
  BodyDef b = ball(0.1, {});
  b.mass = 0.0;
  CHECK_THROWS_AS(build_world({b}, {}, {}), std::invalid_argument);
  BodyDef p;
  p.shape = ConvexPolygon{{{0, 0}, {1, 0}, {0.2, 0.2}, {0, 1}}, {}};
  CHECK_THROWS_AS(build_world({p}, {}, {}), std::invalid_argument);
}

TEST_CASE("free body coasts") {
  World w = build_world({ball(0.5, {})}, {}, {});
  WorldState s = w.initial_state();
  s.twists[0] = {1.0, 0.0, 0.0};
  auto r = step(w, s, {}, 0.1);
  REQUIRE(r.has_value());
  CHECK(r->first.poses[0].x == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(r->first.poses[0].y == 0.0);
  CHECK(r->first.twists[0] == s.twists[0]);
  CHECK(r->second.w_noncons == 0.0);
}

TEST_CASE("control force work closes exactly") {
  // Mid-step position update: the work of a constant force equals the kinetic energy gained.
  World w = build_world({ball(0.5, {}, 1.0)}, {}, {});
  const std::vector<Wrench> u{{2.0, 0.0, 0.0}};
  auto r = step(w, w.initial_state(), u, 0.5);
  REQUIRE(r.has_value());
  CHECK(r->first.twists[0].vx == doctest::Approx(1.0).epsilon(1e-15));
  const double ke = energy::mechanical_energy(w, r->first, 0.0).kinetic;
  CHECK(r->second.w_control == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(ke - r->second.w_control) < 1e-15);
}

TEST_CASE("elastic ball rebounds from a wall") {
  BodyDef wall = ground_box(0.5, 2.0, {1.5, 0.0, 0.0});
  wall.restitution = 1.0;
  wall.friction_mu = 0.0;
  BodyDef b = ball(0.1, {0.0, 0.0, 0.0});
  b.restitution = 1.0;
  b.friction_mu = 0.0;
  World w = build_world({wall, b}, {}, {});
  WorldState s = w.initial_state();
  s.twists[1] = {2.0, 0.0, 0.0};
  bool bounced = false;
  for (int k = 0; k < 240; ++k) {
    auto r = step(w, s, {}, 1.0 / 240.0);
    REQUIRE(r.has_value());
    CHECK(std::abs(r->second.w_noncons) < 1e-9);
    s = r->first;
    if (s.twists[1].vx < 0.0) bounced = true;
  }
  REQUIRE(bounced);
  CHECK(s.twists[1].vx == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(std::abs(s.twists[1].vy) < 1e-9);
}

TEST_CASE("min body distance") {
  SUBCASE("two unit circles 3 m apart") {
    World w = build_world({ball(1.0, {0, 0, 0}), ball(1.0, {3, 0, 0})}, {}, {});
    CHECK(min_body_distance(w, w.initial_state(), 0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("overlapping boxes") {
    BodyDef a;
    a.shape = make_box(0.5, 0.5);
    BodyDef b = a;
    b.pose = {0.7, 0.3, 0.4};
    World w = build_world({a, b}, {}, {});
    CHECK(min_body_distance(w, w.initial_state(), 0, 1) == 0.0);
  }
  SUBCASE("box face to circle") {
    BodyDef a;
    a.shape = make_box(0.5, 0.5);
    World w = build_world({a, ball(0.5, {2, 0, 0})}, {}, {});
    // Nearest box point is the face x = 0.5; circle surface at x = 1.5.
    CHECK(min_body_distance(w, w.initial_state(), 0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("rotated box corner to circle") {
    BodyDef a;
    a.shape = make_box(0.5, 0.5);
    a.pose = {0, 0, M_PI / 4};
    World w = build_world({a, ball(0.5, {2, 0, 0})}, {}, {});
    CHECK(min_body_distance(w, w.initial_state(), 0, 1) ==
          doctest::Approx(2.0 - std::sqrt(0.5) - 0.5));
  }
}

TEST_CASE("stepping is bitwise deterministic") {
  BodyDef box;
  box.shape = make_box(0.2, 0.1);
  box.pose = {0.0, 0.4, 0.3};
  World w = build_world({ground_box(), box, ball(0.1, {0.05, 0.9, 0})}, {}, {0.0, -9.81});
  WorldState a = w.initial_state();
  WorldState b = w.initial_state();
  for (int k = 0; k < 400; ++k) {
    auto ra = step(w, a, {}, 1.0 / 240.0);
    auto rb = step(w, b, {}, 1.0 / 240.0);
    REQUIRE(ra.has_value());
    REQUIRE(rb.has_value());
    a = ra->first;
    b = rb->first;
    CHECK(ra->second.w_noncons == rb->second.w_noncons);
  }
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    CHECK(a.poses[i] == b.poses[i]);
    CHECK(a.twists[i] == b.twists[i]);
  }
}

TEST_CASE("tunneling is reported") {
  BodyDef b = ball(0.1, {0.0, 0.05, 0.0});
  World w = build_world({ground_box(), b}, {}, {0.0, -9.81});
  auto r = step(w, w.initial_state(), {}, 1.0 / 240.0);
  REQUIRE_FALSE(r.has_value());
  CHECK(r.error().code == SimError::Code::tunneling);
}

TEST_CASE("bad inputs are reported") {
  World w = build_world({ball(0.1, {})}, {}, {});
  CHECK_FALSE(step(w, w.initial_state(), {}, 0.0).has_value());
  WorldState s;
  CHECK_FALSE(step(w, s, {}, 0.01).has_value());
}

TEST_CASE("sliding box dissipates and respects the friction cone") {
  BodyDef g = ground_box();
  g.friction_mu = 0.5;
  BodyDef box;
  box.shape = make_box(0.1, 0.05);
  box.pose = {0.0, 0.05, 0.0};
  box.friction_mu = 0.5;
  World w = build_world({g, box}, {}, {0.0, -9.81});
  WorldState s = w.initial_state();
  s.twists[1] = {2.0, 0.0, 0.0};
  double e0 = energy::mechanical_energy(w, s, 0.0).total;
  double total_noncons = 0.0;
  for (int k = 0; k < 240; ++k) {
    auto r = step(w, s, {}, 1.0 / 240.0);
    REQUIRE(r.has_value());
    CHECK(r->second.w_noncons <= 1e-12);
    total_noncons += r->second.w_noncons;
    for (const ContactPoint& c : r->second.contacts) {
      CHECK(std::abs(c.tangent_force) <= 0.5 * c.normal_force + 1e-6);
      CHECK(length(c.normal) == doctest::Approx(1.0).epsilon(1e-9));
    }
    s = r->first;
  }
  const double e1 = energy::mechanical_energy(w, s, 0.0).total;
  CHECK(std::abs(s.twists[1].vx) < 1e-6);
  CHECK(e1 - e0 == doctest::Approx(total_noncons).epsilon(1e-9));
  // Coulomb deceleration: stops after v^2 / (2 mu g).
  CHECK(s.poses[1].x == doctest::Approx(4.0 / (2 * 0.5 * 9.81)).epsilon(0.02));
}

TEST_CASE("mirrored single-contact scene mirrors the trajectory") {
  auto run = [](double sign) {
    BodyDef g = ground_box();
    g.friction_mu = 0.6;
    BodyDef b = ball(0.1, {sign * 0.3, 0.4, 0.0});
    b.friction_mu = 0.6;
    b.restitution = 0.5;
    World w = build_world({g, b}, {}, {0.0, -9.81});
    WorldState s = w.initial_state();
    s.twists[1] = {sign * 0.7, 0.0, sign * 5.0};
    std::vector<WorldState> traj;
    for (int k = 0; k < 480; ++k) {
      auto r = step(w, s, {}, 1.0 / 240.0);
      REQUIRE(r.has_value());
      s = r->first;
      traj.push_back(s);
    }
    return traj;
  };
  const auto a = run(1.0);
  const auto b = run(-1.0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Pose2& pa = a[k].poses[1];
    const Pose2& pb = b[k].poses[1];
    CHECK(std::abs(pa.x + pb.x) <= 1e-9);
    CHECK(std::abs(pa.y - pb.y) <= 1e-9);
    CHECK(std::abs(pa.theta + pb.theta) <= 1e-9);
  }
}

TEST_CASE("random elastic rollouts close energy") {
  // One body per arena: impacts chained within a single step are resolved inelastically.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto bodies = arena(2.0, 1.5, 0.0, 1.0);
    BodyDef b = ball(0.1, {0.3 * U(rng), 0.3 * U(rng), 0.0}, 0.7);
    if (trial % 3 == 2) b.shape = make_box(0.08, 0.05);
    b.restitution = 1.0;
    b.friction_mu = 0.0;
    bodies.push_back(b);
    WorldOptions opt;
    opt.restitution_threshold = 0.0;
    World w = build_world(bodies, {}, trial % 2 ? Vec2{0.0, -9.81} : Vec2{}, opt);
    WorldState s = w.initial_state();
    s.twists[4] = {2.0 * U(rng), 2.0 * U(rng), U(rng)};
    const double e0 = energy::mechanical_energy(w, s, 0.0).total;
    double work = 0.0;
    std::vector<Wrench> u(w.body_count());
    for (int k = 0; k < 1200; ++k) {
      if (k % 120 == 0) u[4] = {U(rng), U(rng), 0.01 * U(rng)};
      auto r = step(w, s, u, 1.0 / 240.0);
      REQUIRE(r.has_value());
      work += r->second.w_control;
      s = r->first;
    }
    const double e1 = energy::mechanical_energy(w, s, 0.0).total;
    CHECK(std::abs(e1 - e0 - work) <= 5e-6);
  }
}
