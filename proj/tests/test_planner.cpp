#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "escapekit/planner.hpp"
#include "escapekit/rng.hpp"

using namespace escapekit;
using namespace escapekit::planner;
using scenarios::make_scenario;

namespace {

// Frictionless 1 kg disk in free space: a double integrator.
ScenarioSpec free_space(double half_extent = 1.0) {
  dynamics::BodyDef b;
  b.name = "puck";
  b.shape = Circle{0.02};
  b.mass = 1.0;
  ScenarioSpec s;
  s.name = "free";
  s.world = dynamics::build_world({b}, {}, {0.0, 0.0});
  s.object = 0;
  s.capture.kind = scenarios::CaptureKind::height_below;
  s.capture.max_height = 1e9;
  s.control_bounds = {.f_max = 1.0, .tau_max = 0.0, .min_steps = 12, .max_steps = 60};
  s.kinematic_bounds.x_min = s.kinematic_bounds.y_min = -half_extent;
  s.kinematic_bounds.x_max = s.kinematic_bounds.y_max = half_extent;
  return s;
}

double hull_area(std::vector<Vec2> p) {
  std::sort(p.begin(), p.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (p.size() < 3) return 0.0;
  const auto cross = [](Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  double a = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) a += cross({0, 0}, h[i], h[(i + 1) % h.size()]);
  return 0.5 * std::abs(a);
}

// Re-simulates the root-to-node controls and returns the recomputed cost.
double resimulate_cost(const ScenarioSpec& spec, const Tree& tree, std::size_t id) {
  AugmentedState a{tree[0].aug.z, 0.0};
  const auto path = tree.path_to(id);
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto r = propagate(spec, a, *tree[path[i]].incoming, {}, kUnbounded, false);
    REQUIRE(r.has_value());
    a = r->end;
  }
  return a.c;
}

}  // namespace

TEST_CASE("propagate from rest with zero wrench costs nothing") {
  const auto spec = make_scenario("well", {});
  const auto r = propagate(spec, {spec.initial, 0.0}, {0.0, 0.0, 0.0, 60});
  REQUIRE(r.has_value());
  CHECK(r->end.c < 1e-6);
  CHECK(std::abs(r->end.z.object_pose.y - spec.initial.object_pose.y) < 1e-6);
  CHECK(r->steps == 60);
}

TEST_CASE("propagate accumulates work for a 1 N push over 1 s") {
  const auto spec = free_space(10.0);
  const auto r = propagate(spec, {spec.initial, 0.0}, {1.0, 0.0, 0.0, 240});
  REQUIRE(r.has_value());
  CHECK(r->end.c == doctest::Approx(0.5).epsilon(0.05));
  CHECK(r->end.z.object_twist.vx == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("propagate reports bounds and cost-bound violations") {
  const auto spec = free_space(0.05);
  const auto r = propagate(spec, {spec.initial, 0.0}, {1.0, 0.0, 0.0, 240});
  REQUIRE_FALSE(r.has_value());
  CHECK(r.error().kind == Violation::Kind::bounds);
  CHECK(r.error().message == "bounds violation");

  const auto big = free_space(10.0);
  const auto c = propagate(big, {big.initial, 0.0}, {1.0, 0.0, 0.0, 240}, {}, 0.1);
  REQUIRE_FALSE(c.has_value());
  CHECK(c.error().kind == Violation::Kind::cost_bound);
}

TEST_CASE("propagate stops at the goal and keeps the executed prefix") {
  const auto spec = make_scenario("well", {});
  const GoalSet goal{&spec, spec.initial};
  const auto r = propagate(spec, {spec.initial, 0.0}, {0.0, 12.0, 0.0, 2000}, goal, kUnbounded, false);
  REQUIRE(r.has_value());
  CHECK(r->reached_goal);
  CHECK(r->steps < 2000);
  CHECK(goal.contains(r->end.z));
}

TEST_CASE("est with zero iterations returns the root only") {
  const auto spec = make_scenario("pushing", {});
  PlannerConfig cfg;
  cfg.max_iterations = 0;
  const auto g = est_grow(spec, spec.initial, cfg);
  CHECK(g.tree.size() == 1);
  CHECK(g.tree[0].parent == kNoParent);
  CHECK(g.tree[0].aug.c == 0.0);
}

TEST_CASE("est on pushing: 100 iterations, consistent costs") {
  const auto spec = make_scenario("pushing", {});
  PlannerConfig cfg;
  cfg.max_iterations = 100;
  cfg.rng_seed = 5;
  const auto g = est_grow(spec, spec.initial, cfg);
  CHECK(g.tree.size() <= 101);
  CHECK(g.tree.size() > 1);
  for (std::size_t i = 1; i < g.tree.size(); ++i) {
    const auto& n = g.tree[i];
    CHECK(n.parent < i);
    CHECK(n.aug.c >= g.tree[n.parent].aug.c);
  }
  Rng pick(1);
  for (int k = 0; k < 10; ++k) {
    const auto id = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(g.tree.size()) - 1));
    CHECK(std::abs(resimulate_cost(spec, g.tree, id) - g.tree[id].aug.c) <= 1e-6);
  }
}

TEST_CASE("est spreads wider than a tree grown without sampling bias") {
  const auto spec = free_space();
  double est_area = 0.0;
  double base_area = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PlannerConfig cfg;
    cfg.rng_seed = seed;
    cfg.goal_bias = 0.0;
    cfg.max_nodes = 60;
    cfg.max_iterations = 2000;
    const auto e = est_grow(spec, spec.initial, cfg);
    // Baseline: random node, random control. A vanishing radius leaves every density at 0.
    PlannerConfig uniform = cfg;
    uniform.est_radius = 1e-12;
    const auto r = est_grow(spec, spec.initial, uniform);
    REQUIRE(e.tree.size() == r.tree.size());
    std::vector<Vec2> pe, pr;
    for (const auto& n : e.tree.nodes()) pe.push_back(n.aug.z.object_pose.position());
    for (const auto& n : r.tree.nodes()) pr.push_back(n.aug.z.object_pose.position());
    est_area += hull_area(pe);
    base_area += hull_area(pr);
  }
  MESSAGE("mean hull area est " << est_area / 20 << " baseline " << base_area / 20);
  CHECK(est_area > base_area);
}

TEST_CASE("identical seeds give identical trees") {
  const auto spec = make_scenario("toppling", {});
  PlannerConfig cfg;
  cfg.max_iterations = 60;
  cfg.rng_seed = 17;
  for (int pass = 0; pass < 2; ++pass) {
    const auto a = pass == 0 ? rrt_grow(spec, spec.initial, cfg) : est_grow(spec, spec.initial, cfg);
    const auto b = pass == 0 ? rrt_grow(spec, spec.initial, cfg) : est_grow(spec, spec.initial, cfg);
    CHECK(tree_to_json(a.tree) == tree_to_json(b.tree));
  }
  PlannerConfig other = cfg;
  other.rng_seed = 18;
  CHECK(tree_to_json(rrt_grow(spec, spec.initial, cfg).tree) !=
        tree_to_json(rrt_grow(spec, spec.initial, other).tree));
}

TEST_CASE("full goal bias moves the first extension toward the goal") {
  // Goal starts 1 cm above the root in a narrow vertical corridor.
  auto spec = free_space();
  spec.capture.max_height = 0.01;
  spec.kinematic_bounds.x_min = -0.05;
  spec.kinematic_bounds.x_max = 0.05;
  const GoalSet goal{&spec, spec.initial};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PlannerConfig cfg;
    cfg.goal_bias = 1.0;
    cfg.max_iterations = 1;
    cfg.weights.velocity = 1e-3;  // compare positions only
    cfg.rng_seed = seed;
    const auto g = rrt_grow(spec, spec.initial, cfg, goal);
    REQUIRE(g.tree.size() == 2);
    CHECK(g.tree[1].aug.z.object_pose.y > spec.initial.object_pose.y);
  }
}

TEST_CASE("rrt finds a well escape within 2000 iterations") {
  const auto spec = make_scenario("well", {});
  const GoalSet goal{&spec, spec.initial};
  int found = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PlannerConfig cfg;
    cfg.max_iterations = 2000;
    cfg.rng_seed = seed;
    const auto g = rrt_grow(spec, spec.initial, cfg, goal);
    if (!g.goal_nodes.empty()) {
      ++found;
      CHECK(goal.contains(g.tree[g.goal_nodes.front()].aug.z));
    }
  }
  CHECK(found >= 18);
}

TEST_CASE("bound respect and no re-insertion after pruning") {
  const auto spec = make_scenario("well", {});
  const GoalSet goal{&spec, spec.initial};
  PlannerConfig cfg;
  cfg.max_iterations = 400;
  cfg.cost_bound = 0.6;
  cfg.stop_at_goal = false;
  cfg.rng_seed = 9;
  const auto g = est_grow(spec, spec.initial, cfg, goal);
  for (const auto& n : g.tree.nodes()) CHECK(n.aug.c < 0.6);
  const Tree pruned = prune(g.tree, 0.3);
  cfg.cost_bound = 0.3;
  const auto regrown = rrt_grow(spec, pruned, cfg, goal);
  CHECK(regrown.tree.size() >= pruned.size());
  for (const auto& n : regrown.tree.nodes()) CHECK(n.aug.c < 0.3);
}

TEST_CASE("prune examples") {
  Tree t(SystemState{});
  for (double c : {1.0, 2.0, 3.0}) {
    TreeNode n;
    n.aug.c = c;
    n.parent = t.size() - 1;
    t.add(n);
  }
  CHECK(prune(t, kUnbounded).size() == 4);
  CHECK(prune(t, 0.0).size() == 1);
  const Tree p = prune(t, 2.0);
  REQUIRE(p.size() == 2);
  CHECK(p[1].aug.c == 1.0);
  CHECK(p[1].parent == 0);

  // A cheap child under an expensive parent goes with its parent.
  TreeNode child;
  child.aug.c = 0.5;
  child.parent = 3;
  t.add(child);
  CHECK(prune(t, 2.0).size() == 2);
}

TEST_CASE("state distance properties") {
  const MetricWeights w;
  SystemState a;
  CHECK(state_distance(a, a, w) == 0.0);

  SystemState p, q;
  p.object_pose.theta = std::numbers::pi - 0.01;
  q.object_pose.theta = -std::numbers::pi + 0.01;
  CHECK(state_distance(p, q, w) == doctest::Approx(w.angle * 0.02).epsilon(1e-9));

  Rng rng(4);
  const auto random_state = [&] {
    SystemState z;
    z.object_pose = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3.2, 3.2)};
    z.object_twist = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-5, 5)};
    z.ee_pose = {rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0};
    return z;
  };
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_state();
    const auto y = random_state();
    const auto z = random_state();
    if (state_distance(x, z, w) > state_distance(x, y, w) + state_distance(y, z, w) + 1e-12) ++violations;
    if (std::abs(state_distance(x, y, w) - state_distance(y, x, w)) > 1e-15) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("tree json dump and state round trip") {
  const auto spec = make_scenario("balance", {});
  PlannerConfig cfg;
  cfg.max_iterations = 20;
  const auto g = est_grow(spec, spec.initial, cfg);
  const auto j = tree_to_json(g.tree);
  REQUIRE(j.at("nodes").size() == g.tree.size());
  CHECK(j["nodes"][0]["parent"].is_null());
  CHECK(j["nodes"][0]["c"].get<double>() == 0.0);
  const SystemState back = state_from_json(state_to_json(g.tree[g.tree.size() - 1].aug.z));
  CHECK(state_to_json(back) == state_to_json(g.tree[g.tree.size() - 1].aug.z));
}
