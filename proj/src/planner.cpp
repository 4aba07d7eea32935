#include "escapekit/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "escapekit/energy.hpp"
#include "escapekit/rng.hpp"

namespace escapekit::planner {

using nlohmann::json;

Tree::Tree(const SystemState& root) {
  TreeNode n;
  n.aug = {root, 0.0};
  nodes_.push_back(std::move(n));
}

std::size_t Tree::add(TreeNode node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

std::vector<std::size_t> Tree::path_to(std::size_t id) const {
  std::vector<std::size_t> path;
  for (std::size_t i = id; i != kNoParent; i = nodes_[i].parent) path.push_back(i);
  std::reverse(path.begin(), path.end());
  return path;
}

bool GoalSet::contains(const SystemState& z) const {
  return spec != nullptr && !scenarios::capture_contains(*spec, z_init, z);
}

PropagateResult propagate(const ScenarioSpec& spec, const AugmentedState& from, const ControlSample& u,
                          const GoalSet& goal, double cost_bound, bool check_bounds) {
  scenarios::Rollout ro(spec, from.z);
  const dynamics::Wrench w{u.fx, u.fy, u.tau};
  dynamics::SimError err;
  double c = from.c;
  double e0 = ro.energy();
  Propagation out;
  for (int k = 0; k < u.duration_steps; ++k) {
    if (!ro.step(w, err)) return unexpected(Violation{Violation::Kind::tunneling, err.message});
    const double e1 = ro.energy();
    c += energy::cost_increment(e0, e1, ro.report()).d_work_ext_abs;
    e0 = e1;
    if (c >= cost_bound) return unexpected(Violation{Violation::Kind::cost_bound, "cost bound reached"});
    const SystemState z = ro.state();
    if (check_bounds && !spec.kinematic_bounds.contains(z))
      return unexpected(Violation{Violation::Kind::bounds, "bounds violation"});
    out.steps = k + 1;
    if (goal.contains(z)) {
      out.reached_goal = true;
      out.end = {z, c};
      return out;
    }
  }
  out.end = {ro.state(), c};
  return out;
}

double state_distance(const SystemState& a, const SystemState& b, const MetricWeights& w) {
  const Vec2 dp = a.object_pose.position() - b.object_pose.position();
  const double da = angle_diff(a.object_pose.theta, b.object_pose.theta);
  const Vec2 dv = a.object_twist.linear() - b.object_twist.linear();
  const double dw = a.object_twist.omega - b.object_twist.omega;
  const Vec2 de = a.ee_pose.position() - b.ee_pose.position();
  return std::sqrt(w.position * w.position * length_squared(dp) + w.angle * w.angle * da * da +
                   w.velocity * w.velocity * length_squared(dv) +
                   w.angular_velocity * w.angular_velocity * dw * dw +
                   w.ee_position * w.ee_position * length_squared(de));
}

namespace {

ControlSample sample_control(const ScenarioSpec& spec, Rng& rng) {
  const auto& b = spec.control_bounds;
  ControlSample u;
  u.fx = rng.uniform(-b.f_max, b.f_max);
  u.fy = rng.uniform(-b.f_max, b.f_max);
  u.tau = b.tau_max > 0.0 ? rng.uniform(-b.tau_max, b.tau_max) : 0.0;
  u.duration_steps = static_cast<int>(rng.uniform_int(b.min_steps, b.max_steps));
  return u;
}

// Prefix sums over per-node selection weights.
class Fenwick {
 public:
  void push(double w) {
    const std::size_t i = sums_.size() + 1;
    // New slot i covers (i - lowbit(i), i].
    double s = w;
    const std::size_t low = i & (~i + 1);
    for (std::size_t j = 1; j < low; j <<= 1) s += sums_[i - j - 1];
    sums_.push_back(s);
    values_.push_back(w);
  }
  void set(std::size_t idx, double w) {
    const double delta = w - values_[idx];
    values_[idx] = w;
    for (std::size_t i = idx + 1; i <= sums_.size(); i += i & (~i + 1)) sums_[i - 1] += delta;
  }
  double total() const {
    double s = 0.0;
    for (std::size_t i = sums_.size(); i > 0; i -= i & (~i + 1)) s += sums_[i - 1];
    return s;
  }
  /// Smallest index whose inclusive prefix sum exceeds `target`.
  std::size_t find(double target) const {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 <= sums_.size()) step *= 2;
    for (; step > 0; step >>= 1) {
      if (pos + step <= sums_.size() && sums_[pos + step - 1] <= target) {
        pos += step;
        target -= sums_[pos - 1];
      }
    }
    return std::min(pos, sums_.size() - 1);
  }
  double value(std::size_t idx) const { return values_[idx]; }

 private:
  std::vector<double> sums_;
  std::vector<double> values_;
};

// Uniform grid over object position; a node within `radius` under the weighted metric lies
// in the 3x3 block of cells around the query.
class DensityIndex {
 public:
  DensityIndex(double radius, const MetricWeights& w)
      : radius_(radius), cell_(radius / std::max(w.position, 1e-12)), weights_(w) {}

  /// Inserts node `id` and returns the ids of existing nodes within the radius.
  std::vector<std::size_t> insert(std::size_t id, const std::vector<TreeNode>& nodes) {
    const SystemState& z = nodes[id].aug.z;
    const auto [cx, cy] = cell_of(z);
    std::vector<std::size_t> near;
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy) {
        const auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second)
          if (state_distance(z, nodes[j].aug.z, weights_) <= radius_) near.push_back(j);
      }
    std::sort(near.begin(), near.end());
    cells_[key(cx, cy)].push_back(id);
    return near;
  }

 private:
  std::pair<long, long> cell_of(const SystemState& z) const {
    return {static_cast<long>(std::floor(z.object_pose.x / cell_)),
            static_cast<long>(std::floor(z.object_pose.y / cell_))};
  }
  static std::uint64_t key(long x, long y) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
           static_cast<std::uint32_t>(y);
  }

  double radius_;
  double cell_;
  MetricWeights weights_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

TreeNode make_child(std::size_t parent, const ControlSample& u, const Propagation& p) {
  TreeNode n;
  n.aug = p.end;
  n.parent = parent;
  ControlSample executed = u;
  executed.duration_steps = p.steps;
  n.incoming = executed;
  n.goal = p.reached_goal;
  return n;
}

}  // namespace

GrowResult est_grow(const ScenarioSpec& spec, Tree tree, const PlannerConfig& config, const GoalSet& goal) {
  GrowResult res;
  Rng rng(derive_seed(config.rng_seed, 0xe57));
  DensityIndex index(config.est_radius, config.weights);
  Fenwick weights;
  std::vector<int> density;
  const auto weight_of = [&](std::size_t i) {
    return tree[i].goal ? 0.0 : 1.0 / (1.0 + density[i]);
  };
  const auto insert = [&](std::size_t id) {
    density.push_back(0);
    weights.push(0.0);
    for (std::size_t j : index.insert(id, tree.nodes())) {
      ++density[j];
      ++density[id];
      weights.set(j, weight_of(j));
    }
    weights.set(id, weight_of(id));
  };
  for (std::size_t i = 0; i < tree.size(); ++i) {
    insert(i);
    if (tree[i].goal) res.goal_nodes.push_back(i);
  }

  for (int it = 0; it < config.max_iterations; ++it) {
    if (config.max_nodes > 0 && tree.size() >= config.max_nodes) break;
    res.iterations = it + 1;
    const double total = weights.total();
    if (!(total > 0.0)) break;
    std::size_t sel = weights.find(rng.uniform() * total);
    if (weights.value(sel) <= 0.0) continue;
    const ControlSample u = sample_control(spec, rng);
    const auto r = propagate(spec, tree[sel].aug, u, goal, config.cost_bound, config.use_kinematic_bounds);
    if (!r.has_value()) continue;
    const std::size_t id = tree.add(make_child(sel, u, *r));
    insert(id);
    if (config.max_nodes > 0 && tree.size() >= config.max_nodes) break;
    if (r->reached_goal) {
      res.goal_nodes.push_back(id);
      if (config.stop_at_goal) break;
    }
  }
  res.tree = std::move(tree);
  return res;
}

GrowResult est_grow(const ScenarioSpec& spec, const SystemState& root, const PlannerConfig& config,
                    const GoalSet& goal) {
  return est_grow(spec, Tree(root), config, goal);
}

namespace {

SystemState sample_target(const ScenarioSpec& spec, const SystemState& root, Rng& rng) {
  const auto& kb = spec.kinematic_bounds;
  SystemState t = root;
  const bool bounded = kb.bounded();
  const double x0 = bounded ? kb.x_min : root.object_pose.x - 1.0;
  const double x1 = bounded ? kb.x_max : root.object_pose.x + 1.0;
  const double y0 = bounded ? kb.y_min : root.object_pose.y - 1.0;
  const double y1 = bounded ? kb.y_max : root.object_pose.y + 1.0;
  const double vmax = std::min(kb.v_max, 1.0);
  const double wmax = std::min(kb.omega_max, 5.0);
  t.object_pose = {rng.uniform(x0, x1), rng.uniform(y0, y1),
                   rng.uniform(-std::numbers::pi, std::numbers::pi)};
  t.object_twist = {rng.uniform(-vmax, vmax), rng.uniform(-vmax, vmax), rng.uniform(-wmax, wmax)};
  return t;
}

}  // namespace

GrowResult rrt_grow(const ScenarioSpec& spec, Tree tree, const PlannerConfig& config, const GoalSet& goal) {
  GrowResult res;
  Rng rng(derive_seed(config.rng_seed, 0x277));
  const SystemState root = tree[0].aug.z;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (tree[i].goal) res.goal_nodes.push_back(i);

  for (int it = 0; it < config.max_iterations; ++it) {
    res.iterations = it + 1;
    SystemState target = sample_target(spec, root, rng);
    if (goal.enabled() && rng.uniform() < config.goal_bias) {
      for (int tries = 0; tries < 100 && !goal.contains(target); ++tries)
        target = sample_target(spec, root, rng);
    }
    std::size_t nearest = kNoParent;
    double best_d = kUnbounded;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (tree[i].goal) continue;
      const double d = state_distance(tree[i].aug.z, target, config.weights);
      if (d < best_d) {
        best_d = d;
        nearest = i;
      }
    }
    if (nearest == kNoParent) break;

    std::optional<TreeNode> best;
    double best_end = kUnbounded;
    for (int k = 0; k < config.rrt_candidates; ++k) {
      const ControlSample u = sample_control(spec, rng);
      const auto r = propagate(spec, tree[nearest].aug, u, goal, config.cost_bound, config.use_kinematic_bounds);
      if (!r.has_value()) continue;
      // A goal-reaching candidate wins over any non-goal one; otherwise nearest to the target.
      const double d = state_distance(r->end.z, target, config.weights);
      const bool better = !best || (r->reached_goal && !best->goal) ||
                          (r->reached_goal == best->goal && d < best_end);
      if (better) {
        best = make_child(nearest, u, *r);
        best_end = d;
      }
    }
    if (!best) continue;
    const bool reached = best->goal;
    const std::size_t id = tree.add(std::move(*best));
    if (config.max_nodes > 0 && tree.size() >= config.max_nodes) break;
    if (reached) {
      res.goal_nodes.push_back(id);
      if (config.stop_at_goal) break;
    }
  }
  res.tree = std::move(tree);
  return res;
}

GrowResult rrt_grow(const ScenarioSpec& spec, const SystemState& root, const PlannerConfig& config,
                    const GoalSet& goal) {
  return rrt_grow(spec, Tree(root), config, goal);
}

Tree prune(const Tree& tree, double c_bound) {
  Tree out;
  if (tree.empty()) return out;
  std::vector<std::size_t> remap(tree.size(), kNoParent);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& n = tree[i];
    const bool is_root = n.parent == kNoParent;
    if (!is_root && (n.aug.c >= c_bound || remap[n.parent] == kNoParent)) continue;
    TreeNode copy = n;
    if (!is_root) copy.parent = remap[n.parent];
    remap[i] = out.add(std::move(copy));
  }
  return out;
}

json state_to_json(const SystemState& z) {
  const auto pose = [](const Pose2& p) { return json::array({p.x, p.y, p.theta}); };
  const auto twist = [](const Twist2& t) { return json::array({t.vx, t.vy, t.omega}); };
  return {{"object_pose", pose(z.object_pose)},
          {"object_twist", twist(z.object_twist)},
          {"ee_pose", pose(z.ee_pose)},
          {"ee_twist", twist(z.ee_twist)},
          {"ee_anchor", {z.ee_anchor.x, z.ee_anchor.y}},
          {"ee_anchor_velocity", {z.ee_anchor_velocity.x, z.ee_anchor_velocity.y}},
          {"time", z.time}};
}

SystemState state_from_json(const json& j) {
  const auto triple = [&](const char* key) {
    const auto& a = j.at(key);
    return std::array<double, 3>{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
  };
  const auto pair = [&](const char* key) -> Vec2 {
    const auto it = j.find(key);
    if (it == j.end()) return {};
    return {it->at(0).get<double>(), it->at(1).get<double>()};
  };
  SystemState z;
  auto p = triple("object_pose");
  z.object_pose = {p[0], p[1], p[2]};
  p = triple("object_twist");
  z.object_twist = {p[0], p[1], p[2]};
  p = triple("ee_pose");
  z.ee_pose = {p[0], p[1], p[2]};
  p = triple("ee_twist");
  z.ee_twist = {p[0], p[1], p[2]};
  z.ee_anchor = pair("ee_anchor");
  z.ee_anchor_velocity = pair("ee_anchor_velocity");
  z.time = j.value("time", 0.0);
  return z;
}

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& n = tree[i];
    json node = {{"id", i},
                 {"parent", n.parent == kNoParent ? json(nullptr) : json(n.parent)},
                 {"z", state_to_json(n.aug.z)},
                 {"c", n.aug.c},
                 {"goal", n.goal}};
    if (n.incoming)
      node["control"] = {{"fx", n.incoming->fx}, {"fy", n.incoming->fy}, {"tau", n.incoming->tau},
                         {"duration_steps", n.incoming->duration_steps}};
    nodes.push_back(std::move(node));
  }
  return {{"nodes", std::move(nodes)}};
}

}  // namespace escapekit::planner
