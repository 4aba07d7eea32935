#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "escapekit/expected.hpp"
#include "escapekit/scenarios.hpp"
#include "json.hpp"

namespace escapekit::planner {

using scenarios::ScenarioSpec;
using scenarios::SystemState;

inline constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct AugmentedState {
  SystemState z;
  double c = 0.0;  // cost-to-come, J
};

/// Wrench on the object held for duration_steps simulator steps.
struct ControlSample {
  double fx = 0.0;
  double fy = 0.0;
  double tau = 0.0;
  int duration_steps = 0;
};

struct TreeNode {
  AugmentedState aug;
  std::size_t parent = kNoParent;
  std::optional<ControlSample> incoming;  // duration is the executed prefix
  bool goal = false;                      // reached the goal set; never expanded
};

struct MetricWeights {
  double position = 1.0;
  double angle = 0.3;
  double velocity = 0.2;
  double angular_velocity = 0.05;
  double ee_position = 0.5;
};

struct PlannerConfig {
  MetricWeights weights;
  double est_radius = 0.05;
  double goal_bias = 0.05;
  int max_iterations = 1000;
  std::size_t max_nodes = 0;  // stop once the tree holds this many nodes (0: no limit)
  double cost_bound = kUnbounded;
  std::uint64_t rng_seed = 0;
  int rrt_candidates = 8;
  bool use_kinematic_bounds = true;
  bool stop_at_goal = true;  // return as soon as a goal node is inserted
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(const SystemState& root);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const TreeNode& operator[](std::size_t id) const { return nodes_[id]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t add(TreeNode node);

  /// Node ids from the root to `id`.
  std::vector<std::size_t> path_to(std::size_t id) const;

 private:
  std::vector<TreeNode> nodes_;
};

/// Escape region: the complement of the capture set of `z_init`. A default-constructed goal
/// is the empty set (the infinitely far goal used to grow cost fields).
struct GoalSet {
  const ScenarioSpec* spec = nullptr;
  SystemState z_init;

  bool enabled() const { return spec != nullptr; }
  bool contains(const SystemState& z) const;
};

struct Violation {
  enum class Kind { bounds, tunneling, cost_bound };
  Kind kind = Kind::bounds;
  std::string message;
};

struct Propagation {
  AugmentedState end;
  int steps = 0;              // executed steps (shorter than requested if the goal was hit)
  bool reached_goal = false;
};

using PropagateResult = Expected<Propagation, Violation>;

/// Simulates `u` from `from`, accumulating |external work| per step. Stops early on entering
/// `goal`. Fails if a state leaves the kinematic bounds (when `check_bounds`), the simulator
/// reports tunneling, or the cost reaches `cost_bound`.
PropagateResult propagate(const ScenarioSpec& spec, const AugmentedState& from, const ControlSample& u,
                          const GoalSet& goal = {}, double cost_bound = kUnbounded,
                          bool check_bounds = true);

double state_distance(const SystemState& a, const SystemState& b, const MetricWeights& w);

struct GrowResult {
  Tree tree;
  std::vector<std::size_t> goal_nodes;
  int iterations = 0;
};

GrowResult est_grow(const ScenarioSpec& spec, const SystemState& root, const PlannerConfig& config,
                    const GoalSet& goal = {});
GrowResult rrt_grow(const ScenarioSpec& spec, const SystemState& root, const PlannerConfig& config,
                    const GoalSet& goal = {});
/// Continue growing a cached tree (e.g. after pruning).
GrowResult est_grow(const ScenarioSpec& spec, Tree tree, const PlannerConfig& config,
                    const GoalSet& goal = {});
GrowResult rrt_grow(const ScenarioSpec& spec, Tree tree, const PlannerConfig& config,
                    const GoalSet& goal = {});

/// Drops nodes with c >= c_bound and all their descendants; the root always survives. Ids
/// are compacted preserving order.
Tree prune(const Tree& tree, double c_bound);

nlohmann::json tree_to_json(const Tree& tree);
nlohmann::json state_to_json(const SystemState& z);
SystemState state_from_json(const nlohmann::json& j);

}  // namespace escapekit::planner
