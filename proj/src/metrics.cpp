#include "escapekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "escapekit/rng.hpp"

namespace escapekit::metrics {

namespace {

planner::GrowResult grow(Subroutine sub, const ScenarioSpec& spec, planner::Tree tree,
                         const PlannerConfig& cfg, const planner::GoalSet& goal) {
  return sub == Subroutine::est ? planner::est_grow(spec, std::move(tree), cfg, goal)
                                : planner::rrt_grow(spec, std::move(tree), cfg, goal);
}

std::optional<std::size_t> cheapest_goal(const planner::GrowResult& g) {
  std::optional<std::size_t> best;
  for (std::size_t id : g.goal_nodes)
    if (!best || g.tree[id].aug.c < g.tree[*best].aug.c) best = id;
  return best;
}

EscapePath extract_path(const planner::Tree& tree, std::size_t id) {
  EscapePath p;
  const auto ids = tree.path_to(id);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    planner::TreeNode n = tree[ids[i]];
    n.parent = i == 0 ? planner::kNoParent : i - 1;
    p.nodes.push_back(std::move(n));
  }
  p.cost = tree[id].aug.c;
  return p;
}

}  // namespace

EscapeResult effort_of_escape(const ScenarioSpec& spec, const SystemState& z_init, const EscapeOptions& opt) {
  EscapeResult res;
  if (!scenarios::capture_contains(spec, z_init, z_init)) {
    res.effort = 0.0;
    return res;
  }
  const planner::GoalSet goal{&spec, z_init};
  PlannerConfig cfg = opt.planner;
  cfg.max_iterations = opt.per_iteration_budget;
  cfg.stop_at_goal = true;

  cfg.cost_bound = planner::kUnbounded;
  cfg.rng_seed = derive_seed(opt.seed, 0);
  planner::GrowResult g = grow(opt.subroutine, spec, planner::Tree(z_init), cfg, goal);
  res.iterations_used += g.iterations;
  auto found = cheapest_goal(g);
  if (!found) return res;

  double c = g.tree[*found].aug.c;
  res.path = extract_path(g.tree, *found);
  res.bound_history.push_back(c);
  planner::Tree tree = std::move(g.tree);

  for (int i = 1; i <= opt.rounds; ++i) {
    const double bound = (1.0 - opt.delta) * c;
    cfg.cost_bound = bound;
    cfg.rng_seed = derive_seed(opt.seed, static_cast<std::uint64_t>(i));
    g = grow(opt.subroutine, spec, planner::prune(tree, bound), cfg, goal);
    res.iterations_used += g.iterations;
    found = cheapest_goal(g);
    if (found && g.tree[*found].aug.c < bound) {
      c = g.tree[*found].aug.c;
      res.path = extract_path(g.tree, *found);
      res.bound_history.push_back(c);
    }
    tree = std::move(g.tree);
  }
  res.effort = c;
  return res;
}

EscapeResult effort_of_escape(const ScenarioSpec& spec, const SystemState& z_init, Subroutine subroutine,
                              int n, int per_iteration_budget, std::uint64_t seed) {
  EscapeOptions opt;
  opt.subroutine = subroutine;
  opt.rounds = n;
  opt.per_iteration_budget = per_iteration_budget;
  opt.seed = seed;
  return effort_of_escape(spec, z_init, opt);
}

EnergyCostField energy_cost_field(const ScenarioSpec& spec, const SystemState& z_init, std::size_t M,
                                  std::uint64_t seed, const PlannerConfig& base) {
  if (M < 1) throw std::invalid_argument("energy_cost_field: M must be at least 1");
  PlannerConfig cfg = base;
  cfg.max_nodes = M;
  cfg.max_iterations = static_cast<int>(std::min<std::size_t>(50 * M, 1u << 30));
  cfg.cost_bound = planner::kUnbounded;
  cfg.use_kinematic_bounds = false;
  cfg.rng_seed = seed;
  const auto g = planner::est_grow(spec, z_init, cfg);
  EnergyCostField f;
  f.root = z_init;
  f.samples.reserve(g.tree.size());
  for (const auto& n : g.tree.nodes()) f.samples.push_back({n.aug.z, n.aug.c});
  return f;
}

std::vector<double> likelihoods(std::span<const double> costs, double lambda) {
  std::vector<double> out(costs.size(), 0.0);
  if (costs.empty()) return out;
  const double c_min = *std::min_element(costs.begin(), costs.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    out[i] = std::exp(-lambda * (costs[i] - c_min));
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> likelihoods(const EnergyCostField& field, double lambda) {
  std::vector<double> costs;
  costs.reserve(field.samples.size());
  for (const auto& s : field.samples) costs.push_back(s.c);
  return likelihoods(costs, lambda);
}

CaptureScores capture_scores(const ScenarioSpec& spec, const SystemState& z_init, const EnergyCostField& field,
                             double lambda) {
  const auto L = likelihoods(field, lambda);
  CaptureScores s;
  for (std::size_t m = 0; m < L.size(); ++m) {
    const SystemState& z = field.samples[m].z;
    if (scenarios::capture_contains(spec, z_init, z)) s.omega_cap += L[m];
    if (scenarios::success_contains(spec, z)) s.omega_suc += L[m];
  }
  s.omega_cap = std::clamp(s.omega_cap, 0.0, 1.0);
  s.omega_suc = std::clamp(s.omega_suc, 0.0, 1.0);
  return s;
}

double stick_score(double mu, double normal_force, double tangent_force) {
  return (mu * normal_force - std::abs(tangent_force)) * std::cos(std::atan(mu));
}

double force_score(const ForceScoreInput& in, const ForceWeights& w, double d0) {
  if (!(d0 > 0.0)) throw std::invalid_argument("force_score: d0 must be positive");
  double engage = 0.0;
  double stick = 0.0;
  bool first = true;
  for (const auto& c : in.contacts) {
    const double s = stick_score(in.mu, c.normal_force, c.tangent_force);
    engage = first ? c.normal_force : std::max(engage, c.normal_force);
    stick = first ? s : std::max(stick, s);
    first = false;
  }
  return w.engage * engage + w.stick * stick + w.dist * std::exp(-in.min_distance / d0);
}

double trajectory_success_score(std::span<const double> scores, int k_bar) {
  if (k_bar <= 0) throw std::invalid_argument("trajectory_success_score: k_bar must be positive");
  if (static_cast<std::size_t>(k_bar) > scores.size())
    throw std::invalid_argument("trajectory_success_score: k_bar exceeds the number of frames");
  const double norm = 0.5 * k_bar * (k_bar + 1);
  double s = 0.0;
  for (int k = 1; k <= k_bar; ++k) s += k * scores[k - 1];
  return s / norm;
}

}  // namespace escapekit::metrics
