#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "escapekit/planner.hpp"
#include "escapekit/scenarios.hpp"
#include "escapekit/world.hpp"

namespace escapekit::metrics {

using planner::PlannerConfig;
using scenarios::ScenarioSpec;
using scenarios::SystemState;

inline constexpr double kInfiniteEffort = std::numeric_limits<double>::infinity();

enum class Subroutine { est, rrt };

struct FieldSample {
  SystemState z;
  double c = 0.0;
};

struct EnergyCostField {
  std::vector<FieldSample> samples;  // samples[0] is the root at cost 0
  SystemState root;
};

struct EscapePath {
  std::vector<planner::TreeNode> nodes;  // root first; parent ids index into this vector
  double cost = 0.0;
};

struct EscapeResult {
  double effort = kInfiniteEffort;
  std::optional<EscapePath> path;
  std::vector<double> bound_history;
  int iterations_used = 0;

  bool infinite() const { return effort == kInfiniteEffort; }
};

struct EscapeOptions {
  Subroutine subroutine = Subroutine::rrt;
  int rounds = 10;
  int per_iteration_budget = 2000;
  double delta = 0.01;
  std::uint64_t seed = 0;
  PlannerConfig planner;  // iteration, bound and seed fields are overwritten per round
};

struct CaptureScores {
  double omega_cap = 0.0;
  double omega_suc = 0.0;
};

struct ForceWeights {
  double engage = 0.1;
  double stick = 1.0;
  double dist = 1.0;
};

struct ForceScoreInput {
  std::vector<dynamics::ContactPoint> contacts;  // object to end-effector pairs only
  double mu = 0.0;
  double min_distance = 0.0;
};

EscapeResult effort_of_escape(const ScenarioSpec& spec, const SystemState& z_init, const EscapeOptions& options);
EscapeResult effort_of_escape(const ScenarioSpec& spec, const SystemState& z_init, Subroutine subroutine,
                              int n, int per_iteration_budget, std::uint64_t seed);

/// EST tree with no goal, no cost bound and no kinematic bounds, grown to M nodes (root included).
/// Stops early if 50 * M iterations pass without reaching M.
EnergyCostField energy_cost_field(const ScenarioSpec& spec, const SystemState& z_init, std::size_t M,
                                  std::uint64_t seed, const PlannerConfig& base = {});

std::vector<double> likelihoods(std::span<const double> costs, double lambda);
std::vector<double> likelihoods(const EnergyCostField& field, double lambda);

CaptureScores capture_scores(const ScenarioSpec& spec, const SystemState& z_init, const EnergyCostField& field,
                             double lambda);

double stick_score(double mu, double normal_force, double tangent_force);
double force_score(const ForceScoreInput& input, const ForceWeights& weights = {}, double d0 = 0.05);

/// Weighted mean of the first k_bar scores with weights k / sum(1..k_bar).
double trajectory_success_score(std::span<const double> per_frame_scores, int k_bar);

}  // namespace escapekit::metrics
