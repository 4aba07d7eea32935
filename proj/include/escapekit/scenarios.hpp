#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "escapekit/world.hpp"
#include "json.hpp"

namespace escapekit::scenarios {

inline constexpr std::size_t kNone = static_cast<std::size_t>(-1);

/// Object and end-effector state packaged for planning. For spring end-effectors the spring
/// anchor (the commanded base) is part of the state as well.
struct SystemState {
  Pose2 object_pose;
  Twist2 object_twist;
  Pose2 ee_pose;
  Twist2 ee_twist;
  Vec2 ee_anchor;
  Vec2 ee_anchor_velocity;
  double time = 0.0;

  bool finite() const;
};

struct ControlBounds {
  double f_max = 5.0;
  double tau_max = 0.5;
  int min_steps = 12;
  int max_steps = 60;
};

enum class CaptureKind { swept_sector, support_region, pivot_slip_bound, height_below };

struct CaptureSetSpec {
  CaptureKind kind = CaptureKind::swept_sector;
  // swept_sector
  double horizon = 1.0;     // s
  double margin = 0.0;      // m, added to the end-effector footprint radius
  double ee_radius = 0.0;   // m, footprint radius
  // support_region: object CoM must project inside the support, inset by `shrink`
  double shrink = 0.01;
  double support_half_length = 0.0;
  double support_half_thickness = 0.0;
  double object_half_size = 0.0;
  // pivot_slip_bound
  double slip_threshold = 0.1;  // m/s
  // height_below
  double max_height = 0.0;
};

enum class SuccessKind { region_goal, orientation_goal };

struct SuccessSetSpec {
  SuccessKind kind = SuccessKind::region_goal;
  std::vector<Vec2> goal_polygon;  // convex, CCW
  // Optional alignment for region goals: an object-frame axis must match a world direction
  // modulo pi.
  bool check_alignment = false;
  double object_axis = 0.0;
  double world_direction = 0.0;
  double alignment_tolerance = 0.1;
  // orientation_goal
  double goal_angle = 0.0;
  double angle_tolerance = 0.05;
};

/// Axis-aligned box on the object state; infinite extents mean unbounded.
struct KinematicBounds {
  double x_min = -std::numeric_limits<double>::infinity();
  double x_max = std::numeric_limits<double>::infinity();
  double y_min = -std::numeric_limits<double>::infinity();
  double y_max = std::numeric_limits<double>::infinity();
  double v_max = std::numeric_limits<double>::infinity();
  double omega_max = std::numeric_limits<double>::infinity();

  bool contains(const SystemState& z) const;
  bool bounded() const;
};

enum class EePolicy { constant_velocity, spring_dynamics, none };

/// Commanded end-effector motion: a world-frame twist held as a constant body twist for a
/// kinematic end-effector, or the spring-anchor velocity for a compliant one.
struct EeCommand {
  Twist2 twist;
  Vec2 anchor_velocity;
  bool finished = false;  // the scripted run ends here
};

/// Seeded parameters of the data-generation controller.
struct ScriptParams {
  double speed = 0.1;
  double heading = 0.0;
  double steer_amplitude = 0.0;
  double steer_frequency = 0.0;
  double steer_phase = 0.0;
  double travel = 0.0;      // distance after which the end-effector stops
  double stop_x = 0.0;      // pushing: pusher x beyond which it stops
  double slow_x = 0.0;      // pushing: object x beyond which the pusher slows down
  double slow_speed = 0.0;
  double accel = 0.0;         // balance: speed ramp, m/s^2
  double heading_noise = 0.0; // per-tick heading jitter, rad
  int horizon_steps = 0;    // commands are zero past the horizon
  int control_period = 12;  // steps between command updates
};

struct ScenarioSpec {
  std::string name;
  dynamics::World world;
  std::size_t object = kNone;
  std::size_t ee = kNone;
  std::size_t ee_spring = kNone;
  ControlBounds control_bounds;
  CaptureSetSpec capture;
  SuccessSetSpec success;
  KinematicBounds kinematic_bounds;
  EePolicy ee_policy = EePolicy::none;
  double datum_height = 0.0;
  double dt = 1.0 / 240.0;
  double mu = 0.0;            // object friction coefficient
  double ee_mu = 0.0;         // end-effector friction coefficient
  SystemState initial;        // scripted initial state
  ScriptParams script;
  nlohmann::json config;      // fully resolved construction parameters
};

/// Scenario names accepted by make_scenario.
const std::vector<std::string>& scenario_names();

/// Builds a scenario from a (possibly partial) config; missing keys take defaults and the
/// resolved values are stored in ScenarioSpec::config. Throws std::invalid_argument.
ScenarioSpec make_scenario(const std::string& name, const nlohmann::json& config = {});
ScenarioSpec make_pushing_scenario(const nlohmann::json& config = {});
ScenarioSpec make_balance_scenario(const nlohmann::json& config = {});
ScenarioSpec make_toppling_scenario(const nlohmann::json& config = {});
/// Frictionless disk resting in a U-shaped channel; escaping means lifting it over the rim.
ScenarioSpec make_well_scenario(const nlohmann::json& config = {});

/// Per-trajectory randomization (initial offsets, friction, controller noise) applied on top
/// of `base`. Deterministic in `seed`.
nlohmann::json randomize_config(const std::string& name, const nlohmann::json& base,
                                std::uint64_t seed);

/// Same scenario with a different object friction coefficient.
ScenarioSpec with_object_friction(const ScenarioSpec& spec, double mu);

bool capture_contains(const ScenarioSpec& spec, const SystemState& z_init, const SystemState& z);
bool success_contains(const ScenarioSpec& spec, const SystemState& z);

/// Command of the scripted data-generation controller at control tick `k`.
EeCommand scripted_control(const ScenarioSpec& spec, const SystemState& z, int k,
                           std::uint64_t seed);

/// Advances only the end-effector by `dt` under the planning policy (object ignored).
SystemState propagate_ee(const ScenarioSpec& spec, const SystemState& z, double dt);

/// Lowest corner of the object polygon (the pivot for toppling).
Vec2 pivot_point(const ScenarioSpec& spec, const Pose2& object_pose);

dynamics::WorldState to_world_state(const ScenarioSpec& spec, const SystemState& z);
SystemState from_world_state(const ScenarioSpec& spec, const dynamics::WorldState& ws,
                             const Twist2& ee_twist);

/// Steps the scenario world while keeping the end-effector on its policy.
class Rollout {
 public:
  Rollout(const ScenarioSpec& spec, const SystemState& z);

  /// Replaces the end-effector command (scripted control).
  void command(const EeCommand& cmd);
  bool step(const dynamics::Wrench& object_wrench, dynamics::SimError& error);

  SystemState state() const;
  const dynamics::WorldState& world_state() const { return ws_; }
  const dynamics::StepReport& report() const { return report_; }
  double energy() const;

 private:
  const ScenarioSpec* spec_;
  dynamics::WorldState ws_;
  dynamics::StepReport report_;
  Twist2 ee_twist_;  // instantaneous world twist of a kinematic end-effector
  std::vector<dynamics::Wrench> controls_;
};

}  // namespace escapekit::scenarios
