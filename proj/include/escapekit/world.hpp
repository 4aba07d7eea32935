#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "escapekit/expected.hpp"
#include "escapekit/geometry.hpp"

namespace escapekit::dynamics {

enum class MotionKind { dynamic, kinematic, fixed };

struct BodyDef {
  std::string name;
  Shape shape = Circle{0.1};
  double mass = 1.0;
  double inertia = 0.0;  // 0 means "derive from shape and mass"
  MotionKind motion = MotionKind::dynamic;
  double friction_mu = 0.5;
  double restitution = 0.0;
  Pose2 pose;
  // Coulomb friction against a virtual floor (top-down scenes only).
  double ground_mu = 0.0;
};

/// Zero rest-length spring from a moving anchor point to a body's CoM.
struct SpringJointDef {
  std::size_t body_index = 0;
  Vec2 anchor_world;
  double stiffness = 0.0;
  double damping = 0.0;
  double rest_length = 0.0;
};

struct WorldOptions {
  int velocity_iterations = 10;
  int max_extra_iterations = 40;
  double restitution_threshold = 0.1;  // m/s
  double contact_margin = 1e-3;        // m, added to the speed-based margin
  double tunneling_fraction = 0.1;
  double overlap_slop = 1e-3;       // m of overlap tolerated before bodies are pushed apart
  double overlap_correction = 0.2;  // fraction of the excess overlap removed per step
  // Normal acceleration pressing bodies onto the virtual floor (top-down scenes).
  double ground_normal_accel = 0.0;
};

struct Body {
  BodyDef def;
  double inv_mass = 0.0;
  double inv_inertia = 0.0;
  double extent = 0.0;  // min width of the shape
  double radius = 0.0;  // bounding radius about the CoM
};

struct WorldState {
  std::vector<Pose2> poses;
  std::vector<Twist2> twists;
  std::vector<Vec2> anchors;            // one per spring
  std::vector<Vec2> anchor_velocities;  // one per spring, held constant within a step
  double time = 0.0;
};

class World {
 public:
  World() = default;
  World(std::vector<Body> bodies, std::vector<SpringJointDef> springs, Vec2 gravity,
        WorldOptions options);

  const std::vector<Body>& bodies() const { return bodies_; }
  const std::vector<SpringJointDef>& springs() const { return springs_; }
  Vec2 gravity() const { return gravity_; }
  const WorldOptions& options() const { return options_; }
  std::size_t body_count() const { return bodies_.size(); }
  bool is_dynamic(std::size_t i) const { return bodies_[i].def.motion == MotionKind::dynamic; }
  /// Index of the body named `name`, or body_count() when absent.
  std::size_t find(const std::string& name) const;

  WorldState initial_state() const;

 private:
  std::vector<Body> bodies_;
  std::vector<SpringJointDef> springs_;
  Vec2 gravity_;
  WorldOptions options_;
};

/// Validates definitions and returns an immutable world.
/// Throws std::invalid_argument for degenerate shapes or bad parameters.
World build_world(std::vector<BodyDef> bodies, std::vector<SpringJointDef> springs, Vec2 gravity,
                  WorldOptions options = {});

struct Wrench {
  double fx = 0.0;
  double fy = 0.0;
  double tau = 0.0;
};

struct ContactPoint {
  Vec2 point;
  Vec2 normal;  // from body_a into body_b
  double normal_force = 0.0;
  double tangent_force = 0.0;
  double slip_speed = 0.0;
  std::size_t body_a = 0;
  std::size_t body_b = 0;
};

struct StepReport {
  std::vector<ContactPoint> contacts;
  double w_noncons = 0.0;
  double w_control = 0.0;
  // Potential-energy change caused by overlap correction (not work of any force).
  double w_correction = 0.0;
  double dt = 0.0;

  /// Number of distinct body pairs in contact.
  std::size_t contact_pairs() const;
};

struct SimError {
  enum class Code { tunneling, bad_input };
  Code code = Code::bad_input;
  std::string message;
};

using StepResult = Expected<std::pair<WorldState, StepReport>, SimError>;

/// Advances one fixed step. `controls` is empty or has one wrench per body;
/// wrenches on non-dynamic bodies are ignored.
StepResult step(const World& world, const WorldState& state, std::span<const Wrench> controls,
                double dt);

/// In-place variant used by rollouts; `state` is left untouched on error.
/// Returns false and fills `error` on failure.
bool step_in_place(const World& world, WorldState& state, std::span<const Wrench> controls,
                   double dt, StepReport& report, SimError& error);

double min_body_distance(const World& world, const WorldState& state, std::size_t body_a,
                         std::size_t body_b);

}  // namespace escapekit::dynamics
