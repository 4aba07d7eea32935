#include "escapekit/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "escapekit/energy.hpp"
#include "escapekit/rng.hpp"

namespace escapekit::scenarios {

using dynamics::BodyDef;
using dynamics::MotionKind;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kG = 9.81;

json resolve(json defaults, const json& overrides) {
  if (overrides.is_object()) defaults.merge_patch(overrides);
  else if (!overrides.is_null()) throw std::invalid_argument("scenario config must be an object");
  return defaults;
}

double num(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw std::invalid_argument(std::string("config key '") + key + "' must be a number");
  return it->get<double>();
}

Shape parse_shape(const json& j) {
  const std::string kind = j.value("shape", std::string("box"));
  if (kind == "circle") {
    const double r = num(j, "radius");
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("degenerate shape: circle radius");
    return Circle{r};
  }
  if (kind == "box") {
    const auto& he = j.at("half_extents");
    return make_box(he.at(0).get<double>(), he.at(1).get<double>());
  }
  if (kind == "polygon") {
    std::vector<Vec2> verts;
    for (const auto& v : j.at("vertices")) verts.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    return make_polygon(std::move(verts));
  }
  throw std::invalid_argument("unknown shape kind '" + kind + "'");
}

// Direction (body frame) of the longest polygon edge; 0 for circles.
double long_axis(const Shape& shape) {
  const auto* poly = std::get_if<ConvexPolygon>(&shape);
  if (!poly) return 0.0;
  double best = -1.0, angle = 0.0;
  const auto& v = poly->vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e = v[(i + 1) % v.size()] - v[i];
    const double len = length(e);
    if (len > best + 1e-12) {
      best = len;
      angle = std::atan2(e.y, e.x);
    }
  }
  return angle;
}

std::vector<Vec2> rect(Vec2 lo, Vec2 hi) { return {lo, {hi.x, lo.y}, hi, {lo.x, hi.y}}; }

bool in_convex(const std::vector<Vec2>& poly, Vec2 p) {
  if (poly.size() < 3) return false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % poly.size()];
    if (cross(b - a, p - a) < 0.0) return false;
  }
  return true;
}

// Pose reached after moving for time t with a constant body twist whose world velocity at
// the reference point is v at t = 0.
Pose2 arc_pose(const Pose2& pose, Vec2 v, double omega, double t) {
  Vec2 p = pose.position();
  if (std::abs(omega * t) < 1e-12) {
    p += t * v;
  } else {
    const Vec2 icr = p + perp(v) / omega;
    p = icr + rotate(p - icr, omega * t);
  }
  return {p.x, p.y, wrap_angle(pose.theta + omega * t)};
}

ControlBounds parse_bounds(const json& j) {
  ControlBounds b;
  b.f_max = num(j, "f_max");
  b.tau_max = num(j, "tau_max");
  b.min_steps = j.at("min_steps").get<int>();
  b.max_steps = j.at("max_steps").get<int>();
  if (!(b.f_max > 0.0) || !(b.tau_max >= 0.0) || b.min_steps < 1 || b.max_steps < b.min_steps)
    throw std::invalid_argument("invalid control bounds");
  return b;
}

KinematicBounds parse_kinematic(const json& j) {
  KinematicBounds k;
  const auto get = [&](const char* key, double def) {
    const auto it = j.find(key);
    return it == j.end() || it->is_null() ? def : it->get<double>();
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  k.x_min = get("x_min", -inf);
  k.x_max = get("x_max", inf);
  k.y_min = get("y_min", -inf);
  k.y_max = get("y_max", inf);
  k.v_max = get("v_max", inf);
  k.omega_max = get("omega_max", inf);
  return k;
}

void check_initial(const ScenarioSpec& spec) {
  if (!capture_contains(spec, spec.initial, spec.initial))
    throw std::invalid_argument(spec.name + ": initially uncaptured");
}

const json& common_defaults() {
  static const json j = {{"dt", 1.0 / 240.0}, {"control_period", 12}};
  return j;
}

}  // namespace

bool SystemState::finite() const {
  const auto ok = [](const Pose2& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.theta);
  };
  return ok(object_pose) && ok(ee_pose) && object_twist.finite() && ee_twist.finite() &&
         std::isfinite(ee_anchor.x) && std::isfinite(ee_anchor.y) &&
         std::isfinite(ee_anchor_velocity.x) && std::isfinite(ee_anchor_velocity.y) &&
         std::isfinite(time);
}

bool KinematicBounds::contains(const SystemState& z) const {
  const Pose2& p = z.object_pose;
  return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max &&
         length(z.object_twist.linear()) <= v_max && std::abs(z.object_twist.omega) <= omega_max;
}

bool KinematicBounds::bounded() const {
  return std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) && std::isfinite(y_max);
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"pushing", "balance", "toppling", "well"};
  return names;
}

ScenarioSpec make_scenario(const std::string& name, const json& config) {
  if (name == "pushing") return make_pushing_scenario(config);
  if (name == "balance") return make_balance_scenario(config);
  if (name == "toppling") return make_toppling_scenario(config);
  if (name == "well") return make_well_scenario(config);
  std::string msg = "unknown scenario '" + name + "'; valid names:";
  for (const auto& n : scenario_names()) msg += " " + n;
  throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------------------------
// Pushing: top-down, object pushed toward a wall by a kinematic pusher.

ScenarioSpec make_pushing_scenario(const json& config) {
  json d = common_defaults();
  d.update({
      {"object", {{"shape", "box"}, {"half_extents", {0.03, 0.06}}, {"mass", 0.2}}},
      {"ee", {{"shape", "circle"}, {"radius", 0.015}}},
      {"mu", 0.5},
      {"ee_mu", 0.5},
      {"wall_mu", 0.3},
      {"wall_x", 0.35},
      {"wall_half_length", 0.4},
      {"object_x", 0.0},
      {"object_y", 0.0},
      {"object_theta", 0.0},
      {"pusher_offset", 0.0},
      {"pusher_gap", 0.005},
      {"speed", 0.1},
      {"steer_amplitude", 0.0},
      {"steer_frequency", 0.3},
      {"steer_phase", 0.0},
      {"heading_noise", 0.0},
      {"slow_speed", 0.03},
      {"t_max", 6.0},
      {"horizon", 1.0},
      {"margin", nullptr},
      {"success_scale", 1.2},
      {"alignment_tolerance", 0.1},
      {"control_bounds", {{"f_max", 1.0}, {"tau_max", 0.05}, {"min_steps", 12}, {"max_steps", 60}}},
      {"kinematic_bounds", json::object()},
  });
  json c = resolve(d, config);

  const Shape obj_shape = parse_shape(c.at("object"));
  const Shape ee_shape = parse_shape(c.at("ee"));
  const double mu = num(c, "mu");
  const double ee_mu = num(c, "ee_mu");
  const double wall_x = num(c, "wall_x");
  const double wall_half = num(c, "wall_half_length");
  const double ee_r = bounding_radius(ee_shape);
  const double obj_half = 0.5 * min_extent(obj_shape);
  const double obj_r = bounding_radius(obj_shape);
  const Pose2 obj_pose{num(c, "object_x"), num(c, "object_y"), wrap_angle(num(c, "object_theta"))};
  if (!c.contains("margin") || c["margin"].is_null()) c["margin"] = 1.5 * ee_r;

  // Pusher sits behind the object along -x, offset laterally.
  const double back = std::max(obj_half, 0.0);
  const Pose2 ee_pose{obj_pose.x - back - ee_r - num(c, "pusher_gap"),
                      obj_pose.y + num(c, "pusher_offset"), 0.0};

  std::vector<BodyDef> bodies(3);
  bodies[0] = {.name = "object", .shape = obj_shape, .mass = num(c.at("object"), "mass"),
               .motion = MotionKind::dynamic, .friction_mu = mu, .pose = obj_pose, .ground_mu = mu};
  bodies[1] = {.name = "pusher", .shape = ee_shape, .mass = 0.0, .motion = MotionKind::kinematic,
               .friction_mu = ee_mu, .pose = ee_pose};
  const double wall_t = 0.01;
  bodies[2] = {.name = "wall", .shape = make_box(wall_t, wall_half), .mass = 0.0,
               .motion = MotionKind::fixed, .friction_mu = num(c, "wall_mu"),
               .pose = {wall_x + wall_t, 0.0, 0.0}};
  if (wall_x - obj_pose.x < obj_r)
    throw std::invalid_argument("pushing: object overlaps the wall");
  dynamics::WorldOptions opts;
  opts.ground_normal_accel = kG;

  ScenarioSpec s;
  s.name = "pushing";
  s.world = dynamics::build_world(std::move(bodies), {}, {0.0, 0.0}, opts);
  s.object = 0;
  s.ee = 1;
  s.dt = num(c, "dt");
  s.mu = mu;
  s.ee_mu = ee_mu;
  s.ee_policy = EePolicy::constant_velocity;
  s.control_bounds = parse_bounds(c.at("control_bounds"));

  s.capture.kind = CaptureKind::swept_sector;
  s.capture.horizon = num(c, "horizon");
  s.capture.margin = num(c, "margin");
  s.capture.ee_radius = ee_r;

  s.success.kind = SuccessKind::region_goal;
  s.success.goal_polygon =
      rect({wall_x - num(c, "success_scale") * obj_half, -wall_half}, {wall_x, wall_half});
  s.success.check_alignment = true;
  s.success.object_axis = long_axis(obj_shape);
  s.success.world_direction = kPi / 2;
  s.success.alignment_tolerance = num(c, "alignment_tolerance");

  json kb = {{"x_min", obj_pose.x - 0.3}, {"x_max", wall_x + 0.05}, {"y_min", -wall_half},
             {"y_max", wall_half}, {"v_max", 2.0}, {"omega_max", 40.0}};
  kb.merge_patch(c.at("kinematic_bounds"));
  c["kinematic_bounds"] = kb;
  s.kinematic_bounds = parse_kinematic(kb);

  ScriptParams& sp = s.script;
  sp.speed = num(c, "speed");
  sp.steer_amplitude = num(c, "steer_amplitude");
  sp.steer_frequency = num(c, "steer_frequency");
  sp.steer_phase = num(c, "steer_phase");
  sp.heading_noise = num(c, "heading_noise");
  sp.slow_speed = num(c, "slow_speed");
  sp.slow_x = wall_x - obj_half - 0.01;
  sp.stop_x = wall_x - 2.0 * obj_half - ee_r - 0.002;
  sp.control_period = c.at("control_period").get<int>();
  sp.horizon_steps = static_cast<int>(std::lround(num(c, "t_max") / s.dt));

  s.initial.object_pose = obj_pose;
  s.initial.ee_pose = ee_pose;
  s.initial = from_world_state(s, to_world_state(s, s.initial), {});
  const EeCommand cmd0 = scripted_control(s, s.initial, 0, 0);
  s.initial.ee_twist = cmd0.twist;
  s.config = c;
  check_initial(s);
  return s;
}

// ---------------------------------------------------------------------------------------------
// Balance: side view, cube carried on a tilted kinematic support.

ScenarioSpec make_balance_scenario(const json& config) {
  json d = common_defaults();
  d.update({
      {"slope_deg", 35.0},
      {"cube_half", 0.03},
      {"cube_mass", 0.1},
      {"support_half_length", 0.06},
      {"support_half_thickness", 0.005},
      {"offset", 0.0},
      {"mu", 0.9},
      {"ee_mu", 0.9},
      {"speed", 0.15},
      {"accel", 0.5},
      {"travel", 0.2},
      {"t_max", 2.5},
      {"shrink", 0.01},
      {"goal_half_size", 0.03},
      {"control_bounds", {{"f_max", 1.0}, {"tau_max", 0.05}, {"min_steps", 12}, {"max_steps", 60}}},
      {"kinematic_bounds", json::object()},
  });
  json c = resolve(d, config);
  const double slope = num(c, "slope_deg") * kPi / 180.0;
  if (!(slope >= 0.0 && slope < kPi / 2)) throw std::invalid_argument("balance: slope must be in [0, 90) degrees");
  const double a = num(c, "cube_half");
  const double L = num(c, "support_half_length");
  const double T = num(c, "support_half_thickness");
  if (!(a > 0.0) || !(L > 0.0) || !(T > 0.0)) throw std::invalid_argument("degenerate shape: balance geometry");
  if (a >= L) throw std::invalid_argument("balance: object larger than support");
  const double mu = num(c, "mu");

  const Pose2 plate{0.0, 0.0, slope};
  const Vec2 cube_p = plate.transform({num(c, "offset"), T + a});
  std::vector<BodyDef> bodies(2);
  bodies[0] = {.name = "cube", .shape = make_box(a, a), .mass = num(c, "cube_mass"),
               .motion = MotionKind::dynamic, .friction_mu = mu, .pose = {cube_p.x, cube_p.y, slope}};
  bodies[1] = {.name = "support", .shape = make_box(L, T), .mass = 0.0,
               .motion = MotionKind::kinematic, .friction_mu = num(c, "ee_mu"), .pose = plate};

  ScenarioSpec s;
  s.name = "balance";
  s.world = dynamics::build_world(std::move(bodies), {}, {0.0, -kG});
  s.object = 0;
  s.ee = 1;
  s.dt = num(c, "dt");
  s.mu = mu;
  s.ee_mu = num(c, "ee_mu");
  s.ee_policy = EePolicy::constant_velocity;
  s.datum_height = -1.0;
  s.control_bounds = parse_bounds(c.at("control_bounds"));

  s.capture.kind = CaptureKind::support_region;
  s.capture.shrink = num(c, "shrink");
  s.capture.support_half_length = L;
  s.capture.support_half_thickness = T;
  s.capture.object_half_size = a;

  // Goal: where the cube ends up if it rides the support for the full travel.
  const Vec2 dir{std::cos(slope), std::sin(slope)};
  const Vec2 goal_c = cube_p + num(c, "travel") * dir;
  const double g = num(c, "goal_half_size");
  const Pose2 goal_frame{goal_c.x, goal_c.y, slope};
  s.success.kind = SuccessKind::region_goal;
  for (Vec2 v : rect({-g, -g}, {g, g})) s.success.goal_polygon.push_back(goal_frame.transform(v));

  json kb = {{"x_min", -1.0}, {"x_max", 1.0}, {"y_min", -1.0}, {"y_max", 1.0}, {"v_max", 3.0},
             {"omega_max", 60.0}};
  kb.merge_patch(c.at("kinematic_bounds"));
  c["kinematic_bounds"] = kb;
  s.kinematic_bounds = parse_kinematic(kb);

  ScriptParams& sp = s.script;
  sp.speed = num(c, "speed");
  sp.accel = num(c, "accel");
  sp.travel = num(c, "travel");
  sp.heading = slope;
  sp.control_period = c.at("control_period").get<int>();
  sp.horizon_steps = static_cast<int>(std::lround(num(c, "t_max") / s.dt));
  if (!(sp.speed > 0.0) || !(sp.accel > 0.0)) throw std::invalid_argument("balance: speed and accel must be positive");

  s.initial.object_pose = {cube_p.x, cube_p.y, slope};
  s.initial.ee_pose = plate;
  s.config = c;
  check_initial(s);
  return s;
}

// ---------------------------------------------------------------------------------------------
// Toppling: side view, box on a table pushed near its top by a spring-mounted fingertip.

ScenarioSpec make_toppling_scenario(const json& config) {
  json d = common_defaults();
  d.update({
      {"box_half_extents", {0.03, 0.05}},
      {"box_mass", 0.1},
      {"mu", 0.3},
      {"table_mu", nullptr},
      {"ee_mu", 0.3},
      {"tip_radius", 0.01},
      {"tip_mass", 0.02},
      {"stiffness", 200.0},
      {"damping", 1.0},
      {"push_height", 0.085},
      {"tip_gap", 0.01},
      {"speed", 0.2},
      {"travel", 0.2},
      {"t_max", 2.5},
      {"slip_threshold", 0.1},
      {"angle_tolerance", 0.05},
      {"control_bounds", {{"f_max", 1.0}, {"tau_max", 0.05}, {"min_steps", 12}, {"max_steps", 60}}},
      {"kinematic_bounds", json::object()},
  });
  json c = resolve(d, config);
  const auto& he = c.at("box_half_extents");
  const double hx = he.at(0).get<double>();
  const double hy = he.at(1).get<double>();
  const double r = num(c, "tip_radius");
  const double k = num(c, "stiffness");
  const double damping = num(c, "damping");
  if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("invalid stiffness: " + std::to_string(k));
  if (!(r > 0.0)) throw std::invalid_argument("degenerate shape: fingertip radius");
  const double h = num(c, "push_height");
  if (!(h > 0.0 && h < 2.0 * hy)) throw std::invalid_argument("toppling: push height outside the box");
  const double mu = num(c, "mu");
  // The table defaults to the box's coefficient so the pivot contact sees mu itself.
  if (!c.contains("table_mu") || c["table_mu"].is_null()) c["table_mu"] = mu;
  const double tip_m = num(c, "tip_mass");

  const Vec2 tip{hx + r + num(c, "tip_gap"), h};
  // Anchor raised by the static sag so the fingertip starts in equilibrium.
  const Vec2 anchor{tip.x, tip.y + tip_m * kG / k};

  std::vector<BodyDef> bodies(3);
  bodies[0] = {.name = "box", .shape = make_box(hx, hy), .mass = num(c, "box_mass"),
               .motion = MotionKind::dynamic, .friction_mu = mu, .pose = {0.0, hy, 0.0}};
  bodies[1] = {.name = "fingertip", .shape = Circle{r}, .mass = tip_m, .motion = MotionKind::dynamic,
               .friction_mu = num(c, "ee_mu"), .pose = {tip.x, tip.y, 0.0}};
  bodies[2] = {.name = "table", .shape = make_box(1.0, 0.05), .mass = 0.0, .motion = MotionKind::fixed,
               .friction_mu = num(c, "table_mu"), .pose = {0.0, -0.05, 0.0}};
  std::vector<dynamics::SpringJointDef> springs = {{.body_index = 1, .anchor_world = anchor,
                                                    .stiffness = k, .damping = damping}};

  ScenarioSpec s;
  s.name = "toppling";
  s.world = dynamics::build_world(std::move(bodies), std::move(springs), {0.0, -kG});
  s.object = 0;
  s.ee = 1;
  s.ee_spring = 0;
  s.dt = num(c, "dt");
  s.mu = mu;
  s.ee_mu = num(c, "ee_mu");
  s.ee_policy = EePolicy::spring_dynamics;
  s.datum_height = 0.0;
  s.control_bounds = parse_bounds(c.at("control_bounds"));

  s.capture.kind = CaptureKind::pivot_slip_bound;
  s.capture.slip_threshold = num(c, "slip_threshold");
  s.success.kind = SuccessKind::orientation_goal;
  s.success.goal_angle = kPi / 2;
  s.success.angle_tolerance = num(c, "angle_tolerance");

  json kb = {{"x_min", -0.5}, {"x_max", 0.5}, {"y_min", -0.01}, {"y_max", 0.5}, {"v_max", 3.0},
             {"omega_max", 60.0}};
  kb.merge_patch(c.at("kinematic_bounds"));
  c["kinematic_bounds"] = kb;
  s.kinematic_bounds = parse_kinematic(kb);

  ScriptParams& sp = s.script;
  sp.speed = num(c, "speed");
  sp.travel = num(c, "travel");
  sp.heading = kPi;
  sp.control_period = c.at("control_period").get<int>();
  sp.horizon_steps = static_cast<int>(std::lround(num(c, "t_max") / s.dt));

  s.initial.object_pose = {0.0, hy, 0.0};
  s.initial.ee_pose = {tip.x, tip.y, 0.0};
  s.initial.ee_anchor = anchor;
  s.config = c;
  check_initial(s);
  return s;
}

// ---------------------------------------------------------------------------------------------
// Well: frictionless disk in a U-shaped channel; no end-effector.

ScenarioSpec make_well_scenario(const json& config) {
  json d = common_defaults();
  d.update({
      {"radius", 0.05},
      {"mass", 1.0},
      {"depth", 0.1},
      {"half_width", 0.051},
      {"wall_thickness", 0.02},
      {"lid", false},
      {"control_bounds", {{"f_max", 12.0}, {"tau_max", 0.0}, {"min_steps", 12}, {"max_steps", 60}}},
      {"kinematic_bounds", json::object()},
  });
  json c = resolve(d, config);
  const double r = num(c, "radius");
  const double depth = num(c, "depth");
  const double w = num(c, "half_width");
  const double t = num(c, "wall_thickness");
  if (!(r > 0.0) || !(depth > 0.0) || !(t > 0.0)) throw std::invalid_argument("degenerate shape: well geometry");
  if (w < r) throw std::invalid_argument("well: channel narrower than the disk");
  const double rim = r + depth;  // CoM height at which the disk leaves the channel
  const double wall_top = rim;

  std::vector<BodyDef> bodies;
  bodies.push_back({.name = "disk", .shape = Circle{r}, .mass = num(c, "mass"),
                    .motion = MotionKind::dynamic, .friction_mu = 0.0, .pose = {0.0, r, 0.0}});
  bodies.push_back({.name = "floor", .shape = make_box(w + 2 * t, t), .mass = 0.0,
                    .motion = MotionKind::fixed, .friction_mu = 0.0, .pose = {0.0, -t, 0.0}});
  for (double side : {-1.0, 1.0})
    bodies.push_back({.name = side < 0 ? "wall_left" : "wall_right", .shape = make_box(t, 0.5 * wall_top),
                      .mass = 0.0, .motion = MotionKind::fixed, .friction_mu = 0.0,
                      .pose = {side * (w + t), 0.5 * wall_top, 0.0}});
  if (c.at("lid").get<bool>()) {
    // Lid low enough that the CoM can never reach the rim.
    const double lid_bottom = rim + r - 0.02;
    bodies.push_back({.name = "lid", .shape = make_box(w + 2 * t, t), .mass = 0.0,
                      .motion = MotionKind::fixed, .friction_mu = 0.0, .pose = {0.0, lid_bottom + t, 0.0}});
  }

  ScenarioSpec s;
  s.name = "well";
  s.world = dynamics::build_world(std::move(bodies), {}, {0.0, -kG});
  s.object = 0;
  s.dt = num(c, "dt");
  s.ee_policy = EePolicy::none;
  s.datum_height = 0.0;
  s.control_bounds = parse_bounds(c.at("control_bounds"));
  s.capture.kind = CaptureKind::height_below;
  s.capture.max_height = rim;
  s.success.kind = SuccessKind::region_goal;
  s.success.goal_polygon = rect({-1.0, rim}, {1.0, rim + 1.0});

  json kb = {{"x_min", -w - 0.2}, {"x_max", w + 0.2}, {"y_min", -0.05}, {"y_max", rim + 0.5},
             {"v_max", 10.0}, {"omega_max", 200.0}};
  kb.merge_patch(c.at("kinematic_bounds"));
  c["kinematic_bounds"] = kb;
  s.kinematic_bounds = parse_kinematic(kb);
  s.script.horizon_steps = 0;
  s.script.control_period = c.at("control_period").get<int>();

  s.initial.object_pose = {0.0, r, 0.0};
  s.config = c;
  check_initial(s);
  return s;
}

// ---------------------------------------------------------------------------------------------

namespace {

double range_draw(Rng& rng, const json& base, const char* key, double lo, double hi) {
  const auto it = base.find("ranges");
  if (it != base.end() && it->contains(key)) {
    const auto& r = it->at(key);
    lo = r.at(0).get<double>();
    hi = r.at(1).get<double>();
  }
  return rng.uniform(lo, hi);
}

}  // namespace

json randomize_config(const std::string& name, const json& base, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5ce7a510));
  json c = base.is_object() ? base : json::object();
  const auto draw = [&](const char* key, double lo, double hi) {
    c[key] = range_draw(rng, base, key, lo, hi);
  };
  if (name == "pushing") {
    draw("mu", 0.2, 0.9);
    draw("pusher_offset", -0.03, 0.03);
    draw("object_theta", -0.2, 0.2);
    draw("speed", 0.06, 0.14);
    draw("steer_amplitude", 0.0, 0.8);
    draw("steer_frequency", 0.1, 0.5);
    draw("steer_phase", 0.0, 2 * kPi);
    draw("wall_x", 0.25, 0.4);
  } else if (name == "balance") {
    draw("mu", 0.55, 1.1);
    draw("offset", -0.015, 0.015);
    draw("speed", 0.1, 0.3);
    draw("accel", 1.0, 8.0);
  } else if (name == "toppling") {
    draw("mu", 0.05, 0.6);
    draw("push_height", 0.075, 0.095);
    draw("speed", 0.15, 0.3);
  } else if (name == "well") {
    // Deterministic scene; nothing to randomize.
  } else {
    make_scenario(name, base);  // throws with the list of valid names
  }
  c.erase("ranges");
  return c;
}

ScenarioSpec with_object_friction(const ScenarioSpec& spec, double mu) {
  json c = spec.config;
  c["mu"] = mu;
  return make_scenario(spec.name, c);
}

Vec2 pivot_point(const ScenarioSpec& spec, const Pose2& object_pose) {
  const Shape& shape = spec.world.bodies()[spec.object].def.shape;
  if (const auto* poly = std::get_if<ConvexPolygon>(&shape)) {
    Vec2 best = object_pose.transform(poly->vertices[0]);
    for (Vec2 v : poly->vertices) {
      const Vec2 w = object_pose.transform(v);
      if (w.y < best.y) best = w;
    }
    return best;
  }
  const double rad = std::get<Circle>(shape).radius;
  return object_pose.position() - Vec2{0.0, rad};
}

bool capture_contains(const ScenarioSpec& spec, const SystemState& z_init, const SystemState& z) {
  const CaptureSetSpec& cap = spec.capture;
  const Vec2 c = z.object_pose.position();
  if (!std::isfinite(c.x) || !std::isfinite(c.y)) return false;
  switch (cap.kind) {
    case CaptureKind::swept_sector: {
      const double band = cap.ee_radius + cap.margin;
      const Vec2 p = z_init.ee_pose.position();
      const Vec2 v = z_init.ee_twist.linear();
      const double w = z_init.ee_twist.omega;
      const double s = cap.horizon;
      const Pose2 end = arc_pose(z_init.ee_pose, v, w, s);
      if (length(c - end.position()) <= band) return true;  // leading cap
      const double speed = length(v);
      if (std::abs(w) < 1e-9) {
        if (speed < 1e-12) return length(c - p) <= band;
        const Vec2 dir = v / speed;
        const double along = dot(c - p, dir);
        const double lateral = cross(dir, c - p);
        return along >= 0.0 && along <= speed * s && std::abs(lateral) <= band;
      }
      const Vec2 icr = p + perp(v) / w;
      const double rho0 = length(p - icr);
      const double rho = length(c - icr);
      if (std::abs(rho - rho0) > band) return false;
      const double span = std::abs(w) * s;
      if (span >= 2 * kPi) return true;
      if (rho0 < 1e-12) return length(c - p) <= band;
      const double a0 = std::atan2(p.y - icr.y, p.x - icr.x);
      const double a = std::atan2(c.y - icr.y, c.x - icr.x);
      double ahead = (w > 0 ? 1.0 : -1.0) * (a - a0);
      ahead = std::fmod(ahead, 2 * kPi);
      if (ahead < 0) ahead += 2 * kPi;
      return ahead <= span;
    }
    case CaptureKind::support_region: {
      const Vec2 local = z.ee_pose.inverse_transform(c);
      const double limit = cap.support_half_length - cap.shrink;
      const double height = local.y - cap.support_half_thickness;
      return std::abs(local.x) <= limit && height >= 0.0 &&
             height <= cap.object_half_size * std::numbers::sqrt2 + cap.shrink;
    }
    case CaptureKind::pivot_slip_bound: {
      const Vec2 pivot = pivot_point(spec, z.object_pose);
      const Vec2 vel = z.object_twist.point_velocity(pivot - c);
      return std::isfinite(vel.x) && std::abs(vel.x) <= cap.slip_threshold;
    }
    case CaptureKind::height_below:
      return c.y <= cap.max_height;
  }
  return false;
}

bool success_contains(const ScenarioSpec& spec, const SystemState& z) {
  const SuccessSetSpec& suc = spec.success;
  if (suc.kind == SuccessKind::orientation_goal)
    return std::abs(angle_diff(z.object_pose.theta, suc.goal_angle)) <= suc.angle_tolerance;
  if (!in_convex(suc.goal_polygon, z.object_pose.position())) return false;
  if (!suc.check_alignment) return true;
  // Axis directions are equivalent modulo pi.
  const double err = 0.5 * std::abs(wrap_angle(2.0 * (z.object_pose.theta + suc.object_axis - suc.world_direction)));
  return err <= suc.alignment_tolerance;
}

EeCommand scripted_control(const ScenarioSpec& spec, const SystemState& z, int k, std::uint64_t seed) {
  const ScriptParams& sp = spec.script;
  EeCommand cmd;
  if (k < 0 || static_cast<long>(k) * sp.control_period >= sp.horizon_steps) {
    cmd.finished = true;
    return cmd;
  }
  const double t = k * sp.control_period * spec.dt;
  if (spec.name == "pushing") {
    if (z.ee_pose.x >= sp.stop_x) {
      cmd.finished = true;
      return cmd;
    }
    if (z.object_pose.x >= sp.slow_x) {
      cmd.twist = {sp.slow_speed, 0.0, 0.0};
      return cmd;
    }
    // Swerve that starts straight: heading and turn rate are zero at t = 0.
    const double side = sp.steer_phase < kPi ? 1.0 : -1.0;
    const double phase = 2 * kPi * sp.steer_frequency * t;
    double heading = side * sp.steer_amplitude * (1.0 - std::cos(phase));
    if (sp.heading_noise > 0.0) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      heading += sp.heading_noise * rng.uniform(-1.0, 1.0);
    }
    const double omega = side * sp.steer_amplitude * 2 * kPi * sp.steer_frequency * std::sin(phase);
    cmd.twist = {sp.speed * std::cos(heading), sp.speed * std::sin(heading), omega};
    return cmd;
  }
  if (spec.name == "balance") {
    // Trapezoidal speed profile along the slope covering `travel`.
    const double t_acc = sp.speed / sp.accel;
    const double d_acc = 0.5 * sp.accel * t_acc * t_acc;
    double speed;
    if (2 * d_acc >= sp.travel) {
      const double tp = std::sqrt(sp.travel / sp.accel);
      speed = t < tp ? sp.accel * t : std::max(0.0, sp.accel * (2 * tp - t));
    } else {
      const double t_cruise = (sp.travel - 2 * d_acc) / sp.speed;
      if (t < t_acc) speed = sp.accel * t;
      else if (t < t_acc + t_cruise) speed = sp.speed;
      else speed = std::max(0.0, sp.speed - sp.accel * (t - t_acc - t_cruise));
    }
    cmd.twist = {speed * std::cos(sp.heading), speed * std::sin(sp.heading), 0.0};
    return cmd;
  }
  if (spec.name == "toppling") {
    const double moved = sp.speed * t;
    if (moved < sp.travel) cmd.anchor_velocity = {sp.speed * std::cos(sp.heading), sp.speed * std::sin(sp.heading)};
    return cmd;
  }
  cmd.finished = true;
  return cmd;
}

SystemState propagate_ee(const ScenarioSpec& spec, const SystemState& z, double dt) {
  SystemState out = z;
  out.time = z.time + dt;
  if (spec.ee_policy == EePolicy::constant_velocity) {
    const Vec2 v = z.ee_twist.linear();
    out.ee_pose = arc_pose(z.ee_pose, v, z.ee_twist.omega, dt);
    const Vec2 v1 = rotate(v, z.ee_twist.omega * dt);
    out.ee_twist = {v1.x, v1.y, z.ee_twist.omega};
  } else if (spec.ee_policy == EePolicy::spring_dynamics) {
    // Fingertip and spring alone, no other bodies.
    const auto& tip = spec.world.bodies()[spec.ee].def;
    dynamics::SpringJointDef sj = spec.world.springs()[spec.ee_spring];
    sj.body_index = 0;
    BodyDef b = tip;
    b.pose = z.ee_pose;
    const dynamics::World w = dynamics::build_world({b}, {sj}, spec.world.gravity());
    dynamics::WorldState ws = w.initial_state();
    ws.poses[0] = z.ee_pose;
    ws.twists[0] = z.ee_twist;
    ws.anchors[0] = z.ee_anchor;
    ws.anchor_velocities[0] = z.ee_anchor_velocity;
    const long n = std::max(0L, std::lround(dt / spec.dt));
    dynamics::StepReport rep;
    dynamics::SimError err;
    for (long i = 0; i < n; ++i)
      if (!dynamics::step_in_place(w, ws, {}, spec.dt, rep, err)) break;
    out.ee_pose = ws.poses[0];
    out.ee_twist = ws.twists[0];
    out.ee_anchor = ws.anchors[0];
  }
  return out;
}

dynamics::WorldState to_world_state(const ScenarioSpec& spec, const SystemState& z) {
  dynamics::WorldState ws = spec.world.initial_state();
  ws.poses[spec.object] = z.object_pose;
  ws.twists[spec.object] = z.object_twist;
  if (spec.ee != kNone) {
    ws.poses[spec.ee] = z.ee_pose;
    ws.twists[spec.ee] = z.ee_twist;
  }
  if (spec.ee_spring != kNone) {
    ws.anchors[spec.ee_spring] = z.ee_anchor;
    ws.anchor_velocities[spec.ee_spring] = z.ee_anchor_velocity;
  }
  ws.time = z.time;
  return ws;
}

SystemState from_world_state(const ScenarioSpec& spec, const dynamics::WorldState& ws,
                             const Twist2& ee_twist) {
  SystemState z;
  z.object_pose = ws.poses[spec.object];
  z.object_twist = ws.twists[spec.object];
  if (spec.ee != kNone) {
    z.ee_pose = ws.poses[spec.ee];
    z.ee_twist = spec.world.is_dynamic(spec.ee) ? ws.twists[spec.ee] : ee_twist;
  }
  if (spec.ee_spring != kNone) {
    z.ee_anchor = ws.anchors[spec.ee_spring];
    z.ee_anchor_velocity = ws.anchor_velocities[spec.ee_spring];
  }
  z.time = ws.time;
  return z;
}

Rollout::Rollout(const ScenarioSpec& spec, const SystemState& z)
    : spec_(&spec), ws_(to_world_state(spec, z)), ee_twist_(z.ee_twist),
      controls_(spec.world.body_count()) {}

void Rollout::command(const EeCommand& cmd) {
  if (spec_->ee == kNone) return;
  if (spec_->world.is_dynamic(spec_->ee)) {
    if (spec_->ee_spring != kNone) ws_.anchor_velocities[spec_->ee_spring] = cmd.anchor_velocity;
  } else {
    ee_twist_ = cmd.twist;
  }
}

bool Rollout::step(const dynamics::Wrench& object_wrench, dynamics::SimError& error) {
  const double h = spec_->dt;
  const std::size_t ee = spec_->ee;
  const bool kinematic_ee = ee != kNone && !spec_->world.is_dynamic(ee);
  if (kinematic_ee) {
    // Chord velocity so the straight-line kinematic update lands exactly on the arc.
    const Pose2& p = ws_.poses[ee];
    const Pose2 next = arc_pose(p, ee_twist_.linear(), ee_twist_.omega, h);
    ws_.twists[ee] = {(next.x - p.x) / h, (next.y - p.y) / h, ee_twist_.omega};
  }
  controls_[spec_->object] = object_wrench;
  if (!dynamics::step_in_place(spec_->world, ws_, controls_, h, report_, error)) return false;
  if (kinematic_ee) {
    const Vec2 v = rotate(ee_twist_.linear(), ee_twist_.omega * h);
    ee_twist_ = {v.x, v.y, ee_twist_.omega};
  }
  return true;
}

SystemState Rollout::state() const { return from_world_state(*spec_, ws_, ee_twist_); }

double Rollout::energy() const {
  return energy::mechanical_energy(spec_->world, ws_, spec_->datum_height).total;
}

}  // namespace escapekit::scenarios
