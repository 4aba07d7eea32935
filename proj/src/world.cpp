#include "escapekit/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "escapekit/collision.hpp"

namespace escapekit::dynamics {

World::World(std::vector<Body> bodies, std::vector<SpringJointDef> springs, Vec2 gravity,
             WorldOptions options)
    : bodies_(std::move(bodies)),
      springs_(std::move(springs)),
      gravity_(gravity),
      options_(options) {}

std::size_t World::find(const std::string& name) const {
  for (std::size_t i = 0; i < bodies_.size(); ++i)
    if (bodies_[i].def.name == name) return i;
  return bodies_.size();
}

WorldState World::initial_state() const {
  WorldState s;
  s.poses.reserve(bodies_.size());
  for (const Body& b : bodies_) s.poses.push_back(b.def.pose);
  s.twists.assign(bodies_.size(), Twist2{});
  for (const SpringJointDef& sp : springs_) s.anchors.push_back(sp.anchor_world);
  s.anchor_velocities.assign(springs_.size(), Vec2{});
  return s;
}

namespace {

double derived_inertia(const Shape& shape, double mass) {
  if (const auto* c = std::get_if<Circle>(&shape)) return disk_inertia(mass, c->radius);
  // Uniform-density polygon about its origin.
  const auto& p = std::get<ConvexPolygon>(shape);
  double area = 0.0;
  double second = 0.0;
  const std::size_t n = p.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = p.vertices[i];
    const Vec2 b = p.vertices[(i + 1) % n];
    const double cr = cross(a, b);
    area += 0.5 * cr;
    second += cr * (dot(a, a) + dot(a, b) + dot(b, b)) / 12.0;
  }
  return mass * second / area;
}

constexpr double kOverlapRecovery = 0.2;

bool finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

}  // namespace

World build_world(std::vector<BodyDef> defs, std::vector<SpringJointDef> springs, Vec2 gravity,
                  WorldOptions options) {
  if (!finite(gravity)) throw std::invalid_argument("gravity must be finite");
  if (options.velocity_iterations < 1) throw std::invalid_argument("velocity_iterations must be >= 1");
  if (options.ground_normal_accel < 0.0) throw std::invalid_argument("ground_normal_accel must be >= 0");

  std::vector<Body> bodies;
  bodies.reserve(defs.size());
  for (BodyDef& def : defs) {
    if (auto* poly = std::get_if<ConvexPolygon>(&def.shape)) {
      *poly = make_polygon(poly->vertices);
    } else {
      const double r = std::get<Circle>(def.shape).radius;
      if (!(r > 0.0) || !std::isfinite(r))
        throw std::invalid_argument("degenerate shape: circle radius must be positive");
    }
    if (!(def.friction_mu >= 0.0) || !(def.ground_mu >= 0.0))
      throw std::invalid_argument("friction coefficients must be >= 0");
    if (!(def.restitution >= 0.0 && def.restitution <= 1.0))
      throw std::invalid_argument("restitution must lie in [0, 1]");
    if (!std::isfinite(def.pose.x) || !std::isfinite(def.pose.y) || !std::isfinite(def.pose.theta))
      throw std::invalid_argument("body pose must be finite");
    def.pose.theta = wrap_angle(def.pose.theta);

    Body b;
    b.extent = min_extent(def.shape);
    b.radius = bounding_radius(def.shape);
    if (def.motion == MotionKind::dynamic) {
      if (!(def.mass > 0.0) || !std::isfinite(def.mass))
        throw std::invalid_argument("dynamic body '" + def.name + "' needs positive mass");
      if (def.inertia == 0.0) def.inertia = derived_inertia(def.shape, def.mass);
      if (!(def.inertia > 0.0) || !std::isfinite(def.inertia))
        throw std::invalid_argument("dynamic body '" + def.name + "' needs positive inertia");
      b.inv_mass = 1.0 / def.mass;
      b.inv_inertia = 1.0 / def.inertia;
    }
    b.def = std::move(def);
    bodies.push_back(std::move(b));
  }

  for (const SpringJointDef& sp : springs) {
    if (sp.body_index >= bodies.size()) throw std::invalid_argument("spring body index out of range");
    if (bodies[sp.body_index].def.motion != MotionKind::dynamic)
      throw std::invalid_argument("springs must attach to dynamic bodies");
    if (!(sp.stiffness >= 0.0) || !(sp.damping >= 0.0) || !std::isfinite(sp.stiffness) ||
        !std::isfinite(sp.damping))
      throw std::invalid_argument("invalid stiffness: spring stiffness and damping must be >= 0");
    if (sp.rest_length != 0.0)
      throw std::invalid_argument("only zero rest-length springs are supported");
    if (!finite(sp.anchor_world)) throw std::invalid_argument("spring anchor must be finite");
  }
  return World(std::move(bodies), std::move(springs), gravity, options);
}

std::size_t StepReport::contact_pairs() const {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const ContactPoint& c : contacts) pairs.emplace(c.body_a, c.body_b);
  return pairs.size();
}

namespace {

struct Motion {
  Vec2 v0;
  double w0 = 0.0;
  Vec2 v;  // working velocity
  double w = 0.0;
  Vec2 vf;  // velocity before contact impulses
  double wf = 0.0;
  double inv_m = 0.0;  // inverse of the spring-augmented mass
  double inv_i = 0.0;
};

struct Constraint {
  std::size_t a = 0;
  std::size_t b = 0;
  Vec2 point;
  Vec2 n;
  Vec2 t;
  Vec2 ra;
  Vec2 rb;
  double sep = 0.0;
  double mass_n = 0.0;
  double mass_t = 0.0;
  double mu = 0.0;
  double u0n = 0.0;
  double u0t = 0.0;
  double target_n = 0.0;
  bool friction = false;
  double lambda_n = 0.0;
  double lambda_t = 0.0;
};

struct GroundFriction {
  std::size_t body = 0;
  Vec2 target;
  double target_w = 0.0;
  bool linear = false;
  bool angular = false;
  double max_p = 0.0;
  double max_l = 0.0;
  Vec2 p;
  double l = 0.0;
};

struct Scratch {
  std::vector<Motion> motion;
  std::vector<Constraint> constraints;
  std::vector<GroundFriction> ground;
};

Vec2 rel_velocity(const std::vector<Motion>& m, const Constraint& c, bool initial) {
  const Motion& A = m[c.a];
  const Motion& B = m[c.b];
  if (initial) return (B.v0 + cross(B.w0, c.rb)) - (A.v0 + cross(A.w0, c.ra));
  return (B.v + cross(B.w, c.rb)) - (A.v + cross(A.w, c.ra));
}

void apply_impulse(std::vector<Motion>& m, const Constraint& c, Vec2 impulse) {
  Motion& A = m[c.a];
  Motion& B = m[c.b];
  A.v -= impulse * A.inv_m;
  A.w -= cross(c.ra, impulse) * A.inv_i;
  B.v += impulse * B.inv_m;
  B.w += cross(c.rb, impulse) * B.inv_i;
}

double inverse_mass_along(const Motion& A, Vec2 ra, const Motion& B, Vec2 rb, Vec2 d) {
  const double ca = cross(ra, d);
  const double cb = cross(rb, d);
  return A.inv_m + ca * ca * A.inv_i + B.inv_m + cb * cb * B.inv_i;
}

// Target in the closed interval between `reached` and `-initial` that is nearest zero.
// Any impulse that lands inside that interval does non-positive work.
bool dissipative_target(double initial, double reached, double& target) {
  if (initial * reached >= 0.0) {
    target = 0.0;
    return true;
  }
  if (std::abs(initial) < std::abs(reached)) {
    target = -initial;
    return true;
  }
  return false;
}

void iterate(Scratch& s) {
  for (Constraint& c : s.constraints) {
    {
      const double un = dot(rel_velocity(s.motion, c, false), c.n);
      const double next = std::max(c.lambda_n + (c.target_n - un) * c.mass_n, 0.0);
      const double d = next - c.lambda_n;
      c.lambda_n = next;
      if (d != 0.0) apply_impulse(s.motion, c, d * c.n);
    }
    if (c.friction) {
      const double ut = dot(rel_velocity(s.motion, c, false), c.t);
      // Re-derive the target against the slip this contact would see without its own friction,
      // since normal impulses at the same point also change the tangential velocity.
      const double free_ut = ut - c.lambda_t / c.mass_t;
      double target = 0.0;
      const bool active = dissipative_target(c.u0t, free_ut, target);
      const double limit = active ? c.mu * c.lambda_n : 0.0;
      const double next = std::clamp(c.lambda_t + (target - ut) * c.mass_t, -limit, limit);
      const double d = next - c.lambda_t;
      c.lambda_t = next;
      if (d != 0.0) apply_impulse(s.motion, c, d * c.t);
    }
  }
  for (GroundFriction& g : s.ground) {
    Motion& M = s.motion[g.body];
    if (g.linear) {
      Vec2 next = g.p - (M.v - g.target) / M.inv_m;
      const double len = length(next);
      if (len > g.max_p) next = next * (g.max_p / len);
      M.v += (next - g.p) * M.inv_m;
      g.p = next;
    }
    if (g.angular) {
      const double next = std::clamp(g.l - (M.w - g.target_w) / M.inv_i, -g.max_l, g.max_l);
      M.w += (next - g.l) * M.inv_i;
      g.l = next;
    }
  }
}

// Work done by contact and floor impulses over the step, using mid-step velocities.
double dissipated_work(const Scratch& s) {
  double w = 0.0;
  for (const Constraint& c : s.constraints) {
    const Vec2 u1 = rel_velocity(s.motion, c, false);
    const Vec2 u0 = rel_velocity(s.motion, c, true);
    const Vec2 mid = 0.5 * (u0 + u1);
    w += c.lambda_n * dot(mid, c.n) + c.lambda_t * dot(mid, c.t);
  }
  for (const GroundFriction& g : s.ground) {
    const Motion& M = s.motion[g.body];
    w += dot(g.p, 0.5 * (M.v0 + M.v)) + g.l * 0.5 * (M.w0 + M.w);
  }
  return w;
}

double potential_energy(const World& world, const WorldState& state) {
  const auto& bodies = world.bodies();
  double u = 0.0;
  for (std::size_t i = 0; i < bodies.size(); ++i)
    if (world.is_dynamic(i)) u -= bodies[i].def.mass * dot(world.gravity(), state.poses[i].position());
  const auto& springs = world.springs();
  for (std::size_t j = 0; j < springs.size(); ++j)
    u += 0.5 * springs[j].stiffness *
         length_squared(state.poses[springs[j].body_index].position() - state.anchors[j]);
  return u;
}

}  // namespace

bool step_in_place(const World& world, WorldState& state, std::span<const Wrench> controls,
                   double h, StepReport& report, SimError& error) {
  const auto& bodies = world.bodies();
  const auto& springs = world.springs();
  const WorldOptions& opt = world.options();
  const std::size_t n = bodies.size();

  report.contacts.clear();
  report.w_noncons = 0.0;
  report.w_control = 0.0;
  report.w_correction = 0.0;
  report.dt = h;

  if (!(h > 0.0) || !std::isfinite(h)) {
    error = {SimError::Code::bad_input, "dt must be positive and finite"};
    return false;
  }
  if (state.poses.size() != n || state.twists.size() != n || state.anchors.size() != springs.size() ||
      state.anchor_velocities.size() != springs.size()) {
    error = {SimError::Code::bad_input, "state dimensions do not match the world"};
    return false;
  }
  if (!controls.empty() && controls.size() != n) {
    error = {SimError::Code::bad_input, "controls must be empty or one wrench per body"};
    return false;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Twist2& tw = state.twists[i];
    if (!tw.finite() || !std::isfinite(state.poses[i].x) || !std::isfinite(state.poses[i].y) ||
        !std::isfinite(state.poses[i].theta)) {
      error = {SimError::Code::bad_input, "non-finite body state"};
      return false;
    }
  }
  for (const Wrench& u : controls) {
    if (!std::isfinite(u.fx) || !std::isfinite(u.fy) || !std::isfinite(u.tau)) {
      error = {SimError::Code::bad_input, "non-finite control wrench"};
      return false;
    }
  }

  thread_local Scratch s;
  s.motion.assign(n, Motion{});
  s.constraints.clear();
  s.ground.clear();

  const Vec2 g = world.gravity();
  for (std::size_t i = 0; i < n; ++i) {
    const Body& b = bodies[i];
    Motion& m = s.motion[i];
    const Twist2& tw = state.twists[i];
    if (b.def.motion == MotionKind::fixed) continue;
    m.v0 = tw.linear();
    m.w0 = tw.omega;
    m.v = m.v0;
    m.w = m.w0;
    if (b.def.motion != MotionKind::dynamic) continue;
    const Wrench u = controls.empty() ? Wrench{} : controls[i];
    m.v = m.v0 + h * (g + Vec2{u.fx, u.fy} * b.inv_mass);
    m.w = m.w0 + h * u.tau * b.inv_inertia;
    m.inv_m = b.inv_mass;
    m.inv_i = b.inv_inertia;
  }

  // Implicit-midpoint springs fold into an effective mass m + k h^2/4 + c h/2.
  if (!springs.empty()) {
    std::vector<double> extra(n, 0.0);
    std::vector<Vec2> force(n);
    for (std::size_t j = 0; j < springs.size(); ++j) {
      const SpringJointDef& sp = springs[j];
      const std::size_t i = sp.body_index;
      const Vec2 p = state.poses[i].position();
      const Vec2 va = state.anchor_velocities[j];
      const Vec2 a_mid = state.anchors[j] + 0.5 * h * va;
      const Vec2 v0 = s.motion[i].v0;
      extra[i] += sp.stiffness * h * h / 4.0 + sp.damping * h / 2.0;
      force[i] += -sp.stiffness * (p + (h / 4.0) * v0 - a_mid) - sp.damping * (0.5 * v0 - va);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (extra[i] == 0.0) continue;
      Motion& m = s.motion[i];
      const double mass = bodies[i].def.mass;
      const double m_eff = mass + extra[i];
      // m v* = m v0 + h (F_ext + F_spring) before the spring stiffening.
      m.v = (mass * m.v + h * force[i]) / m_eff;
      m.inv_m = 1.0 / m_eff;
    }
  }

  for (Motion& m : s.motion) {
    m.vf = m.v;
    m.wf = m.w;
  }

  // Speculative margin: anything that could come into contact during this step.
  std::vector<double> reach(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Motion& m = s.motion[i];
    const double lin = std::max(length(m.v0), length(m.v));
    const double ang = std::max(std::abs(m.w0), std::abs(m.w)) * bodies[i].radius;
    reach[i] = h * (lin + ang);
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool di = bodies[i].def.motion == MotionKind::dynamic;
      const bool dj = bodies[j].def.motion == MotionKind::dynamic;
      if (!di && !dj) continue;
      const double margin = opt.contact_margin + reach[i] + reach[j];
      const Pose2& pi = state.poses[i];
      const Pose2& pj = state.poses[j];
      if (length(pj.position() - pi.position()) > bodies[i].radius + bodies[j].radius + margin)
        continue;
      const Manifold mf = collide(bodies[i].def.shape, pi, bodies[j].def.shape, pj, margin);
      const double depth_limit = opt.tunneling_fraction * std::min(bodies[i].extent, bodies[j].extent);
      for (std::size_t k = 0; k < mf.count; ++k) {
        Constraint c;
        c.a = i;
        c.b = j;
        c.point = mf.points[k].point;
        c.sep = mf.points[k].separation;
        c.n = mf.normal;
        c.t = perp(c.n);
        c.ra = c.point - pi.position();
        c.rb = c.point - pj.position();
        if (c.sep < -depth_limit) {
          error = {SimError::Code::tunneling,
                   "tunneling detected between '" + bodies[i].def.name + "' and '" +
                       bodies[j].def.name + "'"};
          return false;
        }
        const Motion& A = s.motion[i];
        const Motion& B = s.motion[j];
        c.mass_n = 1.0 / inverse_mass_along(A, c.ra, B, c.rb, c.n);
        c.mass_t = 1.0 / inverse_mass_along(A, c.ra, B, c.rb, c.t);
        c.mu = std::sqrt(bodies[i].def.friction_mu * bodies[j].def.friction_mu);
        const Vec2 u0 = rel_velocity(s.motion, c, true);
        const Vec2 us = rel_velocity(s.motion, c, false);
        c.u0n = dot(u0, c.n);
        c.u0t = dot(u0, c.t);
        const double usn = dot(us, c.n);

        // Open gap: only limit the approach so the gap closes by the end of the step, stopping
        // dead on arrival. Overlap: push out gently. Either way the separation speed never
        // exceeds the approach speed, which would add energy.
        const double e = std::max(bodies[i].def.restitution, bodies[j].def.restitution);
        double target = kOverlapRecovery * -c.sep / h;
        if (c.sep >= 0.0) {
          target = -2.0 * c.sep / h - c.u0n;
          if (e == 0.0 || (c.u0n < 0.0 && c.u0n >= -opt.restitution_threshold)) {
            // Inelastic approach: brake early enough that stopping dead during the next step
            // leaves at most half the slop of overlap.
            const double brake = -(c.sep + 0.5 * opt.overlap_slop) / h - 0.5 * c.u0n;
            target = std::max(target, brake);
          }
          target = std::min(target, 0.0);
        }
        const bool predicted = c.sep + 0.5 * h * (c.u0n + usn) < 0.0;
        if (predicted && e > 0.0 && c.u0n < -opt.restitution_threshold)
          target = std::max(-e * c.u0n, target);
        c.target_n = std::min(target, -c.u0n);
        c.friction = c.mu > 0.0;
        s.constraints.push_back(c);
      }
    }
  }

  if (opt.ground_normal_accel > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const Body& b = bodies[i];
      if (b.def.motion != MotionKind::dynamic || b.def.ground_mu <= 0.0) continue;
      GroundFriction gf;
      gf.body = i;
      const Motion& m = s.motion[i];
      const double load = b.def.ground_mu * b.def.mass * opt.ground_normal_accel * h;
      gf.max_p = load;
      // Uniform pressure over a square patch of the same polar radius of gyration.
      gf.max_l = load * (2.0 * std::numbers::sqrt2 / 3.0) * std::sqrt(b.def.inertia / b.def.mass);
      if (dot(m.v0, m.v) >= 0.0) {
        gf.linear = true;
      } else if (length(m.v0) < length(m.v)) {
        gf.linear = true;
        gf.target = -m.v0;
      }
      gf.angular = dissipative_target(m.w0, m.w, gf.target_w);
      if (gf.linear || gf.angular) s.ground.push_back(gf);
    }
  }

  if (!s.constraints.empty() || !s.ground.empty()) {
    for (int it = 0; it < opt.velocity_iterations; ++it) iterate(s);
    for (int it = 0; it < opt.max_extra_iterations && dissipated_work(s) > 1e-14; ++it) iterate(s);
  }

  // Gauss-Seidel may stop short of convergence and leave a sliver of positive work. Scaling
  // every impulse by a common factor keeps the friction cones and brings the work back to <= 0.
  if (!s.constraints.empty() || !s.ground.empty()) {
    const double w1 = dissipated_work(s);
    if (w1 > 0.0) {
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Motion& m = s.motion[i];
        if (m.inv_m == 0.0) continue;
        const Vec2 dv = m.v - m.vf;
        const double dw = m.w - m.wf;
        quad += length_squared(dv) / m.inv_m + (m.inv_i > 0.0 ? dw * dw / m.inv_i : 0.0);
      }
      // work(alpha) = alpha * lin + alpha^2 * quad / 2 with work(1) = w1
      const double lin = w1 - 0.5 * quad;
      if (lin < 0.0 && quad > 0.0) {
        const double alpha = std::min(1.0, -2.0 * lin / quad * (1.0 - 1e-9));
        for (Motion& m : s.motion) {
          if (m.inv_m == 0.0) continue;
          m.v = m.vf + alpha * (m.v - m.vf);
          m.w = m.wf + alpha * (m.w - m.wf);
        }
        for (Constraint& c : s.constraints) {
          c.lambda_n *= alpha;
          c.lambda_t *= alpha;
        }
        for (GroundFriction& gf : s.ground) {
          gf.p = alpha * gf.p;
          gf.l *= alpha;
        }
      }
    }
  }

  // End-of-step penetration check.
  for (const Constraint& c : s.constraints) {
    const double u1 = dot(rel_velocity(s.motion, c, false), c.n);
    const double end_sep = c.sep + 0.5 * h * (c.u0n + u1);
    const double depth_limit =
        opt.tunneling_fraction * std::min(bodies[c.a].extent, bodies[c.b].extent);
    if (end_sep < -depth_limit) {
      error = {SimError::Code::tunneling, "tunneling detected between '" + bodies[c.a].def.name +
                                              "' and '" + bodies[c.b].def.name + "'"};
      return false;
    }
  }

  // Work bookkeeping; positions advance with the mean velocity so that these sums are exact.
  for (const Constraint& c : s.constraints) {
    const Vec2 u1 = rel_velocity(s.motion, c, false);
    const Vec2 u0 = rel_velocity(s.motion, c, true);
    const Vec2 mid = 0.5 * (u0 + u1);
    const Vec2 impulse = c.lambda_n * c.n + c.lambda_t * c.t;
    report.w_noncons += dot(impulse, mid);
    if (bodies[c.a].def.motion == MotionKind::kinematic)
      report.w_control += dot(impulse, s.motion[c.a].v0 + cross(s.motion[c.a].w0, c.ra));
    if (bodies[c.b].def.motion == MotionKind::kinematic)
      report.w_control -= dot(impulse, s.motion[c.b].v0 + cross(s.motion[c.b].w0, c.rb));
    if (c.lambda_n > 0.0 || c.sep <= 0.0) {
      ContactPoint cp;
      cp.point = c.point;
      cp.normal = c.n;
      cp.normal_force = c.lambda_n / h;
      cp.tangent_force = c.lambda_t / h;
      cp.slip_speed = std::abs(dot(u1, c.t));
      cp.body_a = c.a;
      cp.body_b = c.b;
      report.contacts.push_back(cp);
    }
  }
  for (const GroundFriction& gf : s.ground) {
    const Motion& m = s.motion[gf.body];
    report.w_noncons += dot(gf.p, 0.5 * (m.v0 + m.v)) + gf.l * 0.5 * (m.w0 + m.w);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Body& b = bodies[i];
    if (b.def.motion != MotionKind::dynamic) continue;
    const Motion& m = s.motion[i];
    const Vec2 v_mid = 0.5 * (m.v0 + m.v);
    const double w_mid = 0.5 * (m.w0 + m.w);
    if (!controls.empty()) {
      const Wrench& u = controls[i];
      report.w_control += h * (dot(Vec2{u.fx, u.fy}, v_mid) + u.tau * w_mid);
    }
  }
  for (std::size_t j = 0; j < springs.size(); ++j) {
    const SpringJointDef& sp = springs[j];
    const Motion& m = s.motion[sp.body_index];
    const Vec2 p = state.poses[sp.body_index].position();
    const Vec2 va = state.anchor_velocities[j];
    const Vec2 v_mid = 0.5 * (m.v0 + m.v);
    const Vec2 p_mid = p + 0.5 * h * v_mid;
    const Vec2 a_mid = state.anchors[j] + 0.5 * h * va;
    const Vec2 rel = v_mid - va;
    report.w_control += -sp.stiffness * h * dot(p_mid - a_mid, va) - sp.damping * h * dot(rel, va);
    report.w_noncons += -sp.damping * h * dot(rel, rel);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Body& b = bodies[i];
    Pose2& pose = state.poses[i];
    Twist2& tw = state.twists[i];
    if (b.def.motion == MotionKind::fixed) continue;
    if (b.def.motion == MotionKind::kinematic) {
      pose.x += h * tw.vx;
      pose.y += h * tw.vy;
      pose.theta = wrap_angle(pose.theta + h * tw.omega);
      continue;
    }
    const Motion& m = s.motion[i];
    pose.x += 0.5 * h * (m.v0.x + m.v.x);
    pose.y += 0.5 * h * (m.v0.y + m.v.y);
    pose.theta = wrap_angle(pose.theta + 0.5 * h * (m.w0 + m.w));
    tw = {m.v.x, m.v.y, m.w};
  }
  for (std::size_t j = 0; j < springs.size(); ++j) state.anchors[j] += h * state.anchor_velocities[j];

  // Overlap beyond the slop is removed by moving bodies apart; velocities are untouched and
  // the resulting potential-energy change is reported separately.
  const double u_before = potential_energy(world, state);
  bool moved = false;
  for (const Constraint& c : s.constraints) {
    const double u1 = dot(rel_velocity(s.motion, c, false), c.n);
    const double overlap = -(c.sep + 0.5 * h * (c.u0n + u1)) - opt.overlap_slop;
    const double wa = bodies[c.a].inv_mass;
    const double wb = bodies[c.b].inv_mass;
    if (overlap <= 0.0 || wa + wb == 0.0) continue;
    const Vec2 push = (opt.overlap_correction * overlap / (wa + wb)) * c.n;
    state.poses[c.a].x -= wa * push.x;
    state.poses[c.a].y -= wa * push.y;
    state.poses[c.b].x += wb * push.x;
    state.poses[c.b].y += wb * push.y;
    moved = true;
  }
  if (moved) report.w_correction = potential_energy(world, state) - u_before;
  state.time += h;
  return true;
}

StepResult step(const World& world, const WorldState& state, std::span<const Wrench> controls,
                double dt) {
  WorldState next = state;
  StepReport report;
  SimError err;
  if (!step_in_place(world, next, controls, dt, report, err)) return unexpected(std::move(err));
  return std::pair{std::move(next), std::move(report)};
}

double min_body_distance(const World& world, const WorldState& state, std::size_t body_a,
                         std::size_t body_b) {
  const auto& bodies = world.bodies();
  return shape_distance(bodies.at(body_a).def.shape, state.poses.at(body_a),
                        bodies.at(body_b).def.shape, state.poses.at(body_b));
}

}  // namespace escapekit::dynamics
