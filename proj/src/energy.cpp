#include "escapekit/energy.hpp"

#include <cmath>

namespace escapekit::energy {

EnergyBreakdown mechanical_energy(const dynamics::World& world, const dynamics::WorldState& state,
                                  double datum_height) {
  EnergyBreakdown e;
  const Vec2 g = world.gravity();
  const double g_mag = length(g);
  const Vec2 up = g_mag > 0.0 ? -g / g_mag : Vec2{};
  const auto& bodies = world.bodies();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    if (!world.is_dynamic(i)) continue;
    const auto& def = bodies[i].def;
    const Twist2& tw = state.twists[i];
    e.kinetic += 0.5 * def.mass * length_squared(tw.linear()) + 0.5 * def.inertia * tw.omega * tw.omega;
    const double height = dot(state.poses[i].position(), up);
    e.gravitational += def.mass * g_mag * (height - datum_height);
  }
  const auto& springs = world.springs();
  for (std::size_t j = 0; j < springs.size(); ++j) {
    const Vec2 d = state.poses[springs[j].body_index].position() - state.anchors[j];
    e.elastic += 0.5 * springs[j].stiffness * length_squared(d);
  }
  e.total = e.kinetic + e.gravitational + e.elastic;
  return e;
}

CostIncrement cost_increment(double e_before, double e_after, const dynamics::StepReport& report) {
  CostIncrement c;
  c.d_energy = e_after - e_before;
  c.d_noncons = report.w_noncons;
  c.d_work_ext_abs = std::abs(c.d_energy - c.d_noncons);
  return c;
}

double path_cost(std::span<const CostIncrement> increments) {
  double total = 0.0;
  for (const CostIncrement& c : increments) total += c.d_work_ext_abs;
  return total;
}

}  // namespace escapekit::energy
