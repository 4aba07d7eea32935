#pragma once

#include <span>

#include "escapekit/world.hpp"

namespace escapekit::energy {

struct EnergyBreakdown {
  double kinetic = 0.0;
  double gravitational = 0.0;
  double elastic = 0.0;
  double total = 0.0;
};

/// One simulator step's share of the external-work integral.
struct CostIncrement {
  double d_work_ext_abs = 0.0;
  double d_energy = 0.0;
  double d_noncons = 0.0;
};

/// Kinetic energy of dynamic bodies, gravity potential measured from `datum_height`
/// along -g, and spring potential. Kinematic and fixed bodies carry no energy.
EnergyBreakdown mechanical_energy(const dynamics::World& world, const dynamics::WorldState& state,
                                  double datum_height);

CostIncrement cost_increment(double e_before, double e_after, const dynamics::StepReport& report);

double path_cost(std::span<const CostIncrement> increments);

}  // namespace escapekit::energy
