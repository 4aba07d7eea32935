#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "escapekit/metrics.hpp"

using namespace escapekit;
using namespace escapekit::metrics;
using scenarios::make_scenario;

namespace {

constexpr double kWellBarrier = 1.0 * 9.81 * 0.1;

EnergyCostField field_with_costs(const std::vector<double>& costs) {
  EnergyCostField f;
  for (double c : costs) f.samples.push_back({SystemState{}, c});
  return f;
}

}  // namespace

TEST_CASE("effort is zero when the start is already outside the capture set") {
  const auto spec = make_scenario("well", {});
  SystemState z = spec.initial;
  z.object_pose.y = 0.5;
  const auto r = effort_of_escape(spec, z, Subroutine::rrt, 10, 2000, 1);
  CHECK(r.effort == 0.0);
  CHECK_FALSE(r.path.has_value());
  CHECK(r.bound_history.empty());
}

TEST_CASE("sealed well has infinite effort") {
  const auto spec = make_scenario("well", {{"lid", true}});
  for (auto sub : {Subroutine::est, Subroutine::rrt}) {
    const auto r = effort_of_escape(spec, spec.initial, sub, 10, 2000, 3);
    CHECK(r.infinite());
    CHECK(r.effort == kInfiniteEffort);
    CHECK_FALSE(r.path.has_value());
    CHECK(r.bound_history.empty());
    CHECK(r.iterations_used == 2000);
  }
}

TEST_CASE("well effort converges onto the potential barrier") {
  const auto spec = make_scenario("well", {});
  for (auto sub : {Subroutine::rrt, Subroutine::est}) {
    int in_band = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = effort_of_escape(spec, spec.initial, sub, 10, 2000, seed);
      REQUIRE_FALSE(r.infinite());
      // Upper-bound property holds in every seed.
      CHECK(r.effort >= kWellBarrier - 1e-3);
      if (r.effort >= kWellBarrier && r.effort <= 1.15 * kWellBarrier) ++in_band;

      REQUIRE(!r.bound_history.empty());
      CHECK(r.effort == r.bound_history.back());
      for (std::size_t i = 1; i < r.bound_history.size(); ++i)
        CHECK(r.bound_history[i] < 0.99 * r.bound_history[i - 1]);

      REQUIRE(r.path.has_value());
      const auto& nodes = r.path->nodes;
      CHECK(nodes.front().aug.z.object_pose.y == spec.initial.object_pose.y);
      CHECK_FALSE(scenarios::capture_contains(spec, spec.initial, nodes.back().aug.z));
      CHECK(r.path->cost == r.effort);
      // Re-simulating the path reproduces its cost.
      planner::AugmentedState a{spec.initial, 0.0};
      for (std::size_t i = 1; i < nodes.size(); ++i) {
        const auto p = planner::propagate(spec, a, *nodes[i].incoming, {}, planner::kUnbounded, false);
        REQUIRE(p.has_value());
        a = p->end;
      }
      CHECK(std::abs(a.c - r.effort) <= 1e-6);
    }
    MESSAGE("seeds in band: " << in_band);
    CHECK(in_band >= 18);
  }
}

TEST_CASE("energy cost field basics") {
  const auto spec = make_scenario("pushing", {});
  const auto one = energy_cost_field(spec, spec.initial, 1, 0);
  REQUIRE(one.samples.size() == 1);
  CHECK(one.samples[0].c == 0.0);

  const auto f = energy_cost_field(spec, spec.initial, 50, 7);
  CHECK(f.samples.size() == 50);
  CHECK(f.samples[0].c == 0.0);
  for (const auto& s : f.samples) CHECK(s.c >= 0.0);

  CHECK_THROWS_AS(energy_cost_field(spec, spec.initial, 0, 0), std::invalid_argument);
}

TEST_CASE("falling under gravity alone costs nothing") {
  // Negligible control authority: gravity does all the work.
  auto spec = make_scenario("well", {{"control_bounds", {{"f_max", 1e-9}, {"tau_max", 0.0}}}});
  SystemState z = spec.initial;
  z.object_pose.y = 0.14;
  const auto f = energy_cost_field(spec, z, 20, 2);
  REQUIRE(f.samples.size() == 20);
  for (const auto& s : f.samples) {
    CHECK(s.c < 1e-6);
    CHECK(s.z.object_pose.y <= 0.14 + 1e-9);
  }
}

TEST_CASE("likelihood examples") {
  for (double lambda : {0.0, 0.5, 3.0}) {
    const auto L = likelihoods(field_with_costs({5, 5, 5, 5}), lambda);
    for (double v : L) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }
  const auto L = likelihoods(field_with_costs({0.0, std::log(2.0)}), 1.0);
  CHECK(L[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(L[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const auto U = likelihoods(field_with_costs({0.0, 1.0, 7.0}), 0.0);
  for (double v : U) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("likelihood properties") {
  const std::vector<double> costs = {0.3, 1.2, 0.05, 2.5, 0.9};
  std::vector<double> shifted = costs;
  for (double& c : shifted) c += 123.0;
  double prev_high = 1.0;
  for (double lambda : {0.0, 0.1, 1.0, 4.0, 20.0}) {
    const auto a = likelihoods(costs, lambda);
    const auto b = likelihoods(shifted, lambda);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sum += a[i];
      CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(a[2] >= a[0]);
    CHECK(a[0] >= a[4]);
    CHECK(a[3] <= prev_high);
    prev_high = a[3];
  }
}

TEST_CASE("capture score examples") {
  const auto spec = make_scenario("well", {});
  const SystemState inside = spec.initial;
  SystemState outside = spec.initial;
  outside.object_pose.y = 0.5;

  EnergyCostField f;
  f.root = inside;
  f.samples = {{inside, 0.0}, {outside, std::log(2.0)}};
  auto s = capture_scores(spec, inside, f, 1.0);
  CHECK(s.omega_cap == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(s.omega_suc == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  f.samples = {{inside, 0.0}, {inside, 1.0}};
  s = capture_scores(spec, inside, f, 1.0);
  CHECK(s.omega_cap == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.omega_suc == 0.0);
}

TEST_CASE("capture scores on a grown field stay in range") {
  const auto spec = make_scenario("balance", {});
  const auto f = energy_cost_field(spec, spec.initial, 100, 11);
  const auto s = capture_scores(spec, spec.initial, f, 1.0);
  CHECK(s.omega_cap >= 0.0);
  CHECK(s.omega_cap <= 1.0);
  CHECK(s.omega_suc >= 0.0);
  CHECK(s.omega_suc <= 1.0);
  const auto L = likelihoods(f, 1.0);
  double outside = 0.0;
  for (std::size_t m = 0; m < L.size(); ++m)
    if (!scenarios::capture_contains(spec, spec.initial, f.samples[m].z)) outside += L[m];
  CHECK(std::abs(s.omega_cap + outside - 1.0) <= 1e-9);
}

TEST_CASE("force score examples") {
  CHECK(stick_score(0.5, 10.0, 2.0) == doctest::Approx(3.0 * 0.894427191).epsilon(1e-9));
  CHECK(stick_score(0.5, 10.0, -5.0) == doctest::Approx(0.0));

  ForceScoreInput none;
  none.mu = 0.5;
  none.min_distance = 0.05;
  const ForceWeights w{0.1, 1.0, 2.0};
  CHECK(force_score(none, w, 0.05) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));

  ForceScoreInput two = none;
  two.min_distance = 0.0;
  dynamics::ContactPoint a, b;
  a.normal_force = 10.0;
  a.tangent_force = 2.0;
  b.normal_force = 4.0;
  b.tangent_force = 0.0;
  two.contacts = {a, b};
  // Engage uses the largest normal force, stick the best margin.
  const double expected = 0.1 * 10.0 + 1.0 * std::max(stick_score(0.5, 10, 2), stick_score(0.5, 4, 0)) + 2.0;
  CHECK(force_score(two, w, 0.05) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(force_score(two, w, 0.0), std::invalid_argument);
}

TEST_CASE("trajectory success score examples") {
  const std::vector<double> a = {0.0, 1.0};
  CHECK(trajectory_success_score(a, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  const std::vector<double> b = {1, 0, 0, 0, 0};
  CHECK(trajectory_success_score(b, 5) == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
  const std::vector<double> c(10, 0.37);
  for (int k = 1; k <= 10; ++k) CHECK(trajectory_success_score(c, k) == doctest::Approx(0.37).epsilon(1e-12));
  CHECK_THROWS_AS(trajectory_success_score(a, 0), std::invalid_argument);
  CHECK_THROWS_AS(trajectory_success_score(a, 3), std::invalid_argument);
}
