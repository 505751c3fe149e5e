#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "koed/dynamics.hpp"
#include "koed/parallel.hpp"
#include "reference_dynamics.hpp"

using namespace koed;

TEST_CASE("sim config validation") {
  SimConfig c;
  CHECK_NOTHROW(c.validate());
  c.step = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.window_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.duration = c.step;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  CHECK(c.total_steps() == 1500);
  CHECK(c.window_start() == 1200);
  CHECK_THROWS_AS(sim_config_from_json(nlohmann::json{{"step", "x"}}), FormatError);
  CHECK(sim_config_from_json(nlohmann::json{{"duration", 12.5}}).duration == 12.5);
}

TEST_CASE("trace matches an independent angle-form integrator") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(-2.0, 2.0), a(0.0, 1.5);
  SimConfig config;
  config.duration = 10.0;
  for (int rep = 0; rep < 4; ++rep) {
    KuramotoInstance inst{4, {w(rng), w(rng), w(rng), w(rng)}, {}};
    for (int k = 0; k < 6; ++k) inst.couplings.push_back(a(rng));
    const double strength = 0.5 + rep;
    const double omega = 0.3;
    const auto trace = integrate(inst, strength, omega, config);
    const auto ref = test_ref::angle_trace(inst, strength, omega, config, 8);
    REQUIRE(trace.times.size() == ref.times.size());
    REQUIRE(trace.values.size() == ref.values.size());
    for (std::size_t s = 0; s < trace.times.size(); ++s) CHECK(trace.times[s] == doctest::Approx(ref.times[s]));
    double worst = 0.0;
    for (std::size_t v = 0; v < trace.values.size(); ++v)
      worst = std::max(worst, std::abs(trace.values[v] - ref.values[v]));
    CHECK(worst < 1e-5);
    CHECK(trace.mean_spread() == doctest::Approx(ref.mean_spread()).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("isolated pair agrees with the analytic criterion") {
  SimConfig config;
  for (double half_gap : {0.3, 1.0, 2.5}) {
    const double threshold = half_gap;
    for (double factor : {0.95, 1.05}) {
      KuramotoInstance pair{2, {-half_gap, half_gap}, {factor * threshold}};
      CHECK(is_synchronized(pair, 0.0, 0.0, config) == (factor > 1.0));
    }
  }
}

TEST_CASE("equal frequencies need no control") {
  KuramotoInstance inst{3, {1.0, 1.0, 1.0}, {0.5, 0.2, 0.1}};
  CHECK(min_control_cost(inst, 1.0, SimConfig{}) <= 2 * SimConfig{}.bisect_tol);
}

TEST_CASE("search raises NoSynchronization at the cap") {
  SimConfig config;
  config.max_control = 4.0;
  KuramotoInstance inst{2, {-5.0, 5.0}, {0.0}};
  CHECK_THROWS_AS(min_control_cost(inst, 0.0, config), NoSynchronization);
  std::vector<KuramotoInstance> batch{KuramotoInstance{2, {0.0, 0.1}, {0.2}}, inst};
  try {
    min_control_costs(batch, 0.0, config);
    FAIL("expected NoSynchronization");
  } catch (const NoSynchronization& e) {
    REQUIRE(e.sample_index.has_value());
    CHECK(*e.sample_index == 1);
  }
}

TEST_CASE("min control cost matches a grid scan on small instances") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> w(-1.5, 1.5), a(0.0, 0.6);
  SimConfig config;
  for (int rep = 0; rep < 2; ++rep) {
    KuramotoInstance inst{3, {w(rng), w(rng), w(rng)}, {a(rng), a(rng), a(rng)}};
    const double omega = (inst.omegas[0] + inst.omegas[1] + inst.omegas[2]) / 3.0;
    const double xi = min_control_cost(inst, omega, config);
    const double scan = test_ref::grid_scan_cost(inst, omega, config, 1e-3);
    CHECK(std::abs(xi - scan) <= 5e-3);
  }
}

TEST_CASE("batch search equals one-at-a-time search") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> w(-2.0, 2.0), a(0.0, 1.0);
  std::vector<KuramotoInstance> batch;
  for (int rep = 0; rep < 11; ++rep) {
    KuramotoInstance inst{3, {w(rng), w(rng), w(rng)}, {a(rng), a(rng), a(rng)}};
    batch.push_back(inst);
  }
  SimConfig config;
  const auto costs = min_control_costs(batch, 0.0, config);
  for (std::size_t k = 0; k < batch.size(); ++k) CHECK(costs[k] == min_control_cost(batch[k], 0.0, config));
  std::vector<KuramotoInstance> reversed(batch.rbegin(), batch.rend());
  const auto back = min_control_costs(reversed, 0.0, config);
  for (std::size_t k = 0; k < batch.size(); ++k) CHECK(back[batch.size() - 1 - k] == costs[k]);
}

TEST_CASE("a common frequency shift leaves the cost unchanged") {
  KuramotoInstance inst{3, {-1.0, 0.2, 1.3}, {0.3, 0.1, 0.4}};
  SimConfig config;
  const double omega = (inst.omegas[0] + inst.omegas[1] + inst.omegas[2]) / 3.0;
  const double base = min_control_cost(inst, omega, config);
  auto shifted = inst;
  for (double& x : shifted.omegas) x += 7.5;
  CHECK(std::abs(min_control_cost(shifted, omega + 7.5, config) - base) <= 2 * config.bisect_tol);
}

TEST_CASE("synchronization is monotone in the control strength for a sample") {
  KuramotoInstance inst{4, {-1.2, -0.3, 0.4, 1.5}, {0.2, 0.1, 0.0, 0.3, 0.2, 0.1}};
  SimConfig config;
  const double xi = min_control_cost(inst, 0.1, config);
  CHECK_FALSE(is_synchronized(inst, xi - 0.05, 0.1, config));
  CHECK(is_synchronized(inst, xi + 0.05, 0.1, config));
  CHECK(is_synchronized(inst, xi + 1.0, 0.1, config));
}

TEST_CASE("invalid inputs are rejected") {
  KuramotoInstance inst{2, {0.0, 1.0}, {-0.1}};
  CHECK_THROWS_AS(integrate(inst, 1.0, 0.0, SimConfig{}), ArgumentError);
  inst.couplings[0] = 0.1;
  CHECK_THROWS_AS(integrate(inst, -1.0, 0.0, SimConfig{}), ArgumentError);
  KuramotoInstance big{13, std::vector<double>(13, 0.0), std::vector<double>(78, 0.1)};
  CHECK_THROWS_AS(integrate(big, 1.0, 0.0, SimConfig{}), ArgumentError);
}
