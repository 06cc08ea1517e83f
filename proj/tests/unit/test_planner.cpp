#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "pos/error.hpp"
#include "pos/planner.hpp"

using namespace pos;

TEST_CASE("first-order split of a million") {
  const auto plan = optimal_split(1.0, 1.0, 1.0, 1000000);
  CHECK(plan.n_samples_real == doctest::Approx(6299.6).epsilon(1e-4));
  CHECK(plan.n_steps_real == doctest::Approx(158.74).epsilon(1e-4));
  CHECK(plan.n_samples == 6300);
  CHECK(plan.n_steps == 158);
  CHECK(plan.ratio == doctest::Approx(0.5));
  CHECK(plan.n_samples * plan.n_steps <= 1000000);
}

TEST_CASE("properties of the continuous optimum") {
  std::mt19937_64 g(51);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = oracle::uniforms(g, 1, 0.5, 4.0)[0];
    const double c = std::pow(10.0, oracle::uniforms(g, 1, -2, 2)[0]);
    const double sigma = std::pow(10.0, oracle::uniforms(g, 1, -2, 2)[0]);
    const auto budget = static_cast<std::uint64_t>(std::pow(10.0, oracle::uniforms(g, 1, 4, 9)[0]));
    CAPTURE(p);
    CAPTURE(c);
    CAPTURE(sigma);
    CAPTURE(budget);
    const auto r = optimal_split(p, c, sigma, budget);

    CHECK(r.ratio == doctest::Approx(1.0 / (2.0 * p)).epsilon(1e-10));
    CHECK(r.eps_total == doctest::Approx(r.eps_T + r.eps_S).epsilon(1e-12));
    CHECK(r.n_samples_real * r.n_steps_real == doctest::Approx(static_cast<double>(budget)).epsilon(1e-10));
    CHECK(r.eps_total == doctest::Approx(total_error(p, c, sigma, r.n_samples_real, r.n_steps_real)).epsilon(1e-12));

    // stationary on the constraint curve: moving along N_S N_T = N costs error
    for (double f : {0.97, 1.03}) {
      const double ns = r.n_samples_real * f, nt = static_cast<double>(budget) / ns;
      CHECK(total_error(p, c, sigma, ns, nt) >= r.eps_total);
    }

    if (r.n_samples >= 1 && r.n_steps >= 1) {
      CHECK(r.n_samples * r.n_steps <= budget);
      CHECK(r.eps_rounded == doctest::Approx(total_error(p, c, sigma, static_cast<double>(r.n_samples),
                                                         static_cast<double>(r.n_steps))).epsilon(1e-12));
      CHECK(r.eps_rounded >= r.eps_total * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("rounding the optimum loses at most a lattice step") {
  std::mt19937_64 g(52);
  for (int trial = 0; trial < 30; ++trial) {
    const double p = oracle::uniforms(g, 1, 0.5, 3.0)[0];
    const double c = oracle::uniforms(g, 1, 0.1, 10.0)[0];
    const double sigma = oracle::uniforms(g, 1, 0.1, 10.0)[0];
    const std::uint64_t budget = 20000 + static_cast<std::uint64_t>(oracle::uniforms(g, 1, 0, 80000)[0]);
    const auto r = optimal_split(p, c, sigma, budget);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t nt = 1; nt <= budget; ++nt) {
      const std::uint64_t ns = budget / nt;
      if (ns == 0) break;
      best = std::min(best, total_error(p, c, sigma, static_cast<double>(ns), static_cast<double>(nt)));
    }
    CHECK(r.eps_rounded >= best * (1.0 - 1e-12));
    // the plan rounds the continuous optimum rather than searching the
    // integers, so it may trail the best split by about one step in N_T
    const double slack = 2.0 * p / (r.n_steps_real - 1.0) + 1.0 / r.n_samples_real;
    CHECK(r.eps_rounded <= r.eps_total * (1.0 + slack));
  }
}

TEST_CASE("effective order") {
  CHECK(effective_order(1.0) == doctest::Approx(1.0 / 3.0));
  CHECK(effective_order(2.0) == doctest::Approx(0.4));
  CHECK(effective_order(std::numeric_limits<double>::infinity()) == 0.5);
  CHECK_THROWS_AS(effective_order(0.0), InvalidInput);
}

TEST_CASE("invalid plans") {
  CHECK_THROWS_AS(optimal_split(0.0, 1.0, 1.0, 1000), InvalidInput);
  CHECK_THROWS_AS(optimal_split(1.0, -1.0, 1.0, 1000), InvalidInput);
  CHECK_THROWS_AS(optimal_split(1.0, 1.0, 0.0, 1000), InvalidInput);
  CHECK_THROWS_AS(optimal_split(1.0, 1.0, 1.0, 0), InvalidInput);
  CHECK_THROWS_AS(optimal_split(std::nan(""), 1.0, 1.0, 1000), InvalidInput);
}
