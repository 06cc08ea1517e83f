#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pos/dynamic_pos.hpp"
#include "pos/error.hpp"
#include "pos/models.hpp"
#include "pos/rng.hpp"

using namespace pos;

namespace {

// The same cross moments as a generic set, so the optimizers take the
// per-sample route instead of the power-sum tables.
ObservableSet as_generic(const ObservableSet& poly) {
  std::vector<Observable> items;
  for (std::size_t m = 0; m < poly.size(); ++m) {
    const auto [a, b] = poly.exponent(m);
    auto p = [](double x, int e) { return e <= 0 ? 1.0 : std::pow(x, e); };
    auto dp = [p](double x, int e) { return e <= 0 ? 0.0 : e * p(x, e - 1); };
    auto ddp = [p](double x, int e) { return e <= 1 ? 0.0 : e * (e - 1) * p(x, e - 2); };
    items.push_back({poly.name(m), [=](std::span<const double> x) { return p(x[0], a) * p(x[1], b); },
                     [=](std::span<const double> x, std::span<double> o) {
                       o[0] = dp(x[0], a) * p(x[1], b);
                       o[1] = p(x[0], a) * dp(x[1], b);
                     },
                     [=](std::span<const double> x, std::span<double> o) {
                       o[0] = ddp(x[0], a) * p(x[1], b);
                       o[1] = o[2] = dp(x[0], a) * dp(x[1], b);
                       o[3] = p(x[0], a) * ddp(x[1], b);
                     }});
  }
  return ObservableSet::generic(2, std::move(items));
}

std::vector<double> increments(std::size_t n, double dt, std::uint64_t seed) {
  std::vector<double> dW(n);
  NoiseStream(seed, 0).fill(0, NoisePurpose::increment, dW);
  for (double& w : dW) w *= std::sqrt(dt);
  return dW;
}

}  // namespace

TEST_CASE("ideal moment changes: 1-D against the generator formula") {
  std::mt19937_64 g(41);
  const auto x = oracle::normals(g, 500, 0.3, 0.8);
  const auto model = cubic_model();
  const double dt = 0.01;
  const auto c = ideal_moment_changes(Ensemble(x), model, ObservableSet::monomials(6), dt);
  for (int m = 1; m <= 6; ++m) {
    long double s = 0;
    for (double v : x) {
      const long double a = v - static_cast<long double>(v) * v * v;
      s += std::pow(static_cast<long double>(v), m) +
           dt * (m * std::pow(static_cast<long double>(v), m - 1) * a +
                 0.5L * m * (m - 1) * (m >= 2 ? std::pow(static_cast<long double>(v), m - 2) : 0.0L));
    }
    CHECK(oracle::rel_err(c[m - 1], static_cast<double>(s / x.size())) < 1e-12);
  }
}

TEST_CASE("ideal moment changes: table generator matches the per-sample route") {
  std::mt19937_64 g(42);
  const std::size_t N = 300;
  const Ensemble X(oracle::normals(g, 2 * N, 0.2, 0.7), N, 2);
  for (const auto& obs : {laser_observables(), laser_observables_degree4(),
                          ObservableSet::cross_moments({{8, 0}, {4, 4}, {0, 7}, {1, 0}})}) {
    const auto gen = as_generic(obs);
    for (double b : {0.05, 1.0}) {
      const auto model = laser_model(b);
      const auto a = ideal_moment_changes(X, model, obs, 0.003);
      const auto c = ideal_moment_changes(X, model, gen, 0.003);
      REQUIRE(a.size() == c.size());
      for (std::size_t m = 0; m < a.size(); ++m) CHECK(oracle::rel_err(a[m], c[m]) < 1e-12);
    }
  }
}

TEST_CASE("combined step hits the ideal means") {
  std::mt19937_64 g(43);
  const std::size_t N = 1000;
  const Ensemble X(oracle::normals(g, N, 1.0, 0.1));
  const auto model = constant_model(0.5, 0.5);
  const auto obs = ObservableSet::monomials(6);
  const double dt = 1e-3;
  const auto dW = increments(N, dt, 1);
  const auto [Y, rep] = combined_step(X, model, obs, dt, dW);
  CHECK(rep.converged);
  const auto c = ideal_moment_changes(X, model, obs, dt);
  const auto got = obs.sample_means(Y);
  for (std::size_t m = 0; m < c.size(); ++m) CHECK(std::abs(got[m] - c[m]) <= 1e-12 * std::max(1.0, std::abs(c[m])));
  CHECK(rep.distance > 0.0);
  CHECK(rep.distance < 1.0);

  // the Euler proposal alone misses by O(sqrt(dt/N))
  const auto eu = obs.sample_means(euler_step(X, model, dt, dW));
  CHECK(std::abs(eu[0] - c[0]) > 1e-6);
}

TEST_CASE("individual step satisfies both noise conditions") {
  std::mt19937_64 g(44);
  const std::size_t N = 1000;
  const Ensemble X(oracle::normals(g, N, 1.0, 0.1));
  const auto model = constant_model(0.5, 0.5);
  const auto obs = ObservableSet::monomials(6);
  for (double dt : {1e-2, 1e-4}) {
    CAPTURE(dt);
    const auto dW = increments(N, dt, 2);
    const auto p = StepProposal::make(X, model, dt, dW);
    const auto r = try_individual_step(X, p, obs);
    REQUIRE(r.rep.converged);
    const auto res = noise_residuals(X, p, obs, r.dv);
    for (std::size_t m = 0; m < obs.size(); ++m) {
      CHECK(std::abs(res.e1[m]) <= 1e-12 * std::sqrt(dt) * std::max(1.0, res.e1_scale[m]));
      CHECK(std::abs(res.e2[m]) <= 1e-12 * std::sqrt(dt) * std::max(1.0, res.e2_scale[m]));
    }
    CHECK(noise_residual_norm(res, dt) <= 1e-12);

    // the unoptimized noise does not
    CHECK(noise_residual_norm(noise_residuals(X, p, obs, p.effective_noise), dt) > 1e-6);

    // X + A dt + dV
    for (std::size_t n = 0; n < N; ++n) CHECK(r.X.data()[n] == doctest::Approx(X.data()[n] + p.drift[n] * dt + r.dv[n]).epsilon(1e-15));
  }
}

TEST_CASE("individual step: power-sum and dense routes agree") {
  std::mt19937_64 g(45);
  const std::size_t N = 200;
  {
    const Ensemble X(oracle::normals(g, N, 1.0, 0.2));
    const auto model = cubic_model();
    const double dt = 1e-3;
    const auto dW = increments(N, dt, 3);
    OptimizerConfig dense;
    dense.fast_path = false;
    const auto a = individual_step(X, model, ObservableSet::monomials(5), dt, dW);
    const auto b = individual_step(X, model, ObservableSet::monomials(5), dt, dW, dense);
    CHECK(a.second.iterations == b.second.iterations);
    for (std::size_t n = 0; n < N; ++n) CHECK(std::abs(a.first.data()[n] - b.first.data()[n]) <= 1e-11);
  }
  {
    const Ensemble X(oracle::normals(g, 2 * N, 0.0, 0.7), N, 2);
    const auto model = laser_model(0.3);
    const double dt = 1e-3;
    const auto dW = increments(2 * N, dt, 4);
    const auto obs = laser_observables_degree4();
    const auto a = individual_step(X, model, obs, dt, dW);
    const auto b = individual_step(X, model, as_generic(obs), dt, dW);
    for (std::size_t i = 0; i < 2 * N; ++i) CHECK(std::abs(a.first.data()[i] - b.first.data()[i]) <= 1e-11);
    const auto c = combined_step(X, model, obs, dt, dW);
    const auto d = combined_step(X, model, as_generic(obs), dt, dW);
    for (std::size_t i = 0; i < 2 * N; ++i) CHECK(std::abs(c.first.data()[i] - d.first.data()[i]) <= 1e-11);
  }
}

TEST_CASE("negative diffusion diagonals are rejected") {
  std::mt19937_64 g(46);
  const std::size_t N = 50;
  const Ensemble X(oracle::normals(g, N));
  const auto dW = increments(N, 0.01, 5);
  auto p = StepProposal::make(X, constant_model(0.0, 1.0), 0.01, dW);
  p.diffusion[7] = -1.0;
  CHECK_THROWS_AS(individual_step(X, p, ObservableSet::monomials(2)), InvalidDiffusion);
}

TEST_CASE("proposal validation") {
  const Ensemble X(std::vector<double>{0.0, 1.0, 2.0});
  SdeModel bad = constant_model(0.0, 1.0);
  bad.drift = [](std::span<const double>, std::span<double> o) {
    for (double& v : o) v = 0.0;
    o[1] = std::nan("");
  };
  CHECK_THROWS_AS(StepProposal::make(X, bad, 0.1, std::vector<double>(3, 0.0)), NumericError);
  CHECK_THROWS_AS(StepProposal::make(X, constant_model(0.0, 1.0), 0.1, std::vector<double>(2, 0.0)), InvalidInput);
  CHECK_THROWS_AS(StepProposal::make(X, constant_model(0.0, 1.0), -0.1, std::vector<double>(3, 0.0)), InvalidInput);
}

TEST_CASE("Euler integration matches a hand-written loop") {
  std::mt19937_64 g(47);
  const std::size_t N = 64, NT = 50;
  const auto x0 = oracle::normals(g, N, 0.5, 0.1);
  const OuParams ou;
  IntegrateOptions opt;
  opt.seed = 9;
  opt.run = 2;
  opt.tracked = ObservableSet::monomials(2);
  opt.record_steps = {0, 25, 50};
  const double T = 0.5;
  const auto res = integrate(ou_model(ou), Ensemble(x0), T, NT, opt);

  std::vector<double> x = x0, z(N);
  const double dt = T / NT;
  const NoiseStream ns(9, 2);
  std::vector<std::vector<double>> snaps{x};
  for (std::size_t s = 0; s < NT; ++s) {
    ns.fill(static_cast<std::uint32_t>(s), NoisePurpose::increment, z);
    for (std::size_t n = 0; n < N; ++n) x[n] += (ou.f - ou.g * x[n]) * dt + ou.b * std::sqrt(dt) * z[n];
    if (s + 1 == 25) snaps.push_back(x);
  }
  snaps.push_back(x);
  for (std::size_t n = 0; n < N; ++n) CHECK(res.final.data()[n] == doctest::Approx(x[n]).epsilon(1e-13));
  REQUIRE(res.snapshots.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(res.snapshots[k].step == opt.record_steps[k]);
    CHECK(res.snapshots[k].t == doctest::Approx(opt.record_steps[k] * dt));
    CHECK(res.snapshots[k].values[1] == doctest::Approx(oracle::raw_moment(snaps[k], 2)).epsilon(1e-12));
  }
  CHECK(res.retried_steps.empty());
}

TEST_CASE("POS integration keeps the optimized moments on the moment ODE") {
  std::mt19937_64 g(48);
  const std::size_t N = 1000, NT = 20;
  auto X0 = optimize_initial(Ensemble(oracle::normals(g, N, 1.0, 0.1)),
                             ObservableSet::monomials(4, normal_moments(4, 1.0, 0.1))).first;
  for (Method method : {Method::combined, Method::individual}) {
    IntegrateOptions opt;
    opt.method = method;
    opt.optimized = ObservableSet::monomials(4);
    opt.verify_residuals = true;
    opt.record_steps = {NT};
    const auto res = integrate(constant_model(0.5, 0.5), X0, 0.02, NT, opt);
    CHECK(res.retried_steps.empty());
    CHECK(res.mean_iterations >= 1.0);
    CHECK(res.mean_distance > 0.0);
    if (method == Method::individual) CHECK(res.max_noise_residual <= 1e-12);

    // mean follows x0 + a t exactly for constant drift
    CHECK(raw_moments(res.final, 1)[0] == doctest::Approx(1.0 + 0.5 * 0.02).epsilon(1e-12));
  }
}

TEST_CASE("a step that cannot be optimized raises StepFailure") {
  std::mt19937_64 g(49);
  IntegrateOptions opt;
  opt.method = Method::combined;
  opt.optimized = ObservableSet::monomials(8);
  opt.cfg.i_max = 1;
  try {
    integrate(cubic_model(), Ensemble(oracle::normals(g, 500)), 0.1, 5, opt);
    FAIL("expected StepFailure");
  } catch (const StepFailure& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("method names") {
  for (Method m : {Method::euler, Method::combined, Method::individual}) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("midpoint"), InvalidInput);
}
