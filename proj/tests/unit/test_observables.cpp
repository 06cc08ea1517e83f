#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pos/error.hpp"
#include "pos/observables.hpp"

using namespace pos;

namespace {

// Central differences of value (for the gradient) and of gradient (for the
// Hessian), compared at a relative 1e-6.
void check_derivatives(const ObservableSet& set, std::mt19937_64& g) {
  const std::size_t d = set.dim();
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::uniforms(g, d, -1.3, 1.3);
    for (std::size_t m = 0; m < set.size(); ++m) {
      CAPTURE(set.name(m));
      std::vector<double> grad(d), hess(d * d), gp(d), gm(d);
      set.gradient(m, x, grad);
      set.hessian(m, x, hess);
      for (std::size_t i = 0; i < d; ++i) {
        const double h = 1e-5;
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (set.value(m, xp) - set.value(m, xm)) / (2 * h);
        CHECK(oracle::rel_err(grad[i], fd) < 1e-6);
        set.gradient(m, xp, gp);
        set.gradient(m, xm, gm);
        for (std::size_t j = 0; j < d; ++j) CHECK(oracle::rel_err(hess[j * d + i], (gp[j] - gm[j]) / (2 * h)) < 1e-6);
      }
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) CHECK(hess[i * d + j] == hess[j * d + i]);
    }
  }
}

}  // namespace

TEST_CASE("derivatives agree with finite differences") {
  std::mt19937_64 g(21);
  check_derivatives(ObservableSet::monomials(8), g);
  check_derivatives(ObservableSet::powers({1, 3, 6}), g);
  check_derivatives(ObservableSet::cross_moments({{1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 2}, {0, 4}}), g);

  Observable ex{"exp", [](std::span<const double> x) { return std::exp(x[0] * x[1]); },
                [](std::span<const double> x, std::span<double> o) {
                  const double e = std::exp(x[0] * x[1]);
                  o[0] = x[1] * e;
                  o[1] = x[0] * e;
                },
                [](std::span<const double> x, std::span<double> o) {
                  const double e = std::exp(x[0] * x[1]);
                  o[0] = x[1] * x[1] * e;
                  o[1] = o[2] = (1 + x[0] * x[1]) * e;
                  o[3] = x[0] * x[0] * e;
                }};
  check_derivatives(ObservableSet::generic(2, {ex}).scaled(std::vector<double>{2.5}), g);
  check_derivatives(ObservableSet::monomials(4).scaled(std::vector<double>{1.0, -2.0, 0.5, 3.0}), g);
}

TEST_CASE("sample means match direct sums") {
  std::mt19937_64 g(22);
  const std::size_t N = 777;
  const auto data = oracle::normals(g, 2 * N, 0.2, 0.9);
  const auto set = ObservableSet::cross_moments({{1, 0}, {2, 1}, {0, 3}, {4, 4}});
  const auto means = set.sample_means(data, N);
  const auto am = set.abs_means(data, N);
  for (std::size_t m = 0; m < set.size(); ++m) {
    const auto [a, b] = set.exponent(m);
    long double s = 0, sa = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const long double v = std::pow(static_cast<long double>(data[2 * n]), a) * std::pow(static_cast<long double>(data[2 * n + 1]), b);
      s += v;
      sa += std::abs(v);
    }
    CHECK(oracle::rel_err(means[m], static_cast<double>(s / N)) < 1e-13);
    CHECK(oracle::rel_err(am[m], static_cast<double>(sa / N)) < 1e-13);
  }
  CHECK(set.degree() == 8);
  CHECK(set.kind() == ObservableSet::Kind::cross_moment);

  const auto x = oracle::normals(g, N);
  const auto mono = ObservableSet::monomials(5).scaled(std::vector<double>{1, 2, 3, 4, 5});
  const auto mm = mono.sample_means(Ensemble(x));
  for (int m = 1; m <= 5; ++m) CHECK(oracle::rel_err(mm[m - 1], m * static_cast<double>(oracle::raw_moment(x, m))) < 1e-13);
}

TEST_CASE("scaling multiplies targets as well") {
  auto set = ObservableSet::monomials(3, {0.0, 1.0, 0.0});
  const auto s = set.scaled(std::vector<double>{2.0, 3.0, 4.0});
  CHECK(s.targets()[1] == 3.0);
  CHECK(s.factor(2) == 4.0);
  CHECK(s.value(1, std::vector<double>{2.0}) == 12.0);
  CHECK_THROWS_AS(set.scaled(std::vector<double>{1.0, 0.0, 1.0}), InvalidInput);
  CHECK_THROWS_AS(set.scaled(std::vector<double>{1.0}), InvalidInput);
}

TEST_CASE("invalid sets are rejected") {
  CHECK_THROWS_AS(ObservableSet::monomials(0), InvalidInput);
  CHECK_THROWS_AS(ObservableSet::powers({0}), InvalidInput);
  CHECK_THROWS_AS(ObservableSet::cross_moments({{0, 0}}), InvalidInput);
  CHECK_THROWS_AS(ObservableSet::generic(1, {Observable{"x", nullptr, nullptr, nullptr}}), InvalidInput);
  auto set = ObservableSet::monomials(2);
  CHECK_FALSE(set.has_targets());
  CHECK_THROWS_AS(set.set_targets({1.0}), InvalidInput);
  CHECK_THROWS_AS(set.set_targets({1.0, std::nan("")}), InvalidInput);
  set.set_targets({0.0, 1.0});
  CHECK(set.has_targets());
  CHECK_THROWS_AS(set.sample_means(Ensemble(std::vector<double>{1, 2, 3, 4}, 2, 2)), InvalidInput);
}
