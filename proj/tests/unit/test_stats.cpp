#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pos/error.hpp"
#include "pos/stats.hpp"

using namespace pos;

namespace {

// Cumulants as coefficients of log M(t), by power-series logarithm:
// if f = 1 + u then (log f)' = f'/f, solved term by term.
std::vector<double> cumulants_by_series(const std::vector<double>& raw) {
  const int M = static_cast<int>(raw.size());
  // f_k = raw_k / k!  (f_0 = 1)
  std::vector<long double> f(M + 1), l(M + 1, 0.0L);
  f[0] = 1.0L;
  long double fact = 1.0L;
  for (int k = 1; k <= M; ++k) {
    fact *= k;
    f[k] = raw[k - 1] / fact;
  }
  // k l_k = k f_k - sum_{j=1}^{k-1} j l_j f_{k-j}
  for (int k = 1; k <= M; ++k) {
    long double s = k * f[k];
    for (int j = 1; j < k; ++j) s -= j * l[j] * f[k - j];
    l[k] = s / k;
  }
  std::vector<double> kappa(M);
  fact = 1.0L;
  for (int k = 1; k <= M; ++k) {
    fact *= k;
    kappa[k - 1] = static_cast<double>(l[k] * fact);
  }
  return kappa;
}

}  // namespace

TEST_CASE("normal moments use the (m-1)!! form") {
  CHECK(normal_moment(1, 2.0) == 0.0);
  CHECK(normal_moment(2, 2.0) == 4.0);
  CHECK(normal_moment(4, 1.0) == 3.0);
  CHECK(normal_moment(6, 1.0) == 15.0);
  CHECK(normal_moment(8, 1.0) == 105.0);
  CHECK(normal_moment(4, 0.5) == doctest::Approx(3.0 / 16.0));
  CHECK_THROWS_AS(normal_moment(0, 1.0), InvalidInput);
  CHECK_THROWS_AS(normal_moment(2, 0.0), InvalidInput);

  const auto m = normal_moments(4, 1.0, 2.0);
  // E(1 + 2Z)^k
  CHECK(m[0] == doctest::Approx(1.0));
  CHECK(m[1] == doctest::Approx(5.0));
  CHECK(m[2] == doctest::Approx(13.0));
  CHECK(m[3] == doctest::Approx(1.0 + 6 * 4 + 3 * 16));
  const auto [e, a] = special_targets(1.0);
  CHECK(e == doctest::Approx(std::exp(0.5)));
  CHECK(a == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)));
}

TEST_CASE("sample moments match long-double sums") {
  std::mt19937_64 g(1);
  const auto x = oracle::normals(g, 3001, 0.4, 1.3);
  const auto raw = raw_moments(x, 8);
  for (int m = 1; m <= 8; ++m) CHECK(oracle::rel_err(raw[m - 1], static_cast<double>(oracle::raw_moment(x, m))) < 1e-13);

  long double mean = oracle::raw_moment(x, 1);
  const auto c = central_moments(x, 6);
  CHECK(c[0] == 0.0);
  for (int m = 2; m <= 6; ++m) {
    long double s = 0;
    for (double v : x) s += std::pow(v - mean, m);
    CHECK(oracle::rel_err(c[m - 1], static_cast<double>(s / x.size())) < 1e-12);
  }
  CHECK_THROWS_AS(raw_moments(std::vector<double>{}, 2), InvalidInput);
  CHECK_THROWS_AS(raw_moments(Ensemble(std::vector<double>{1, 2, 3, 4}, 2, 2), 2), InvalidInput);
}

TEST_CASE("cumulant recursion agrees with the series logarithm") {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = oracle::normals(g, 200, oracle::uniforms(g, 1, -1, 1)[0], 0.5 + trial * 0.02);
    const auto raw = raw_moments(x, 8);
    const auto k1 = cumulants_from_moments(raw);
    const auto k2 = cumulants_by_series(raw);
    for (int m = 0; m < 8; ++m) {
      double scale = 1.0;
      for (int j = 0; j <= m; ++j) scale = std::max(scale, std::pow(std::abs(raw[j]), (m + 1.0) / (j + 1.0)));
      CHECK(std::abs(k1[m] - k2[m]) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("round trips between moment forms") {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = 1 + trial % 8;
    const auto kappa = oracle::uniforms(g, M, -1.0, 1.0);
    const auto raw = moments_from_cumulants(kappa);
    const auto back = cumulants_from_moments(raw);
    double scale = 1.0;
    for (double r : raw) scale = std::max(scale, std::abs(r));
    for (int m = 0; m < M; ++m) CHECK(std::abs(back[m] - kappa[m]) <= 1e-12 * scale);

    const double mean = raw[0];
    const auto central = central_from_raw(raw);
    const auto raw2 = raw_from_central(mean, central);
    for (int m = 0; m < M; ++m) CHECK(std::abs(raw2[m] - raw[m]) <= 1e-12 * scale);
  }
  // Gaussian: cumulants beyond the second vanish
  const auto k = cumulants_from_moments(normal_moments(8, 0.7, 1.1));
  CHECK(k[0] == doctest::Approx(0.7));
  CHECK(k[1] == doctest::Approx(1.21));
  for (int m = 2; m < 8; ++m) CHECK(std::abs(k[m]) < 1e-12);
}

TEST_CASE("sample cumulants of a shifted sample") {
  std::mt19937_64 g(4);
  auto x = oracle::normals(g, 1000);
  auto y = x;
  for (double& v : y) v += 5.0;
  const auto kx = sample_cumulants(x, 6), ky = sample_cumulants(y, 6);
  CHECK(ky[0] == doctest::Approx(kx[0] + 5.0));
  for (int m = 1; m < 6; ++m) CHECK(std::abs(kx[m] - ky[m]) < 1e-11);
}

TEST_CASE("normalized errors") {
  // exact sample: +-1 gives moments 0, 1, 0, 1
  const Ensemble X(std::vector<double>{1.0, -1.0, 1.0, -1.0});
  const auto r = normalized_static_error(X, {0.0, 1.0, 0.0, 3.0}, 1.0, 4);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[3] == doctest::Approx(2.0 / std::sqrt(24.0 / 4.0)));
  CHECK(normalized_special_error(0.5, 100) == doctest::Approx(0.05));
  CHECK(normalized_special_error(0.5, 100, SpecialScaling::multiply_sqrt_n) == doctest::Approx(5.0));
  CHECK(cost_metric(2.0, 0.1) == doctest::Approx(0.02));
  CHECK_THROWS_AS(relative_distance(std::vector<double>{3, 4}, std::vector<double>{0, 0}), InvalidInput);
  CHECK(relative_distance(std::vector<double>{1, 1}, std::vector<double>{1, 0}) == doctest::Approx(1.0));
}

TEST_CASE("percentiles, medians and geometric means") {
  CHECK(percentile({4.0}, 10) == 4.0);
  CHECK(percentile({4.0}, 90) == 4.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(percentile({0.0, 10.0}, 25) == 2.5);
  CHECK_THROWS(percentile({}, 50));
  std::size_t zeros = 0;
  const std::vector<double> v{1.0, 100.0, 0.0};
  CHECK(geometric_mean(v, &zeros) == doctest::Approx(10.0));
  CHECK(zeros == 1);
}

TEST_CASE("log histogram excludes zeros") {
  const std::vector<double> v{2e-3, 2e-2, 2e-1, 0.0, 5e-3, 5.0};
  const auto h = log_histogram(v, 1e-4, 1.0, 4);
  CHECK(h.zeros == 1);
  CHECK(h.edges.size() == 5);
  CHECK(h.edges.front() == doctest::Approx(1e-4));
  CHECK(h.edges.back() == doctest::Approx(1.0));
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  CHECK(total == 5);
  CHECK(h.counts[0] == 0);
  CHECK(h.counts[1] == 2);
  CHECK(h.counts[2] == 1);
  CHECK(h.counts[3] == 2);  // 5.0 is clamped into the last bin
}

TEST_CASE("line fits recover synthetic exponents") {
  std::vector<double> x, y;
  for (double n : {100.0, 316.0, 1000.0, 3162.0, 10000.0}) {
    x.push_back(n);
    y.push_back(3.0 * std::pow(n, -0.5));
  }
  const auto f = fit_loglog(x, y);
  CHECK(std::abs(f.slope + 0.5) < 1e-6);
  CHECK(f.intercept == doctest::Approx(std::log10(3.0)));
  CHECK(f.slope_lo <= f.slope);
  CHECK(f.slope_hi >= f.slope);
  CHECK(f.points == 5);

  // noisy line: the CI covers the true slope
  std::mt19937_64 g(9);
  std::vector<double> xs, ys;
  for (int i = 0; i < 40; ++i) {
    xs.push_back(i);
    ys.push_back(2.0 * i + 1.0 + oracle::normals(g, 1, 0.0, 0.5)[0]);
  }
  const auto fl = fit_line(xs, ys);
  CHECK(fl.slope_lo < 2.0);
  CHECK(fl.slope_hi > 2.0);
  CHECK_THROWS(fit_line(std::vector<double>{1.0}, std::vector<double>{1.0}));
}
