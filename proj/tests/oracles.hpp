#pragma once
// Independent reference computations for the tests. Nothing here calls the
// library's numerics; sums are done in long double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

inline std::vector<double> normals(std::mt19937_64& g, std::size_t n, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (double& x : v) x = d(g);
  return v;
}

inline std::vector<double> uniforms(std::mt19937_64& g, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(g);
  return v;
}

inline long double raw_moment(std::span<const double> x, int m) {
  long double s = 0.0L;
  for (double v : x) s += std::pow(static_cast<long double>(v), m);
  return s / static_cast<long double>(x.size());
}

inline double rel_err(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Mean photon number from the radial steady state: weight
/// exp((n - n^2/2)/b^2) on n >= 0, integrated by adaptive Gauss-Kronrod.
inline double laser_nss_radial(double b) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  // exp(-(n-1)^2 / (2 b^2)) is the same weight up to a constant
  auto w = [b](double n) { return std::exp(-(n - 1.0) * (n - 1.0) / (2.0 * b * b)); };
  const double hi = 1.0 + 40.0 * b;
  double num = 0.0, den = 0.0;
  // split at the peak n = 1 (when inside the domain) and refine in pieces
  std::vector<double> cuts{0.0};
  const int pieces = 64;
  for (int i = 1; i <= pieces; ++i) cuts.push_back(hi * i / pieces);
  if (1.0 < hi) cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], c = cuts[i + 1];
    if (c <= a) continue;
    num += GK::integrate([&](double n) { return n * w(n); }, a, c, 15, 1e-15);
    den += GK::integrate(w, a, c, 15, 1e-15);
  }
  return num / den;
}

}  // namespace oracle
