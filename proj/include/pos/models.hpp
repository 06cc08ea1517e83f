#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pos/dynamic_pos.hpp"
#include "pos/observables.hpp"
#include "pos/stats.hpp"

namespace pos {

struct OuParams {
  double f = 1.0;
  double g = 0.2;
  double b = 0.5;
  double init_mean = 0.5;
  double init_std = 0.1;
};

/// dx = (f - g x) dt + b dw
SdeModel ou_model(const OuParams& p = {});
/// dx = (x - x^3) dt + dw
SdeModel cubic_model();
/// dx = x (1 - |x|) dt + dw
SdeModel irregular_model();
/// Laser equation in real form: d(x,y) = (1 - x^2 - y^2)(x,y) dt + b (dw1, dw2)
SdeModel laser_model(double b);
/// dx = a dt + b dw with constant a, b in every coordinate.
SdeModel constant_model(double a, double b, std::size_t dim = 1);

/// Named models with their default parameters (OU, cubic, irregular, laser at b = 1).
std::vector<SdeModel> model_catalog();

struct OuExact {
  MomentVector raw;
  MomentVector cumulants;
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact raw moments and cumulants 1..M at time t for a Gaussian start.
OuExact ou_exact_moments(const OuParams& p, double t, int M);

/// Unnormalized stationary density e^{l(x)} on [-L, L].
struct SteadyStateWeight {
  std::function<double(double)> log_weight;
  double half_width = 6.0;
  /// Gauss-Legendre panels per half line.
  std::size_t panels = 64;
};

/// l(x) = x^2 - x^4/2, L = 6
SteadyStateWeight cubic_weight();
/// l(x) = x^2 - (2/3)|x|^3, L = 8
SteadyStateWeight irregular_weight();

/// <f>_ss by composite Gauss-Legendre quadrature (20 nodes per panel, split at
/// 0). Throws InvalidInput when the weight at +-L is not negligible.
double steady_state_expectation(const SteadyStateWeight& w, const std::function<double(double)>& f);

/// 1 + sqrt(2/pi) b / (exp(1/(2b^2)) (1 + erf(1/(sqrt2 b))))
double laser_nss(double b);

/// All x^n y^m with 1 <= n+m <= 4 plus the mixed fifth-order moments
/// (1,4), (2,3), (3,2), (4,1): 18 observables.
ObservableSet laser_observables();
/// Only the 14 moments with 1 <= n+m <= 4.
ObservableSet laser_observables_degree4();

/// Raw moments of N(0, s^2) x N(0, s^2) for the given exponent pairs.
std::vector<double> isotropic_normal_cross_moments(const ObservableSet& obs, double s);

/// x^1..x^M, e^x and |x| as a generic set (for recording).
ObservableSet moments_exp_abs(int M);

}  // namespace pos
