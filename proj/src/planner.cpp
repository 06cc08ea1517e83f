#include "pos/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pos/error.hpp"

namespace pos {

double total_error(double p, double c, double sigma, double n_samples, double n_steps) {
  return c * std::pow(n_steps, -p) + sigma / std::sqrt(n_samples);
}

double effective_order(double p) {
  if (!(p > 0.0)) throw InvalidInput("order p must be positive");
  if (std::isinf(p)) return 0.5;
  return p / (2.0 * p + 1.0);
}

ResourcePlan optimal_split(double p, double c, double sigma, std::uint64_t budget) {
  for (double v : {p, c, sigma})
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("p, c and sigma must be positive and finite");
  if (budget == 0) throw InvalidInput("budget N must be positive");

  ResourcePlan r;
  r.p = p;
  r.c = c;
  r.sigma = sigma;
  r.budget = budget;
  const double N = static_cast<double>(budget);
  const double q = 2.0 * p + 1.0;
  r.n_samples_real = std::pow(N, 2.0 * p / q) * std::pow(sigma / (2.0 * p * c), 2.0 / q);
  r.n_steps_real = N / r.n_samples_real;
  r.eps_T = c * std::pow(r.n_steps_real, -p);
  r.eps_S = sigma / std::sqrt(r.n_samples_real);
  r.ratio = r.eps_T / r.eps_S;
  r.eps_total = std::pow(2.0 * p * c * std::pow(sigma, 2.0 * p) / std::pow(N, p), 1.0 / q) * (1.0 + 1.0 / (2.0 * p));

  // nearest lattice points that respect N_S N_T <= N <= N_S N_T + max(N_S, N_T)
  auto valid = [&](std::uint64_t s, std::uint64_t t) {
    if (s == 0 || t == 0) return false;
    const double prod = static_cast<double>(s) * static_cast<double>(t);
    return prod <= N && N <= prod + static_cast<double>(std::max(s, t));
  };
  auto clamp1 = [](double v) { return static_cast<std::uint64_t>(std::max(1.0, v)); };
  const std::uint64_t s_lo = clamp1(std::floor(r.n_samples_real)), s_hi = clamp1(std::ceil(r.n_samples_real));
  const std::uint64_t t_lo = clamp1(std::floor(r.n_steps_real)), t_hi = clamp1(std::ceil(r.n_steps_real));
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t s : {s_lo, s_hi})
    for (std::uint64_t t : {t_lo, t_hi}) {
      if (!valid(s, t)) continue;
      const double e = total_error(p, c, sigma, static_cast<double>(s), static_cast<double>(t));
      if (e < best) {
        best = e;
        r.n_samples = s;
        r.n_steps = t;
      }
    }
  if (!std::isfinite(best)) {
    r.n_samples = std::min<std::uint64_t>(budget, clamp1(std::round(r.n_samples_real)));
    r.n_steps = std::max<std::uint64_t>(1, budget / r.n_samples);
  }
  r.eps_rounded = total_error(p, c, sigma, static_cast<double>(r.n_samples), static_cast<double>(r.n_steps));
  return r;
}

}  // namespace pos
