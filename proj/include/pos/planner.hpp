#pragma once

#include <cstdint>

namespace pos {

struct ResourcePlan {
  double p = 1.0;      ///< truncation order
  double c = 1.0;      ///< truncation constant: eps_T = c N_T^-p
  double sigma = 1.0;  ///< sampling constant: eps_S = sigma N_S^-1/2
  std::uint64_t budget = 0;
  double n_samples_real = 0.0;
  double n_steps_real = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t n_steps = 0;
  /// error model at the continuous optimum
  double eps_T = 0.0;
  double eps_S = 0.0;
  double eps_total = 0.0;
  /// eps_T / eps_S at the continuous optimum (= 1/(2p))
  double ratio = 0.0;
  /// error model at the rounded integers
  double eps_rounded = 0.0;
};

/// c N_T^-p + sigma N_S^-1/2
double total_error(double p, double c, double sigma, double n_samples, double n_steps);

/// Split a budget N = N_S N_T to minimize total_error. Throws InvalidInput on
/// non-positive or non-finite inputs.
ResourcePlan optimal_split(double p, double c, double sigma, std::uint64_t budget);

/// p / (2p + 1)
double effective_order(double p);

}  // namespace pos
