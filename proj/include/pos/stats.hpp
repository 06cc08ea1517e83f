#pragma once

// Moments, cumulants, error normalizations and the summary statistics used by
// the benchmarks. Every reduction over samples goes through the pairwise
// kernels, so results depend only on the input and the selected kernel table.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pos/ensemble.hpp"

namespace pos {

/// values[m-1] is the m-th moment (raw, central or cumulant depending on use).
using MomentVector = std::vector<double>;

enum class AttemptStatus { converged, non_convergence, divergence, singular };

const char* to_string(AttemptStatus s) noexcept;

struct AttemptReport {
  std::vector<double> normalized_errors;
  int iterations = 0;
  double distance = 0.0;
  double wall_seconds = 0.0;
  bool converged = false;
  AttemptStatus status = AttemptStatus::converged;
  int restarts = 0;
  bool used_svd = false;
  /// max_m |o_m - target_m| / scale_m at exit
  double final_residual = 0.0;
  /// condition estimate when status == singular
  double rcond = 0.0;
};

/// (1/N) sum_n x_n^m for m = 1..M. X must be one-dimensional.
MomentVector raw_moments(const Ensemble& X, int M);
MomentVector raw_moments(std::span<const double> x, int M);

/// Moments about the sample mean: entry 1 is 0 (exactly), entry 2 the biased
/// sample variance.
MomentVector central_moments(std::span<const double> x, int M);

/// 0 for odd m, sigma^m (m-1)!! for even m.
double normal_moment(int m, double sigma);

/// Moments 1..M of N(mean, sigma^2).
MomentVector normal_moments(int M, double mean, double sigma);

/// (exp(sigma^2/2), sigma sqrt(2/pi)): expectations of e^x and |x| for N(0, sigma^2).
std::pair<double, double> special_targets(double sigma);

MomentVector raw_from_central(double mean, const MomentVector& central);
MomentVector central_from_raw(const MomentVector& raw);

MomentVector cumulants_from_moments(const MomentVector& raw);
MomentVector moments_from_cumulants(const MomentVector& kappa);

/// Cumulants of the sample, computed from central moments about the sample
/// mean (better conditioned than going through raw moments).
MomentVector sample_cumulants(std::span<const double> x, int M);

/// How R for the exp/abs observables is scaled.
enum class SpecialScaling {
  divide_sqrt_n,    ///< R~ / sqrt(N_S) (the normalization as usually written)
  multiply_sqrt_n,  ///< R~ * sqrt(N_S) (dimensionally matched to the sampling error)
};

/// R_m = |moment_m - target_m| / (sigma^m sqrt(m!/N_S)) for m = 1..targets.size().
std::vector<double> normalized_static_error(const Ensemble& X, const MomentVector& targets,
                                            double sigma, std::size_t n_samples);

/// Normalization of a single exp/abs observable error.
double normalized_special_error(double r_tilde, std::size_t n_samples,
                                SpecialScaling scaling = SpecialScaling::divide_sqrt_n);

/// |A - B| / |B| in the Euclidean norm.
double relative_distance(const Ensemble& A, const Ensemble& B);
double relative_distance(std::span<const double> a, std::span<const double> b);

/// T_CPU * R~^2
double cost_metric(double wall_seconds, double r_tilde);

/// Linear-interpolated percentile (q in [0,100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

/// Geometric mean of the strictly positive entries; zero_count receives the
/// number of entries that were exactly zero (and excluded).
double geometric_mean(std::span<const double> values, std::size_t* zero_count = nullptr);

struct LogHistogram {
  std::vector<double> edges;  ///< bins+1 edges, log-spaced
  std::vector<std::size_t> counts;
  std::size_t zeros = 0;  ///< zero-valued entries, never binned
};

/// Log-spaced histogram over [lo, hi]; values outside are clamped to the end bins.
LogHistogram log_histogram(std::span<const double> values, double lo, double hi,
                           std::size_t bins);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_lo = 0.0;  ///< 95% confidence interval
  double slope_hi = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares of y on x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// fit_line on (log10 x, log10 y).
LineFit fit_loglog(std::span<const double> x, std::span<const double> y);

}  // namespace pos
