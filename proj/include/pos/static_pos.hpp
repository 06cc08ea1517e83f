#pragma once

#include <functional>
#include <span>
#include <utility>

#include "pos/ensemble.hpp"
#include "pos/error.hpp"
#include "pos/linsolve.hpp"
#include "pos/observables.hpp"
#include "pos/stats.hpp"

namespace pos {

enum class DivergencePolicy { fail, backtrack_resample };

struct OptimizerConfig {
  /// stop once ||dX|| / ||X|| < eta
  double eta = 1e-8;
  int i_max = 50;
  DivergencePolicy divergence_policy = DivergencePolicy::fail;
  int max_restarts = 3;
  /// Fall back to the SVD pseudo-inverse when J J^T is singular.
  bool svd_fallback = true;
  double svd_cutoff = 1e-12;
  double min_rcond = 1e-12;
  /// Success requires |o_m - target_m| <= tolerance * max(1, |target_m|, <|o_m|>).
  double tolerance = 1e-12;
  /// Use the power-sum kernels for polynomial observable sets.
  bool fast_path = true;
  /// Called after every Newton update with the iteration number (1-based)
  /// and the current iterate. Meant for tests and diagnostics.
  std::function<void(int, std::span<const double>)> observer;

  /// Throws InvalidInput.
  void validate() const;
};

/// The iteration limit was hit before the stopping rule fired.
class NonConvergence : public NumericError {
 public:
  explicit NonConvergence(AttemptReport report)
      : NumericError("optimizer did not converge within the iteration limit"),
        report_(std::move(report)) {}
  const AttemptReport& report() const noexcept { return report_; }

 private:
  AttemptReport report_;
};

/// The target residual kept growing (or the iterate blew up).
class Divergence : public NumericError {
 public:
  explicit Divergence(AttemptReport report)
      : NumericError("optimizer diverged"), report_(std::move(report)) {}
  const AttemptReport& report() const noexcept { return report_; }

 private:
  AttemptReport report_;
};

/// J[m, n*d + i] = (1/N) d o_m / d x_i at sample n.
DenseMatrix jacobian(const Ensemble& X, const ObservableSet& obs);

struct ProjectionResult {
  AttemptStatus status = AttemptStatus::converged;
  int iterations = 0;
  bool used_svd = false;
  double final_residual = 0.0;
  /// condition estimate of the failing solve when status == singular
  double rcond = 0.0;
};

/// Newton least-norm iteration X <- X + J^T (J J^T)^{-1} (targets - o(X)),
/// in place on sample-major data. Never throws for numerical trouble; the
/// outcome is reported in the status (SingularGram without fallback is
/// reported as AttemptStatus::singular).
ProjectionResult project_to_targets(std::span<double> data, std::size_t n_samples,
                                    const ObservableSet& obs, std::span<const double> targets,
                                    const OptimizerConfig& cfg);

/// Draws a fresh initial ensemble for restart number k (1-based).
using Resampler = std::function<Ensemble(int)>;

/// Optimize X0 so every observable mean hits obs.targets(). On divergence with
/// the backtrack policy, X0 is replaced by resample(k) for k = 1..max_restarts.
/// Throws NonConvergence, Divergence, or SingularGram (fallback disabled).
std::pair<Ensemble, AttemptReport> optimize_initial(const Ensemble& X0, const ObservableSet& obs,
                                                    const OptimizerConfig& cfg = {},
                                                    const Resampler& resample = {});

/// Same, without throwing: the report carries the failure status and the
/// returned ensemble is the last finite iterate (the starting ensemble if the
/// iteration blew up).
std::pair<Ensemble, AttemptReport> try_optimize_initial(const Ensemble& X0,
                                                        const ObservableSet& obs,
                                                        const OptimizerConfig& cfg = {},
                                                        const Resampler& resample = {});

}  // namespace pos
