#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pos/ensemble.hpp"
#include "pos/observables.hpp"
#include "pos/static_pos.hpp"

namespace pos {

/// dx = a(x) dt + b(x) dw with <dw_i dw_j> = delta_ij dt.
///
/// Drift and diffusion are evaluated on a whole sample-major block at once:
/// drift maps N*d inputs to N*d outputs, diffusion to N*d*q (row-major d x q
/// per sample).
struct SdeModel {
  std::string label;
  std::size_t dim = 1;
  std::size_t noise_dim = 1;
  std::function<void(std::span<const double>, std::span<double>)> drift;
  std::function<void(std::span<const double>, std::span<double>)> diffusion;
};

/// Everything an Euler step needs, evaluated at the pre-step ensemble.
struct StepProposal {
  std::size_t n_samples = 0, dim = 0, noise_dim = 0;
  double dt = 0.0;
  std::vector<double> drift;            ///< A: N*d
  std::vector<double> noise_matrix;     ///< B: N*d*q, one d x q block per sample
  std::vector<double> raw_noise;        ///< dW: N*q
  std::vector<double> effective_noise;  ///< dV = B dW: N*d
  std::vector<double> diffusion;        ///< D = b b^T: N*d*d

  /// Throws InvalidInput on shape mismatch, NumericError naming the first
  /// sample with non-finite drift or diffusion.
  static StepProposal make(const Ensemble& X, const SdeModel& model, double dt,
                           std::span<const double> dW);

  /// X + A dt + dV
  Ensemble euler(const Ensemble& X) const;
};

Ensemble euler_step(const Ensemble& X, const SdeModel& model, double dt, std::span<const double> dW);

/// c_m = o_m(X) + < grad o_m . a + 1/2 H_m : b b^T > dt
std::vector<double> ideal_moment_changes(const Ensemble& X, const SdeModel& model,
                                         const ObservableSet& obs, double dt);

/// Euler proposal corrected so the observable means equal
/// ideal_moment_changes(X). Report distance is |X_opt - X_euler| / |X_euler - X|.
std::pair<Ensemble, AttemptReport> combined_step(const Ensemble& X, const SdeModel& model,
                                                 const ObservableSet& obs, double dt,
                                                 std::span<const double> dW,
                                                 const OptimizerConfig& cfg = {});

/// Residuals of the two noise conditions of the individual method.
struct NoiseResiduals {
  std::vector<double> e1;  ///< J dV
  std::vector<double> e2;  ///< 1/2 H : (dV dV^T - D dt)
  /// Per-observable sums of the absolute terms entering e1 and e2; rounding
  /// error in e1, e2 is a small multiple of eps times these.
  std::vector<double> e1_scale, e2_scale;
};

NoiseResiduals noise_residuals(const Ensemble& X, const StepProposal& p, const ObservableSet& obs,
                               std::span<const double> dV);

/// max_m (|e1_m| + |e2_m|) / max(sqrt(dt), e1_scale_m + e2_scale_m): the
/// residual relative to sqrt(dt) times the size of the terms that cancel.
double noise_residual_norm(const NoiseResiduals& r, double dt);

/// Optimizes the effective noise so that J dV = 0 and H:(dV dV^T - D dt) = 0,
/// then returns X + A dt + dV. Report distance is |dV_opt - dV| / |dV|.
/// Throws InvalidDiffusion when some D has a negative diagonal entry.
std::pair<Ensemble, AttemptReport> individual_step(const Ensemble& X, const SdeModel& model,
                                                   const ObservableSet& obs, double dt,
                                                   std::span<const double> dW,
                                                   const OptimizerConfig& cfg = {});

/// Same, starting from a prepared proposal (lets callers supply their own D).
std::pair<Ensemble, AttemptReport> individual_step(const Ensemble& X, const StepProposal& proposal,
                                                   const ObservableSet& obs,
                                                   const OptimizerConfig& cfg = {});

/// Outcome of one optimized step, failures included (status in the report).
struct StepResult {
  Ensemble X;
  AttemptReport rep;
  /// optimized effective noise (individual method only)
  std::vector<double> dv;
};

/// Non-throwing variants for benchmarking: the result holds the last finite
/// iterate even when the optimizer did not converge.
StepResult try_combined_step(const Ensemble& X, const StepProposal& proposal, const ObservableSet& obs,
                             const OptimizerConfig& cfg = {});
StepResult try_individual_step(const Ensemble& X, const StepProposal& proposal, const ObservableSet& obs,
                               const OptimizerConfig& cfg = {});

enum class Method { euler, combined, individual };

const char* to_string(Method m) noexcept;
/// Throws InvalidInput.
Method method_from_string(const std::string& s);

/// A step whose optimization failed even after the half-step retry.
class StepFailure : public NumericError {
 public:
  StepFailure(std::size_t step, const std::string& cause)
      : NumericError("step " + std::to_string(step) + " failed: " + cause), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct IntegrateOptions {
  Method method = Method::euler;
  /// Observables kept exact by the POS methods (targets are ignored).
  ObservableSet optimized;
  /// Observables whose means are recorded in the snapshots.
  ObservableSet tracked;
  OptimizerConfig cfg;
  /// Step indices (0..N_T) at which to record; empty records only N_T.
  std::vector<std::size_t> record_steps;
  std::uint64_t seed = 0;
  std::uint32_t run = 0;
  /// Check the individual-method noise conditions after every step against
  /// cfg.tolerance (throws StepFailure on violation).
  bool verify_residuals = false;
};

struct Snapshot {
  std::size_t step = 0;
  double t = 0.0;
  std::vector<double> values;  ///< means of IntegrateOptions::tracked
};

struct IntegrateResult {
  std::vector<Snapshot> snapshots;
  std::vector<std::size_t> retried_steps;
  Ensemble final;
  double mean_distance = 0.0;
  double mean_iterations = 0.0;
  /// Largest normalized noise residual over all individual steps.
  double max_noise_residual = 0.0;
};

/// Fixed-step integration from X0 to T with dt = T / N_T. Noise for step s is
/// drawn from NoiseStream(seed, run) at (s, increment), so every method sees
/// identical increments. A step whose optimization fails is retried once as
/// two half steps joined by a Brownian bridge; a second failure throws
/// StepFailure.
IntegrateResult integrate(const SdeModel& model, const Ensemble& X0, double T, std::size_t n_steps,
                          const IntegrateOptions& opt);

}  // namespace pos
