#include "pos/static_pos.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "pos/kernels.hpp"
#include "poly_ops.hpp"

namespace pos {

namespace {

// A residual within this many ulps of the observable's magnitude is pure
// rounding; iterating further cannot reduce it.
constexpr double kFloorUlps = 64.0;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidInput("eta must be positive");
  if (i_max < 1) throw InvalidInput("i_max must be at least 1");
  if (max_restarts < 0) throw InvalidInput("max_restarts must be non-negative");
  if (!(svd_cutoff > 0.0 && svd_cutoff < 1.0)) throw InvalidInput("svd_cutoff must lie in (0, 1)");
  if (!(min_rcond > 0.0)) throw InvalidInput("min_rcond must be positive");
  if (!(tolerance > 0.0)) throw InvalidInput("tolerance must be positive");
}

DenseMatrix jacobian(const Ensemble& X, const ObservableSet& obs) {
  if (X.dim() != obs.dim()) throw InvalidInput("observable dimension does not match the ensemble");
  return detail::dense_jacobian(obs, X.data(), X.n_samples());
}

ProjectionResult project_to_targets(std::span<double> data, std::size_t n, const ObservableSet& obs,
                                    std::span<const double> targets, const OptimizerConfig& cfg) {
  cfg.validate();
  const std::size_t M = obs.size();
  if (n == 0 || data.size() != n * obs.dim()) throw InvalidInput("ensemble block does not match the observables");
  if (targets.size() != M) throw InvalidInput("one target per observable required");

  const auto& k = kernels::active();
  const bool fast = cfg.fast_path && obs.kind() != ObservableSet::Kind::generic;
  const double eps = std::numeric_limits<double>::epsilon();

  const std::vector<double> absmean = obs.abs_means(data, n);
  std::vector<double> floor(M), scale(M);
  for (std::size_t m = 0; m < M; ++m) {
    floor[m] = kFloorUlps * eps * std::max(absmean[m], std::abs(targets[m]));
    scale[m] = std::max({1.0, std::abs(targets[m]), absmean[m]});
  }

  ProjectionResult res;
  std::vector<double> r(M);
  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  bool small_step = false;

  for (int it = 0;; ++it) {
    detail::MeansAndGram mg;
    DenseMatrix J;
    if (fast) {
      mg = detail::poly_means_and_gram(obs, data, n);
    } else {
      J = detail::dense_jacobian(obs, data, n);
      mg.means = obs.sample_means(data, n);
      mg.gram = gram(J);
    }

    bool at_floor = true, finite = true;
    res.final_residual = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      r[m] = targets[m] - mg.means[m];
      if (!std::isfinite(r[m])) finite = false;
      if (std::abs(r[m]) > floor[m]) at_floor = false;
      res.final_residual = std::max(res.final_residual, std::abs(r[m]) / scale[m]);
    }
    if (!finite) {
      res.status = AttemptStatus::divergence;
      return res;
    }
    const bool within_tol = res.final_residual <= cfg.tolerance;
    if (at_floor || (small_step && within_tol)) {
      res.status = AttemptStatus::converged;
      return res;
    }

    const double rn = norm2(r);
    rising = (rn > prev) ? rising + 1 : 0;
    prev = rn;
    if (rising >= 2 && !within_tol) {
      res.status = AttemptStatus::divergence;
      return res;
    }
    if (it >= cfg.i_max) {
      res.status = AttemptStatus::non_convergence;
      return res;
    }

    double step2 = 0.0;
    try {
      const MxmSolution y = solve_mxm(mg.gram, r, cfg.min_rcond);
      if (fast) {
        step2 = detail::poly_apply_update(obs, data, n, y.x);
      } else {
        const std::vector<double> dx = J.apply_transpose(y.x);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += dx[i];
        step2 = k.sum_squares(dx.data(), dx.size());
      }
    } catch (const SingularGram& e) {
      if (!cfg.svd_fallback) {
        res.status = AttemptStatus::singular;
        res.rcond = e.rcond();
        return res;
      }
      if (fast) J = detail::dense_jacobian(obs, data, n);
      const std::vector<double> dx = svd_pinv_apply(J, r, cfg.svd_cutoff);
      for (std::size_t i = 0; i < data.size(); ++i) data[i] += dx[i];
      step2 = k.sum_squares(dx.data(), dx.size());
      res.used_svd = true;
    }
    ++res.iterations;
    if (cfg.observer) cfg.observer(res.iterations, data);

    const double xn = k.sum_squares(data.data(), data.size());
    small_step = std::sqrt(step2) < cfg.eta * std::sqrt(xn);
  }
}

std::pair<Ensemble, AttemptReport> try_optimize_initial(const Ensemble& X0, const ObservableSet& obs,
                                                        const OptimizerConfig& cfg,
                                                        const Resampler& resample) {
  if (X0.dim() != obs.dim()) throw InvalidInput("observable dimension does not match the ensemble");
  if (!obs.has_targets()) throw InvalidInput("observable set has no targets");
  const auto t0 = std::chrono::steady_clock::now();
  AttemptReport rep;
  Ensemble start = X0;
  Ensemble X = start;
  for (int attempt = 0;; ++attempt) {
    X = start;
    const ProjectionResult pr =
        project_to_targets(X.mutable_data(), X.n_samples(), obs, obs.targets(), cfg);
    rep.iterations = pr.iterations;
    rep.status = pr.status;
    rep.used_svd = rep.used_svd || pr.used_svd;
    rep.final_residual = pr.final_residual;
    rep.rcond = pr.rcond;
    const bool retry = pr.status == AttemptStatus::divergence &&
                       cfg.divergence_policy == DivergencePolicy::backtrack_resample && resample &&
                       attempt < cfg.max_restarts;
    if (!retry) break;
    start = resample(attempt + 1);
    if (start.dim() != X0.dim()) throw InvalidInput("resampled ensemble has the wrong dimension");
    rep.restarts = attempt + 1;
  }
  rep.converged = rep.status == AttemptStatus::converged;
  bool finite = true;
  for (double v : X.data()) finite = finite && std::isfinite(v);
  const auto& k = kernels::active();
  const double ref = k.sum_squares(start.data().data(), start.size());
  if (finite) {
    const double diff = k.diff_sum_squares(X.data().data(), start.data().data(), X.size());
    rep.distance = ref > 0.0 ? std::sqrt(diff / ref) : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  } else {
    // a blown-up iterate is never handed out; the caller gets the last start
    X = start;
    rep.distance = std::numeric_limits<double>::infinity();
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(X), std::move(rep)};
}

std::pair<Ensemble, AttemptReport> optimize_initial(const Ensemble& X0, const ObservableSet& obs,
                                                    const OptimizerConfig& cfg,
                                                    const Resampler& resample) {
  auto out = try_optimize_initial(X0, obs, cfg, resample);
  switch (out.second.status) {
    case AttemptStatus::converged: break;
    case AttemptStatus::non_convergence: throw NonConvergence(out.second);
    case AttemptStatus::divergence: throw Divergence(out.second);
    case AttemptStatus::singular: throw SingularGram(out.second.rcond);
  }
  return out;
}

}  // namespace pos
