#include "pos/dynamic_pos.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <set>

#include "pos/kernels.hpp"
#include "pos/rng.hpp"
#include "kernels/pairwise.hpp"
#include "poly_ops.hpp"

namespace pos {

namespace {

constexpr double kFloorUlps = 64.0;
// largest cross-moment degree whose generator tables fit one pairwise buffer
constexpr int kMaxTableDegree = 8;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double ipow(double x, int e) {
  double r = 1.0;
  for (int k = 0; k < e; ++k) r *= x;
  return r;
}

double ratio_distance(double num2, double den2) {
  if (den2 > 0.0) return std::sqrt(num2 / den2);
  return num2 > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

/// Generator term < grad o_m . a + 1/2 H_m : D > per observable, averaged.
std::vector<double> generator_means(const Ensemble& X, const StepProposal& p,
                                    const ObservableSet& obs) {
  const std::size_t N = p.n_samples, d = p.dim, M = obs.size();
  const auto& k = kernels::active();
  const double inv = 1.0 / static_cast<double>(N);
  std::vector<double> g(M, 0.0);
  const auto x = X.data();

  if (obs.kind() == ObservableSet::Kind::monomial) {
    const int K = obs.degree();
    std::vector<double> S(3 * static_cast<std::size_t>(K + 1));
    const double* w[2] = {p.drift.data(), p.diffusion.data()};
    k.power_sums(x.data(), N, w, 2, K, S.data());
    const double* Sa = S.data();
    const double* Sd = S.data() + (K + 1);
    for (std::size_t m = 0; m < M; ++m) {
      const int e = obs.exponent(m)[0];
      double v = e * Sa[e - 1];
      if (e >= 2) v += 0.5 * e * (e - 1) * Sd[e - 2];
      g[m] = obs.factor(m) * v * inv;
    }
    return g;
  }

  if (obs.kind() == ObservableSet::Kind::cross_moment && obs.degree() <= kMaxTableDegree) {
    // Weighted bivariate power sums: drift channels ax, ay up to order deg-1,
    // diffusion channels D00, (D01+D10)/2, D11 up to order deg-2.
    const int deg = obs.degree();
    const int K1 = deg - 1, K2 = std::max(deg - 2, 0);
    const std::size_t w1 = kernels::tri_size(K1), w2 = kernels::tri_size(K2);
    const std::size_t width = 2 * w1 + 3 * w2;
    static_assert(2 * kernels::tri_size(kMaxTableDegree - 1) + 3 * kernels::tri_size(kMaxTableDegree - 2) <=
                  kernels::detail::kMaxWidth);
    kernels::detail::Pairwise<kernels::detail::kMaxWidth> acc(width);
    double xp[kMaxTableDegree + 1], yp[kMaxTableDegree + 1], mono[kernels::tri_size(kMaxTableDegree)];
    for (std::size_t start = 0; start < N; start += kernels::kBlock) {
      const std::size_t end = std::min(N, start + kernels::kBlock);
      double* t = acc.slot();
      std::fill(t, t + width, 0.0);
      for (std::size_t n = start; n < end; ++n) {
        xp[0] = yp[0] = 1.0;
        for (int q = 1; q <= K1; ++q) {
          xp[q] = xp[q - 1] * x[2 * n];
          yp[q] = yp[q - 1] * x[2 * n + 1];
        }
        std::size_t idx = 0;
        for (int a = 0; a <= K1; ++a)
          for (int b = 0; b <= K1 - a; ++b) mono[idx++] = xp[a] * yp[b];
        const double ax = p.drift[2 * n], ay = p.drift[2 * n + 1];
        const double* D = p.diffusion.data() + 4 * n;
        const double dxy = 0.5 * (D[1] + D[2]);
        for (std::size_t i = 0; i < w1; ++i) {
          t[i] += ax * mono[i];
          t[w1 + i] += ay * mono[i];
        }
        if (deg >= 2) {
          double* td = t + 2 * w1;
          for (int a = 0; a <= K2; ++a)
            for (int b = 0; b <= K2 - a; ++b) {
              const double v = mono[kernels::tri_index(K1, a, b)];
              const std::size_t j = kernels::tri_index(K2, a, b);
              td[j] += D[0] * v;
              td[w2 + j] += dxy * v;
              td[2 * w2 + j] += D[3] * v;
            }
        }
      }
      acc.push();
    }
    std::vector<double> S(width);
    acc.finish(S.data());
    const double* Sx = S.data();
    const double* Sy = Sx + w1;
    const double* D0 = Sx + 2 * w1;
    const double* Dx = D0 + w2;
    const double* D1 = Dx + w2;
    for (std::size_t m = 0; m < M; ++m) {
      const auto [a, b] = obs.exponent(m);
      double v = 0.0;
      if (a >= 1) v += a * Sx[kernels::tri_index(K1, a - 1, b)];
      if (b >= 1) v += b * Sy[kernels::tri_index(K1, a, b - 1)];
      if (a >= 2) v += 0.5 * a * (a - 1) * D0[kernels::tri_index(K2, a - 2, b)];
      if (a >= 1 && b >= 1) v += a * b * Dx[kernels::tri_index(K2, a - 1, b - 1)];
      if (b >= 2) v += 0.5 * b * (b - 1) * D1[kernels::tri_index(K2, a, b - 2)];
      g[m] = obs.factor(m) * v * inv;
    }
    return g;
  }

  // Per-sample terms, then one pairwise sum per observable.
  std::vector<double> terms(M * N);
  if (obs.kind() == ObservableSet::Kind::cross_moment) {
    const int deg = obs.degree();
    std::vector<double> xp(static_cast<std::size_t>(deg + 1)), yp(xp.size());
    for (std::size_t n = 0; n < N; ++n) {
      xp[0] = yp[0] = 1.0;
      for (int q = 1; q <= deg; ++q) {
        xp[q] = xp[q - 1] * x[2 * n];
        yp[q] = yp[q - 1] * x[2 * n + 1];
      }
      const double ax = p.drift[2 * n], ay = p.drift[2 * n + 1];
      const double* D = p.diffusion.data() + 4 * n;
      for (std::size_t m = 0; m < M; ++m) {
        const auto [a, b] = obs.exponent(m);
        double v = 0.0;
        if (a >= 1) v += a * xp[a - 1] * yp[b] * ax;
        if (b >= 1) v += b * xp[a] * yp[b - 1] * ay;
        if (a >= 2) v += 0.5 * a * (a - 1) * xp[a - 2] * yp[b] * D[0];
        if (a >= 1 && b >= 1) v += a * b * xp[a - 1] * yp[b - 1] * 0.5 * (D[1] + D[2]);
        if (b >= 2) v += 0.5 * b * (b - 1) * xp[a] * yp[b - 2] * D[3];
        terms[m * N + n] = obs.factor(m) * v;
      }
    }
  } else {
    std::vector<double> grad(d), hess(d * d);
    for (std::size_t n = 0; n < N; ++n) {
      const auto xn = x.subspan(n * d, d);
      for (std::size_t m = 0; m < M; ++m) {
        obs.gradient(m, xn, grad);
        obs.hessian(m, xn, hess);
        double v = 0.0;
        for (std::size_t i = 0; i < d; ++i) v += grad[i] * p.drift[n * d + i];
        for (std::size_t i = 0; i < d * d; ++i) v += 0.5 * hess[i] * p.diffusion[n * d * d + i];
        terms[m * N + n] = v;
      }
    }
  }
  for (std::size_t m = 0; m < M; ++m) g[m] = k.sum(terms.data() + m * N, N) * inv;
  return g;
}

std::vector<double> ideal_from_proposal(const Ensemble& X, const StepProposal& p,
                                        const ObservableSet& obs) {
  std::vector<double> c = obs.sample_means(X);
  if (p.dt == 0.0) return c;
  const std::vector<double> g = generator_means(X, p, obs);
  for (std::size_t m = 0; m < c.size(); ++m) c[m] += g[m] * p.dt;
  return c;
}

StepResult try_combined(const Ensemble& X, const StepProposal& p, const ObservableSet& obs,
                         const OptimizerConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> c = ideal_from_proposal(X, p, obs);
  const Ensemble Xe = p.euler(X);
  StepResult out{Xe, {}, {}};
  const ProjectionResult pr = project_to_targets(out.X.mutable_data(), p.n_samples, obs, c, cfg);
  out.rep.iterations = pr.iterations;
  out.rep.status = pr.status;
  out.rep.converged = pr.status == AttemptStatus::converged;
  out.rep.used_svd = pr.used_svd;
  out.rep.final_residual = pr.final_residual;
  out.rep.rcond = pr.rcond;
  bool finite = true;
  for (double v : out.X.data()) finite = finite && std::isfinite(v);
  if (!finite) {
    out.X = Xe;
    out.rep.distance = std::numeric_limits<double>::infinity();
  } else {
    const auto& k = kernels::active();
    out.rep.distance = ratio_distance(k.diff_sum_squares(out.X.data().data(), Xe.data().data(), Xe.size()),
                                      k.diff_sum_squares(Xe.data().data(), X.data().data(), X.size()));
  }
  out.rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void check_diffusion(const StepProposal& p) {
  const std::size_t d = p.dim;
  for (std::size_t n = 0; n < p.n_samples; ++n)
    for (std::size_t i = 0; i < d; ++i)
      if (p.diffusion[n * d * d + i * d + i] < 0.0)
        throw InvalidDiffusion("negative diffusion diagonal at sample " + std::to_string(n));
}

/// Newton loop of the individual method on the effective noise v.
/// The residual vector is [e1; e2 (rows with non-zero Hessian)].
struct IndividualState {
  std::vector<double> e1, e2;
  DenseMatrix gram;         // of the doubly extended matrix
  std::vector<std::size_t> brows;
};

class IndividualSolver {
 public:
  IndividualSolver(const Ensemble& X, const StepProposal& p, const ObservableSet& obs)
      : X_(X), p_(p), obs_(obs), N_(p.n_samples), d_(p.dim), M_(obs.size()) {}
  virtual ~IndividualSolver() = default;

  /// Residuals and Gram at v, plus abs-term scales when want_scales.
  virtual IndividualState evaluate(std::span<const double> v, std::vector<double>* s1,
                                   std::vector<double>* s2) = 0;
  /// v += J~^T y; returns |J~^T y|^2.
  virtual double update(std::span<double> v, const IndividualState& st, std::span<const double> y) = 0;
  /// Dense doubly extended matrix (for the SVD fallback).
  virtual DenseMatrix dense(std::span<const double> v, const IndividualState& st) = 0;

 protected:
  const Ensemble& X_;
  const StepProposal& p_;
  const ObservableSet& obs_;
  std::size_t N_, d_, M_;
};

/// 1-D monomials: everything from weighted power sums of x.
class MonomialIndividual final : public IndividualSolver {
 public:
  using IndividualSolver::IndividualSolver;

  IndividualState evaluate(std::span<const double> v, std::vector<double>* s1,
                           std::vector<double>* s2) override {
    const auto& k = kernels::active();
    const int emax = obs_.degree();
    const int K = std::max(0, 2 * emax - 2);
    const std::size_t kp = static_cast<std::size_t>(K + 1);
    const double inv = 1.0 / static_cast<double>(N_);
    const double dt = p_.dt;
    const auto x = X_.data();
    v2_.resize(N_);
    w3_.resize(N_);
    for (std::size_t n = 0; n < N_; ++n) {
      v2_[n] = v[n] * v[n];
      w3_[n] = v2_[n] - p_.diffusion[n] * dt;
    }
    S_.assign(4 * kp, 0.0);
    const double* w[4] = {nullptr, v.data(), v2_.data(), w3_.data()};
    k.power_sums(x.data(), N_, w, 4, K, S_.data());
    const double* S0 = S_.data();
    const double* S1 = S0 + kp;
    const double* S2 = S1 + kp;
    const double* S3 = S2 + kp;

    IndividualState st;
    st.e1.resize(M_);
    for (std::size_t j = 0; j < M_; ++j) {
      const int e = obs_.exponent(j)[0];
      st.e1[j] = obs_.factor(j) * e * S1[e - 1] * inv;
      if (e >= 2) {
        st.brows.push_back(j);
        st.e2.push_back(0.5 * obs_.factor(j) * e * (e - 1) * S3[e - 2] * inv);
      }
    }
    const std::size_t R = M_ + st.brows.size();
    st.gram = DenseMatrix(R, R);
    auto coefA = [&](std::size_t j) { return obs_.factor(j) * obs_.exponent(j)[0] * inv; };
    auto coefB = [&](std::size_t j) {
      const int e = obs_.exponent(j)[0];
      return obs_.factor(j) * e * (e - 1) * inv;
    };
    for (std::size_t j = 0; j < M_; ++j) {
      const int ej = obs_.exponent(j)[0];
      for (std::size_t l = 0; l <= j; ++l) {
        const int el = obs_.exponent(l)[0];
        st.gram(j, l) = st.gram(l, j) = coefA(j) * coefA(l) * S0[ej + el - 2];
      }
    }
    for (std::size_t bj = 0; bj < st.brows.size(); ++bj) {
      const std::size_t j = st.brows[bj];
      const int ej = obs_.exponent(j)[0];
      for (std::size_t l = 0; l < M_; ++l) {
        const int el = obs_.exponent(l)[0];
        const double v_ab = coefA(l) * coefB(j) * S1[el + ej - 3];
        st.gram(M_ + bj, l) = st.gram(l, M_ + bj) = v_ab;
      }
      for (std::size_t bl = 0; bl <= bj; ++bl) {
        const std::size_t l = st.brows[bl];
        const int el = obs_.exponent(l)[0];
        st.gram(M_ + bj, M_ + bl) = st.gram(M_ + bl, M_ + bj) = coefB(j) * coefB(l) * S2[ej + el - 4];
      }
    }

    if (s1 && s2) {
      // sums of |terms|: power sums of |x| weighted by |v|, v^2, |D dt|
      const int Ks = std::max(0, emax - 1);
      const std::size_t ks = static_cast<std::size_t>(Ks + 1);
      std::vector<double> ax(N_), av(N_), ad(N_), T(3 * ks);
      for (std::size_t n = 0; n < N_; ++n) {
        ax[n] = std::abs(x[n]);
        av[n] = std::abs(v[n]);
        ad[n] = std::abs(p_.diffusion[n] * dt);
      }
      const double* ws[3] = {av.data(), v2_.data(), ad.data()};
      k.power_sums(ax.data(), N_, ws, 3, Ks, T.data());
      s1->assign(M_, 0.0);
      s2->assign(M_, 0.0);
      for (std::size_t j = 0; j < M_; ++j) {
        const int e = obs_.exponent(j)[0];
        const double f = std::abs(obs_.factor(j));
        (*s1)[j] = f * e * T[e - 1] * inv;
        if (e >= 2) (*s2)[j] = 0.5 * f * e * (e - 1) * (T[ks + e - 2] + T[2 * ks + e - 2]) * inv;
      }
    }
    return st;
  }

  double update(std::span<double> v, const IndividualState& st, std::span<const double> y) override {
    const int emax = obs_.degree();
    const double inv = 1.0 / static_cast<double>(N_);
    std::vector<double> P(static_cast<std::size_t>(emax), 0.0);
    std::vector<double> Q(static_cast<std::size_t>(std::max(1, emax - 1)), 0.0);
    for (std::size_t j = 0; j < M_; ++j) {
      const int e = obs_.exponent(j)[0];
      P[e - 1] += y[j] * obs_.factor(j) * e * inv;
    }
    for (std::size_t bj = 0; bj < st.brows.size(); ++bj) {
      const std::size_t j = st.brows[bj];
      const int e = obs_.exponent(j)[0];
      Q[e - 2] += y[M_ + bj] * obs_.factor(j) * e * (e - 1) * inv;
    }
    const bool has_q = !st.brows.empty();
    return kernels::active().poly_increment(X_.data().data(), v.data(), N_, P.data(), emax - 1,
                                            has_q ? Q.data() : nullptr, emax - 2);
  }

  DenseMatrix dense(std::span<const double> v, const IndividualState& st) override {
    const double inv = 1.0 / static_cast<double>(N_);
    const auto x = X_.data();
    DenseMatrix J(M_ + st.brows.size(), N_);
    for (std::size_t j = 0; j < M_; ++j) {
      const int e = obs_.exponent(j)[0];
      for (std::size_t n = 0; n < N_; ++n) J(j, n) = obs_.factor(j) * e * ipow(x[n], e - 1) * inv;
    }
    for (std::size_t bj = 0; bj < st.brows.size(); ++bj) {
      const std::size_t j = st.brows[bj];
      const int e = obs_.exponent(j)[0];
      for (std::size_t n = 0; n < N_; ++n)
        J(M_ + bj, n) = obs_.factor(j) * e * (e - 1) * ipow(x[n], e - 2) * v[n] * inv;
    }
    return J;
  }

 private:
  std::vector<double> v2_, w3_, S_;
};

/// Any dimension and observable kind: dense Jacobian and per-sample Hessians.
class DenseIndividual final : public IndividualSolver {
 public:
  DenseIndividual(const Ensemble& X, const StepProposal& p, const ObservableSet& obs)
      : IndividualSolver(X, p, obs), J_(detail::dense_jacobian(obs, X.data(), p.n_samples)) {
    const double inv = 1.0 / static_cast<double>(N_);
    H_.resize(M_ * N_ * d_ * d_);
    std::vector<double> h(d_ * d_);
    for (std::size_t m = 0; m < M_; ++m) {
      bool nonzero = false;
      for (std::size_t n = 0; n < N_; ++n) {
        obs.hessian(m, X.data().subspan(n * d_, d_), h);
        for (std::size_t i = 0; i < d_ * d_; ++i) {
          H_[(m * N_ + n) * d_ * d_ + i] = h[i] * inv;
          nonzero = nonzero || h[i] != 0.0;
        }
      }
      if (nonzero) brows_.push_back(m);
    }
  }

  IndividualState evaluate(std::span<const double> v, std::vector<double>* s1,
                           std::vector<double>* s2) override {
    const auto& k = kernels::active();
    const std::size_t nd = N_ * d_, dd = d_ * d_;
    const double dt = p_.dt;
    IndividualState st;
    st.brows = brows_;
    st.e1.resize(M_);
    std::vector<double> t1(N_), t2(N_), a1(N_), a2(N_);
    if (s1 && s2) {
      s1->assign(M_, 0.0);
      s2->assign(M_, 0.0);
    }
    B_ = DenseMatrix(brows_.size(), nd);
    std::size_t bi = 0;
    for (std::size_t m = 0; m < M_; ++m) {
      const bool is_b = bi < brows_.size() && brows_[bi] == m;
      for (std::size_t n = 0; n < N_; ++n) {
        double s = 0.0, sa = 0.0;
        for (std::size_t i = 0; i < d_; ++i) {
          const double t = J_(m, n * d_ + i) * v[n * d_ + i];
          s += t;
          sa += std::abs(t);
        }
        t1[n] = s;
        a1[n] = sa;
        if (is_b) {
          const double* h = H_.data() + (m * N_ + n) * dd;
          const double* D = p_.diffusion.data() + n * dd;
          const double* vn = v.data() + n * d_;
          double q = 0.0, qa = 0.0, hd = 0.0;
          for (std::size_t i = 0; i < d_; ++i) {
            double hv = 0.0;
            for (std::size_t j = 0; j < d_; ++j) {
              hv += h[i * d_ + j] * vn[j];
              hd += h[i * d_ + j] * D[i * d_ + j];
            }
            B_(bi, n * d_ + i) = hv;
            q += vn[i] * hv;
          }
          qa = std::abs(q) + std::abs(hd * dt);
          t2[n] = 0.5 * (q - hd * dt);
          a2[n] = 0.5 * qa;
        }
      }
      st.e1[m] = k.sum(t1.data(), N_);
      if (is_b) st.e2.push_back(k.sum(t2.data(), N_));
      if (s1 && s2) {
        (*s1)[m] = k.sum(a1.data(), N_);
        if (is_b) (*s2)[m] = k.sum(a2.data(), N_);
      }
      if (is_b) ++bi;
    }
    const DenseMatrix full = stacked();
    st.gram = gram(full);
    return st;
  }

  double update(std::span<double> v, const IndividualState&, std::span<const double> y) override {
    const DenseMatrix full = stacked();
    const std::vector<double> dv = full.apply_transpose(y);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += dv[i];
    return kernels::active().sum_squares(dv.data(), dv.size());
  }

  DenseMatrix dense(std::span<const double>, const IndividualState&) override { return stacked(); }

 private:
  DenseMatrix stacked() const {
    const std::size_t nd = N_ * d_;
    DenseMatrix full(M_ + brows_.size(), nd);
    for (std::size_t m = 0; m < M_; ++m)
      for (std::size_t c = 0; c < nd; ++c) full(m, c) = J_(m, c);
    for (std::size_t b = 0; b < brows_.size(); ++b)
      for (std::size_t c = 0; c < nd; ++c) full(M_ + b, c) = B_(b, c);
    return full;
  }

  DenseMatrix J_, B_;
  std::vector<double> H_;
  std::vector<std::size_t> brows_;
};

StepResult try_individual(const Ensemble& X, const StepProposal& p, const ObservableSet& obs,
                           const OptimizerConfig& cfg) {
  cfg.validate();
  if (X.dim() != obs.dim() || p.dim != X.dim() || p.n_samples != X.n_samples())
    throw InvalidInput("proposal, ensemble and observables disagree on shape");
  check_diffusion(p);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t M = obs.size();
  const double eps = std::numeric_limits<double>::epsilon();
  const double sqdt = std::sqrt(p.dt);
  const auto& k = kernels::active();

  std::unique_ptr<IndividualSolver> solver;
  if (cfg.fast_path && obs.kind() == ObservableSet::Kind::monomial && X.dim() == 1)
    solver = std::make_unique<MonomialIndividual>(X, p, obs);
  else
    solver = std::make_unique<DenseIndividual>(X, p, obs);

  std::vector<double> v = p.effective_noise;
  std::vector<double> s1, s2;
  IndividualState st = solver->evaluate(v, &s1, &s2);
  std::vector<double> floor(M), norm(M);
  for (std::size_t m = 0; m < M; ++m) {
    floor[m] = kFloorUlps * eps * (s1[m] + s2[m]);
    norm[m] = std::max(sqdt, s1[m] + s2[m]);
  }

  StepResult out;
  AttemptReport& rep = out.rep;
  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  bool small_step = false;
  std::vector<double> rhs;
  for (int it = 0;; ++it) {
    if (it > 0) st = solver->evaluate(v, nullptr, nullptr);
    std::vector<double> e2full(M, 0.0);
    for (std::size_t b = 0; b < st.brows.size(); ++b) e2full[st.brows[b]] = st.e2[b];
    bool at_floor = true, finite = true;
    rep.final_residual = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const double r = std::abs(st.e1[m]) + std::abs(e2full[m]);
      if (!std::isfinite(r)) finite = false;
      if (r > floor[m]) at_floor = false;
      rep.final_residual = std::max(rep.final_residual, r / norm[m]);
    }
    if (!finite) {
      rep.status = AttemptStatus::divergence;
      break;
    }
    const bool within_tol = rep.final_residual <= cfg.tolerance;
    if (at_floor || (small_step && within_tol)) {
      rep.status = AttemptStatus::converged;
      break;
    }
    rhs.assign(st.e1.size() + st.e2.size(), 0.0);
    for (std::size_t m = 0; m < st.e1.size(); ++m) rhs[m] = -st.e1[m];
    for (std::size_t b = 0; b < st.e2.size(); ++b) rhs[M + b] = -st.e2[b];
    const double rn = norm2(rhs);
    rising = rn > prev ? rising + 1 : 0;
    prev = rn;
    if (rising >= 2 && !within_tol) {
      rep.status = AttemptStatus::divergence;
      break;
    }
    if (it >= cfg.i_max) {
      rep.status = AttemptStatus::non_convergence;
      break;
    }
    double step2 = 0.0;
    try {
      const MxmSolution y = solve_mxm(st.gram, rhs, cfg.min_rcond);
      step2 = solver->update(v, st, y.x);
    } catch (const SingularGram& e) {
      if (!cfg.svd_fallback) {
        rep.status = AttemptStatus::singular;
        rep.rcond = e.rcond();
        break;
      }
      const std::vector<double> dv = svd_pinv_apply(solver->dense(v, st), rhs, cfg.svd_cutoff);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += dv[i];
      step2 = k.sum_squares(dv.data(), dv.size());
      rep.used_svd = true;
    }
    ++rep.iterations;
    if (cfg.observer) cfg.observer(rep.iterations, v);
    small_step = std::sqrt(step2) < cfg.eta * std::sqrt(k.sum_squares(v.data(), v.size()));
  }
  rep.converged = rep.status == AttemptStatus::converged;

  bool finite = true;
  for (double x : v) finite = finite && std::isfinite(x);
  if (!finite) v = p.effective_noise;
  rep.distance = finite ? ratio_distance(k.diff_sum_squares(v.data(), p.effective_noise.data(), v.size()),
                                         k.sum_squares(p.effective_noise.data(), v.size()))
                        : std::numeric_limits<double>::infinity();
  std::vector<double> xn(X.data().begin(), X.data().end());
  for (std::size_t i = 0; i < xn.size(); ++i) xn[i] += p.drift[i] * p.dt + v[i];
  out.X = Ensemble(std::move(xn), X.n_samples(), X.dim());
  out.dv = std::move(v);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void throw_on_failure(const AttemptReport& rep) {
  switch (rep.status) {
    case AttemptStatus::converged: return;
    case AttemptStatus::non_convergence: throw NonConvergence(rep);
    case AttemptStatus::divergence: throw Divergence(rep);
    case AttemptStatus::singular: throw SingularGram(rep.rcond);
  }
}

}  // namespace

StepProposal StepProposal::make(const Ensemble& X, const SdeModel& model, double dt,
                                std::span<const double> dW) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw InvalidInput("dt must be finite and non-negative");
  if (X.dim() != model.dim) throw InvalidInput("model dimension does not match the ensemble");
  if (!model.drift || !model.diffusion) throw InvalidInput("model '" + model.label + "' is incomplete");
  const std::size_t N = X.n_samples(), d = model.dim, q = model.noise_dim;
  if (dW.size() != N * q)
    throw InvalidInput("noise block has " + std::to_string(dW.size()) + " entries, expected " +
                       std::to_string(N * q));
  StepProposal p;
  p.n_samples = N;
  p.dim = d;
  p.noise_dim = q;
  p.dt = dt;
  p.drift.assign(N * d, 0.0);
  p.noise_matrix.assign(N * d * q, 0.0);
  p.raw_noise.assign(dW.begin(), dW.end());
  model.drift(X.data(), p.drift);
  model.diffusion(X.data(), p.noise_matrix);
  for (std::size_t i = 0; i < p.drift.size(); ++i)
    if (!std::isfinite(p.drift[i])) throw NumericError("non-finite drift", i / d);
  for (std::size_t i = 0; i < p.noise_matrix.size(); ++i)
    if (!std::isfinite(p.noise_matrix[i])) throw NumericError("non-finite diffusion", i / (d * q));
  p.effective_noise.assign(N * d, 0.0);
  p.diffusion.assign(N * d * d, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const double* B = p.noise_matrix.data() + n * d * q;
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < q; ++j) s += B[i * q + j] * dW[n * q + j];
      p.effective_noise[n * d + i] = s;
      for (std::size_t l = 0; l < d; ++l) {
        double dd = 0.0;
        for (std::size_t j = 0; j < q; ++j) dd += B[i * q + j] * B[l * q + j];
        p.diffusion[n * d * d + i * d + l] = dd;
      }
    }
  }
  return p;
}

Ensemble StepProposal::euler(const Ensemble& X) const {
  std::vector<double> out(X.data().begin(), X.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += drift[i] * dt + effective_noise[i];
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!std::isfinite(out[i])) throw NumericError("non-finite Euler update", i / dim);
  return Ensemble(std::move(out), n_samples, dim);
}

Ensemble euler_step(const Ensemble& X, const SdeModel& model, double dt, std::span<const double> dW) {
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  return StepProposal::make(X, model, dt, dW).euler(X);
}

std::vector<double> ideal_moment_changes(const Ensemble& X, const SdeModel& model,
                                         const ObservableSet& obs, double dt) {
  if (X.dim() != obs.dim()) throw InvalidInput("observable dimension does not match the ensemble");
  const std::vector<double> zero(X.n_samples() * model.noise_dim, 0.0);
  return ideal_from_proposal(X, StepProposal::make(X, model, dt, zero), obs);
}

StepResult try_combined_step(const Ensemble& X, const StepProposal& proposal, const ObservableSet& obs,
                             const OptimizerConfig& cfg) {
  if (X.dim() != obs.dim() || proposal.dim != X.dim() || proposal.n_samples != X.n_samples())
    throw InvalidInput("proposal, ensemble and observables disagree on shape");
  cfg.validate();
  return try_combined(X, proposal, obs, cfg);
}

StepResult try_individual_step(const Ensemble& X, const StepProposal& proposal, const ObservableSet& obs,
                               const OptimizerConfig& cfg) {
  return try_individual(X, proposal, obs, cfg);
}

std::pair<Ensemble, AttemptReport> combined_step(const Ensemble& X, const SdeModel& model,
                                                 const ObservableSet& obs, double dt,
                                                 std::span<const double> dW,
                                                 const OptimizerConfig& cfg) {
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  if (X.dim() != obs.dim()) throw InvalidInput("observable dimension does not match the ensemble");
  StepResult o = try_combined(X, StepProposal::make(X, model, dt, dW), obs, cfg);
  throw_on_failure(o.rep);
  return {std::move(o.X), std::move(o.rep)};
}

NoiseResiduals noise_residuals(const Ensemble& X, const StepProposal& p, const ObservableSet& obs,
                               std::span<const double> dV) {
  const std::size_t N = X.n_samples(), d = X.dim(), M = obs.size();
  if (obs.dim() != d || p.dim != d || dV.size() != N * d) throw InvalidInput("shape mismatch");
  const auto& k = kernels::active();
  const double inv = 1.0 / static_cast<double>(N);
  NoiseResiduals r;
  r.e1.resize(M);
  r.e2.resize(M);
  r.e1_scale.resize(M);
  r.e2_scale.resize(M);
  std::vector<double> g(d), h(d * d), t1(N), t2(N), a1(N), a2(N);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < N; ++n) {
      const auto xn = X.data().subspan(n * d, d);
      const double* v = dV.data() + n * d;
      const double* D = p.diffusion.data() + n * d * d;
      obs.gradient(m, xn, g);
      obs.hessian(m, xn, h);
      double s = 0.0, sa = 0.0, q = 0.0, hd = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        s += g[i] * v[i];
        sa += std::abs(g[i] * v[i]);
        for (std::size_t j = 0; j < d; ++j) {
          q += h[i * d + j] * v[i] * v[j];
          hd += h[i * d + j] * D[i * d + j];
        }
      }
      t1[n] = s * inv;
      a1[n] = sa * inv;
      t2[n] = 0.5 * (q - hd * p.dt) * inv;
      a2[n] = 0.5 * (std::abs(q) + std::abs(hd * p.dt)) * inv;
    }
    r.e1[m] = k.sum(t1.data(), N);
    r.e2[m] = k.sum(t2.data(), N);
    r.e1_scale[m] = k.sum(a1.data(), N);
    r.e2_scale[m] = k.sum(a2.data(), N);
  }
  return r;
}

double noise_residual_norm(const NoiseResiduals& r, double dt) {
  double worst = 0.0;
  const double sq = std::sqrt(dt);
  for (std::size_t m = 0; m < r.e1.size(); ++m) {
    const double den = std::max(sq, r.e1_scale[m] + r.e2_scale[m]);
    worst = std::max(worst, (std::abs(r.e1[m]) + std::abs(r.e2[m])) / den);
  }
  return worst;
}

std::pair<Ensemble, AttemptReport> individual_step(const Ensemble& X, const StepProposal& proposal,
                                                   const ObservableSet& obs,
                                                   const OptimizerConfig& cfg) {
  StepResult o = try_individual(X, proposal, obs, cfg);
  throw_on_failure(o.rep);
  return {std::move(o.X), std::move(o.rep)};
}

std::pair<Ensemble, AttemptReport> individual_step(const Ensemble& X, const SdeModel& model,
                                                   const ObservableSet& obs, double dt,
                                                   std::span<const double> dW,
                                                   const OptimizerConfig& cfg) {
  if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
  if (X.dim() != obs.dim()) throw InvalidInput("observable dimension does not match the ensemble");
  return individual_step(X, StepProposal::make(X, model, dt, dW), obs, cfg);
}

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::euler: return "euler";
    case Method::combined: return "combined";
    case Method::individual: return "individual";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "euler" || s == "reference") return Method::euler;
  if (s == "combined") return Method::combined;
  if (s == "individual") return Method::individual;
  throw InvalidInput("unknown method '" + s + "' (expected euler, combined or individual)");
}

IntegrateResult integrate(const SdeModel& model, const Ensemble& X0, double T, std::size_t n_steps,
                          const IntegrateOptions& opt) {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInput("horizon T must be positive");
  if (n_steps == 0) throw InvalidInput("N_T must be at least 1");
  if (X0.dim() != model.dim) throw InvalidInput("model dimension does not match the ensemble");
  const bool pos = opt.method != Method::euler;
  if (pos && opt.optimized.dim() != model.dim)
    throw InvalidInput("optimized observables do not match the model dimension");
  if (opt.tracked.size() > 0 && opt.tracked.dim() != model.dim)
    throw InvalidInput("tracked observables do not match the model dimension");
  opt.cfg.validate();

  const double dt = T / static_cast<double>(n_steps);
  const std::size_t N = X0.n_samples(), q = model.noise_dim;
  const NoiseStream noise(opt.seed, opt.run);

  std::set<std::size_t> record(opt.record_steps.begin(), opt.record_steps.end());
  if (record.empty()) record.insert(n_steps);
  for (std::size_t s : record)
    if (s > n_steps) throw InvalidInput("record step beyond N_T");

  IntegrateResult res;
  auto snapshot = [&](std::size_t step, const Ensemble& X) {
    Snapshot s;
    s.step = step;
    s.t = static_cast<double>(step) * dt;
    if (opt.tracked.size() > 0) s.values = opt.tracked.sample_means(X);
    res.snapshots.push_back(std::move(s));
  };

  // one optimized step; returns false on optimizer failure
  auto pos_step = [&](const Ensemble& X, std::span<const double> dW, double h, StepResult& out) {
    const StepProposal p = StepProposal::make(X, model, h, dW);
    out = opt.method == Method::combined ? try_combined(X, p, opt.optimized, opt.cfg)
                                         : try_individual(X, p, opt.optimized, opt.cfg);
    if (out.rep.status != AttemptStatus::converged) return false;
    if (opt.method == Method::individual && opt.verify_residuals) {
      const double r = noise_residual_norm(noise_residuals(X, p, opt.optimized, out.dv), h);
      res.max_noise_residual = std::max(res.max_noise_residual, r);
      if (r > opt.cfg.tolerance) return false;
    }
    return true;
  };

  Ensemble X = X0;
  if (record.count(0)) snapshot(0, X);
  std::vector<double> dW(N * q), dW1(N * q), dW2(N * q), Z(N * q);
  const double sq = std::sqrt(dt);
  double dist_sum = 0.0, iter_sum = 0.0;
  std::size_t pos_steps = 0;

  for (std::size_t s = 0; s < n_steps; ++s) {
    const auto step = static_cast<std::uint32_t>(s);
    noise.fill(step, NoisePurpose::increment, dW);
    for (double& w : dW) w *= sq;
    try {
      if (!pos) {
        X = StepProposal::make(X, model, dt, dW).euler(X);
      } else {
        StepResult out;
        if (pos_step(X, dW, dt, out)) {
          dist_sum += out.rep.distance;
          iter_sum += out.rep.iterations;
          ++pos_steps;
          X = std::move(out.X);
        } else {
          // retry as two half steps joined by a Brownian bridge
          const std::string first = to_string(out.rep.status);
          res.retried_steps.push_back(s);
          noise.fill(step, NoisePurpose::bridge, Z);
          for (std::size_t i = 0; i < dW.size(); ++i) {
            dW1[i] = 0.5 * dW[i] + 0.5 * sq * Z[i];
            dW2[i] = dW[i] - dW1[i];
          }
          StepResult h1, h2;
          if (!pos_step(X, dW1, 0.5 * dt, h1)) throw StepFailure(s, first + ", then " + to_string(h1.rep.status));
          if (!pos_step(h1.X, dW2, 0.5 * dt, h2)) throw StepFailure(s, first + ", then " + to_string(h2.rep.status));
          X = std::move(h2.X);
        }
      }
    } catch (const StepFailure&) {
      throw;
    } catch (const NumericError& e) {
      throw StepFailure(s, e.what());
    }
    if (record.count(s + 1)) snapshot(s + 1, X);
  }
  res.final = std::move(X);
  if (pos_steps > 0) {
    res.mean_distance = dist_sum / static_cast<double>(pos_steps);
    res.mean_iterations = iter_sum / static_cast<double>(pos_steps);
  }
  return res;
}

}  // namespace pos
