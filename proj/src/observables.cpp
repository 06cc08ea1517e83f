#include "pos/observables.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "pos/error.hpp"
#include "pos/kernels.hpp"

namespace pos {

namespace {

/// x^e and its first two derivatives, safe for e = 0, 1.
inline double ipow(double x, int e) {
  double r = 1.0;
  for (int k = 0; k < e; ++k) r *= x;
  return r;
}
inline double dpow(double x, int e) { return e >= 1 ? e * ipow(x, e - 1) : 0.0; }
inline double ddpow(double x, int e) { return e >= 2 ? e * (e - 1) * ipow(x, e - 2) : 0.0; }

}  // namespace

ObservableSet ObservableSet::monomials(int M, std::vector<double> targets) {
  if (M < 1) throw InvalidInput("need at least one observable");
  std::vector<int> e(static_cast<std::size_t>(M));
  for (int m = 1; m <= M; ++m) e[m - 1] = m;
  return powers(std::move(e), std::move(targets));
}

ObservableSet ObservableSet::powers(std::vector<int> exponents, std::vector<double> targets) {
  if (exponents.empty()) throw InvalidInput("need at least one observable");
  ObservableSet s;
  s.kind_ = Kind::monomial;
  s.dim_ = 1;
  s.size_ = exponents.size();
  for (int e : exponents) {
    if (e < 1 || 2 * e > kernels::kMaxPower) throw InvalidInput("monomial exponent out of range");
    s.exponents_.push_back({e, 0});
  }
  s.factors_.assign(s.size_, 1.0);
  if (!targets.empty()) s.set_targets(std::move(targets));
  return s;
}

ObservableSet ObservableSet::cross_moments(std::vector<std::array<int, 2>> exponents,
                                           std::vector<double> targets) {
  if (exponents.empty()) throw InvalidInput("need at least one observable");
  ObservableSet s;
  s.kind_ = Kind::cross_moment;
  s.dim_ = 2;
  s.size_ = exponents.size();
  for (auto e : exponents) {
    if (e[0] < 0 || e[1] < 0 || e[0] + e[1] < 1 || 2 * (e[0] + e[1]) - 2 > kernels::kMaxPower2d)
      throw InvalidInput("cross-moment exponent out of range");
  }
  s.exponents_ = std::move(exponents);
  s.factors_.assign(s.size_, 1.0);
  if (!targets.empty()) s.set_targets(std::move(targets));
  return s;
}

ObservableSet ObservableSet::generic(std::size_t dim, std::vector<Observable> items,
                                     std::vector<double> targets) {
  if (items.empty()) throw InvalidInput("need at least one observable");
  if (dim == 0) throw InvalidInput("observable dimension must be positive");
  for (const auto& o : items)
    if (!o.value || !o.gradient || !o.hessian) throw InvalidInput("observable '" + o.name + "' is incomplete");
  ObservableSet s;
  s.kind_ = Kind::generic;
  s.dim_ = dim;
  s.size_ = items.size();
  s.items_ = std::move(items);
  s.exponents_.assign(s.size_, {0, 0});
  s.factors_.assign(s.size_, 1.0);
  if (!targets.empty()) s.set_targets(std::move(targets));
  return s;
}

void ObservableSet::set_targets(std::vector<double> targets) {
  if (targets.size() != size_)
    throw InvalidInput("got " + std::to_string(targets.size()) + " targets for " +
                       std::to_string(size_) + " observables");
  for (double t : targets)
    if (!std::isfinite(t)) throw InvalidInput("non-finite observable target");
  targets_ = std::move(targets);
}

ObservableSet ObservableSet::scaled(std::span<const double> factors) const {
  if (factors.size() != size_) throw InvalidInput("one scale factor per observable required");
  ObservableSet s = *this;
  for (std::size_t m = 0; m < size_; ++m) {
    if (factors[m] == 0.0 || !std::isfinite(factors[m])) throw InvalidInput("scale factors must be finite and non-zero");
    s.factors_[m] *= factors[m];
    if (has_targets()) s.targets_[m] *= factors[m];
  }
  return s;
}

int ObservableSet::degree() const noexcept {
  int d = 0;
  for (auto e : exponents_) d = std::max(d, e[0] + e[1]);
  return d;
}

std::string ObservableSet::name(std::size_t m) const {
  switch (kind_) {
    case Kind::monomial: return "x^" + std::to_string(exponents_[m][0]);
    case Kind::cross_moment:
      return "x^" + std::to_string(exponents_[m][0]) + " y^" + std::to_string(exponents_[m][1]);
    case Kind::generic: return items_[m].name;
  }
  return {};
}

double ObservableSet::value(std::size_t m, std::span<const double> x) const {
  const double c = factors_[m];
  switch (kind_) {
    case Kind::monomial: return c * ipow(x[0], exponents_[m][0]);
    case Kind::cross_moment: return c * ipow(x[0], exponents_[m][0]) * ipow(x[1], exponents_[m][1]);
    case Kind::generic: return c * items_[m].value(x);
  }
  return 0.0;
}

void ObservableSet::gradient(std::size_t m, std::span<const double> x, std::span<double> out) const {
  const double c = factors_[m];
  const auto [a, b] = exponents_[m];
  switch (kind_) {
    case Kind::monomial: out[0] = c * dpow(x[0], a); return;
    case Kind::cross_moment:
      out[0] = c * dpow(x[0], a) * ipow(x[1], b);
      out[1] = c * ipow(x[0], a) * dpow(x[1], b);
      return;
    case Kind::generic:
      items_[m].gradient(x, out);
      for (std::size_t i = 0; i < dim_; ++i) out[i] *= c;
      return;
  }
}

void ObservableSet::hessian(std::size_t m, std::span<const double> x, std::span<double> out) const {
  const double c = factors_[m];
  const auto [a, b] = exponents_[m];
  switch (kind_) {
    case Kind::monomial: out[0] = c * ddpow(x[0], a); return;
    case Kind::cross_moment:
      out[0] = c * ddpow(x[0], a) * ipow(x[1], b);
      out[1] = out[2] = c * dpow(x[0], a) * dpow(x[1], b);
      out[3] = c * ipow(x[0], a) * ddpow(x[1], b);
      return;
    case Kind::generic:
      items_[m].hessian(x, out);
      for (std::size_t i = 0; i < dim_ * dim_; ++i) out[i] *= c;
      return;
  }
}

std::vector<double> ObservableSet::sample_means(const Ensemble& X) const {
  if (X.dim() != dim_) throw InvalidInput("observable dimension does not match the ensemble");
  return sample_means(X.data(), X.n_samples());
}

namespace {

std::vector<double> polynomial_means(const ObservableSet& obs, std::span<const double> data,
                                     std::size_t n) {
  const auto& k = kernels::active();
  const int K = obs.degree();
  std::vector<double> out(obs.size());
  const double inv = 1.0 / static_cast<double>(n);
  if (obs.kind() == ObservableSet::Kind::monomial) {
    std::vector<double> s(static_cast<std::size_t>(K + 1));
    const double* w[1] = {nullptr};
    k.power_sums(data.data(), n, w, 1, K, s.data());
    for (std::size_t m = 0; m < obs.size(); ++m) out[m] = obs.factor(m) * s[obs.exponent(m)[0]] * inv;
  } else {
    std::vector<double> s(kernels::tri_size(K));
    k.power_sums_2d(data.data(), n, K, s.data());
    for (std::size_t m = 0; m < obs.size(); ++m) {
      const auto e = obs.exponent(m);
      out[m] = obs.factor(m) * s[kernels::tri_index(K, e[0], e[1])] * inv;
    }
  }
  return out;
}

}  // namespace

std::vector<double> ObservableSet::sample_means(std::span<const double> data,
                                                std::size_t n_samples) const {
  if (n_samples == 0 || data.size() != n_samples * dim_) throw InvalidInput("bad ensemble block");
  if (kind_ != Kind::generic) return polynomial_means(*this, data, n_samples);
  std::vector<double> out(size_), vals(n_samples);
  for (std::size_t m = 0; m < size_; ++m) {
    for (std::size_t n = 0; n < n_samples; ++n) vals[n] = value(m, data.subspan(n * dim_, dim_));
    out[m] = kernels::active().sum(vals.data(), n_samples) / static_cast<double>(n_samples);
  }
  return out;
}

std::vector<double> ObservableSet::abs_means(std::span<const double> data,
                                             std::size_t n_samples) const {
  if (n_samples == 0 || data.size() != n_samples * dim_) throw InvalidInput("bad ensemble block");
  if (kind_ != Kind::generic) {
    std::vector<double> a(data.begin(), data.end());
    for (double& v : a) v = std::abs(v);
    std::vector<double> out = polynomial_means(*this, a, n_samples);
    for (double& v : out) v = std::abs(v);
    return out;
  }
  std::vector<double> out(size_), vals(n_samples);
  for (std::size_t m = 0; m < size_; ++m) {
    for (std::size_t n = 0; n < n_samples; ++n)
      vals[n] = std::abs(value(m, data.subspan(n * dim_, dim_)));
    out[m] = kernels::active().sum(vals.data(), n_samples) / static_cast<double>(n_samples);
  }
  return out;
}

}  // namespace pos
