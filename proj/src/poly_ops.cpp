#include "poly_ops.hpp"

#include <algorithm>

#include "pos/error.hpp"
#include "pos/kernels.hpp"

namespace pos::detail {

using kernels::tri_index;
using kernels::tri_size;

MeansAndGram poly_means_and_gram(const ObservableSet& obs, std::span<const double> data,
                                 std::size_t n) {
  const auto& k = kernels::active();
  const std::size_t M = obs.size();
  const int deg = obs.degree();
  const int K = std::max(deg, 2 * deg - 2);
  const double inv = 1.0 / static_cast<double>(n);
  MeansAndGram r{std::vector<double>(M), DenseMatrix(M, M)};

  if (obs.kind() == ObservableSet::Kind::monomial) {
    std::vector<double> S(static_cast<std::size_t>(K + 1));
    const double* w[1] = {nullptr};
    k.power_sums(data.data(), n, w, 1, K, S.data());
    for (std::size_t j = 0; j < M; ++j) {
      const int ej = obs.exponent(j)[0];
      r.means[j] = obs.factor(j) * S[ej] * inv;
      for (std::size_t l = 0; l <= j; ++l) {
        const int el = obs.exponent(l)[0];
        const double v = obs.factor(j) * obs.factor(l) * ej * el * S[ej + el - 2] * inv * inv;
        r.gram(j, l) = r.gram(l, j) = v;
      }
    }
    return r;
  }

  if (obs.kind() != ObservableSet::Kind::cross_moment) throw InvalidInput("not a polynomial observable set");
  std::vector<double> S(tri_size(K));
  k.power_sums_2d(data.data(), n, K, S.data());
  for (std::size_t j = 0; j < M; ++j) {
    const auto [aj, bj] = obs.exponent(j);
    r.means[j] = obs.factor(j) * S[tri_index(K, aj, bj)] * inv;
    for (std::size_t l = 0; l <= j; ++l) {
      const auto [al, bl] = obs.exponent(l);
      double v = 0.0;
      if (aj > 0 && al > 0) v += static_cast<double>(aj * al) * S[tri_index(K, aj + al - 2, bj + bl)];
      if (bj > 0 && bl > 0) v += static_cast<double>(bj * bl) * S[tri_index(K, aj + al, bj + bl - 2)];
      v *= obs.factor(j) * obs.factor(l) * inv * inv;
      r.gram(j, l) = r.gram(l, j) = v;
    }
  }
  return r;
}

double poly_apply_update(const ObservableSet& obs, std::span<double> data, std::size_t n,
                         std::span<const double> y) {
  const auto& k = kernels::active();
  const int deg = obs.degree();
  const double inv = 1.0 / static_cast<double>(n);
  if (obs.kind() == ObservableSet::Kind::monomial) {
    std::vector<double> p(static_cast<std::size_t>(deg), 0.0);
    for (std::size_t j = 0; j < obs.size(); ++j) {
      const int e = obs.exponent(j)[0];
      p[e - 1] += y[j] * obs.factor(j) * e * inv;
    }
    return k.poly_increment(data.data(), data.data(), n, p.data(), deg - 1, nullptr, 0);
  }
  const int D = deg - 1;
  std::vector<double> px(tri_size(D), 0.0), py(tri_size(D), 0.0);
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const auto [a, b] = obs.exponent(j);
    const double s = y[j] * obs.factor(j) * inv;
    if (a > 0) px[tri_index(D, a - 1, b)] += s * a;
    if (b > 0) py[tri_index(D, a, b - 1)] += s * b;
  }
  return k.poly_increment_2d(data.data(), n, px.data(), py.data(), D);
}

DenseMatrix dense_jacobian(const ObservableSet& obs, std::span<const double> data, std::size_t n) {
  const std::size_t d = obs.dim();
  if (data.size() != n * d) throw InvalidInput("observable dimension does not match the ensemble");
  DenseMatrix J(obs.size(), n * d);
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<double> g(d);
  for (std::size_t m = 0; m < obs.size(); ++m)
    for (std::size_t s = 0; s < n; ++s) {
      obs.gradient(m, data.subspan(s * d, d), g);
      for (std::size_t i = 0; i < d; ++i) J(m, s * d + i) = g[i] * inv;
    }
  return J;
}

}  // namespace pos::detail
