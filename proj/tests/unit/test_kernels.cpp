#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pos/kernels.hpp"

using namespace pos::kernels;

namespace {

const std::size_t kSizes[] = {0, 1, 3, 4, 5, 255, 256, 257, 1000, 4099};

void check_close(double a, double b, double scale, double tol) {
  CHECK(std::abs(a - b) <= tol * std::max(1.0, scale));
}

// Every kernel of table t against the long-double oracle.
void check_against_oracle(const KernelTable& t) {
  std::mt19937_64 g(7);
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto x = oracle::uniforms(g, n, -1.5, 1.5);
    const auto y = oracle::uniforms(g, n, -1.5, 1.5);
    const auto w = oracle::normals(g, n);

    long double s = 0, ss = 0, ds = 0, abs_s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x[i];
      abs_s += std::abs(x[i]);
      ss += static_cast<long double>(x[i]) * x[i];
      ds += static_cast<long double>(x[i] - y[i]) * (x[i] - y[i]);
    }
    check_close(t.sum(x.data(), n), static_cast<double>(s), static_cast<double>(abs_s), 1e-14);
    check_close(t.sum_squares(x.data(), n), static_cast<double>(ss), static_cast<double>(ss), 1e-14);
    check_close(t.diff_sum_squares(x.data(), y.data(), n), static_cast<double>(ds), static_cast<double>(ds), 1e-14);

    const int K = 12;
    const double* weights[2] = {nullptr, w.data()};
    std::vector<double> out(2 * (K + 1));
    t.power_sums(x.data(), n, weights, 2, K, out.data());
    for (int k = 0; k <= K; ++k) {
      long double a = 0, b = 0, scale = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const long double p = std::pow(static_cast<long double>(x[i]), k);
        a += p;
        b += w[i] * p;
        scale += std::abs(w[i] * p) + std::abs(p);
      }
      check_close(out[k], static_cast<double>(a), static_cast<double>(scale), 1e-14);
      check_close(out[K + 1 + k], static_cast<double>(b), static_cast<double>(scale), 1e-14);
    }

    std::vector<double> xy(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      xy[2 * i] = x[i];
      xy[2 * i + 1] = y[i];
    }
    const int K2 = 7;
    std::vector<double> t2(tri_size(K2));
    t.power_sums_2d(xy.data(), n, K2, t2.data());
    for (int p = 0; p <= K2; ++p)
      for (int q = 0; q <= K2 - p; ++q) {
        long double a = 0, scale = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const long double v = std::pow(static_cast<long double>(x[i]), p) * std::pow(static_cast<long double>(y[i]), q);
          a += v;
          scale += std::abs(v);
        }
        check_close(t2[tri_index(K2, p, q)], static_cast<double>(a), static_cast<double>(scale), 1e-14);
      }

    // poly_increment: target += P(base) + Q(base) target
    const std::vector<double> P{0.1, -0.2, 0.05, 0.01}, Q{0.3, 0.02};
    std::vector<double> tgt = y;
    const double sq = t.poly_increment(x.data(), tgt.data(), n, P.data(), 3, Q.data(), 1);
    long double sq_ref = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b = x[i];
      const double d = (P[0] + b * (P[1] + b * (P[2] + b * P[3]))) + (Q[0] + Q[1] * b) * y[i];
      check_close(tgt[i], y[i] + d, 1.0, 1e-15);
      sq_ref += static_cast<long double>(d) * d;
    }
    check_close(sq, static_cast<double>(sq_ref), static_cast<double>(sq_ref), 1e-13);

    // poly_increment_2d
    const int deg = 3;
    std::vector<double> px(tri_size(deg)), py(tri_size(deg));
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = 0.01 * static_cast<double>(i + 1);
      py[i] = -0.02 * static_cast<double>(i) + 0.005;
    }
    std::vector<double> xy2 = xy;
    const double sq2 = t.poly_increment_2d(xy2.data(), n, px.data(), py.data(), deg);
    long double sq2_ref = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double dx = 0, dy = 0;
      for (int a = 0; a <= deg; ++a)
        for (int b = 0; b <= deg - a; ++b) {
          const double m = std::pow(x[i], a) * std::pow(y[i], b);
          dx += px[tri_index(deg, a, b)] * m;
          dy += py[tri_index(deg, a, b)] * m;
        }
      check_close(xy2[2 * i], x[i] + dx, 1.0, 1e-14);
      check_close(xy2[2 * i + 1], y[i] + dy, 1.0, 1e-14);
      sq2_ref += static_cast<long double>(dx) * dx + static_cast<long double>(dy) * dy;
    }
    check_close(sq2, static_cast<double>(sq2_ref), static_cast<double>(sq2_ref), 1e-13);
  }

  // gram and gemv_t on a small dense matrix
  for (std::size_t cols : {1u, 7u, 300u, 1025u}) {
    const std::size_t rows = 5;
    const auto J = oracle::normals(g, rows * cols);
    std::vector<double> u(rows * rows);
    t.gram(J.data(), rows, cols, u.data());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < rows; ++j) {
        long double s = 0, a = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          s += static_cast<long double>(J[i * cols + c]) * J[j * cols + c];
          a += std::abs(J[i * cols + c] * J[j * cols + c]);
        }
        check_close(u[i * rows + j], static_cast<double>(s), static_cast<double>(a), 1e-14);
        CHECK(u[i * rows + j] == u[j * rows + i]);
      }
    const auto wv = oracle::normals(g, rows);
    std::vector<double> o(cols);
    t.gemv_t(J.data(), rows, cols, wv.data(), o.data());
    for (std::size_t c = 0; c < cols; ++c) {
      long double s = 0, a = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        s += static_cast<long double>(wv[r]) * J[r * cols + c];
        a += std::abs(wv[r] * J[r * cols + c]);
      }
      check_close(o[c], static_cast<double>(s), static_cast<double>(a), 1e-14);
    }
  }
}

}  // namespace

TEST_CASE("scalar kernels match the long-double oracle") { check_against_oracle(scalar_table()); }

TEST_CASE("avx2 kernels match the long-double oracle") {
  const KernelTable* t = avx2_table();
  if (!t) {
    MESSAGE("AVX2 variant not available; skipped");
    return;
  }
  check_against_oracle(*t);
}

TEST_CASE("scalar and avx2 variants agree to rounding") {
  const KernelTable* v = avx2_table();
  if (!v) return;
  const KernelTable& s = scalar_table();
  std::mt19937_64 g(11);
  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto x = oracle::normals(g, n, 0.3, 1.0);
    const double a = s.sum(x.data(), n), b = v->sum(x.data(), n);
    double abs_sum = 0.0;
    for (double xi : x) abs_sum += std::abs(xi);
    CHECK(std::abs(a - b) <= 1e-14 * std::max(1.0, abs_sum));
    const int K = 20;
    std::vector<double> ps(K + 1), pv(K + 1);
    const double* w[1] = {nullptr};
    s.power_sums(x.data(), n, w, 1, K, ps.data());
    v->power_sums(x.data(), n, w, 1, K, pv.data());
    for (int k = 0; k <= K; ++k) {
      long double scale = 0;
      for (double xi : x) scale += std::pow(std::abs(static_cast<long double>(xi)), k);
      CHECK(std::abs(ps[k] - pv[k]) <= 1e-13 * std::max(1.0, static_cast<double>(scale)));
    }
  }
}

TEST_CASE("kernels are deterministic for a given table") {
  std::mt19937_64 g(3);
  const auto x = oracle::normals(g, 10007);
  for (const KernelTable* t : {&scalar_table(), avx2_table()}) {
    if (!t) continue;
    CHECK(t->sum(x.data(), x.size()) == t->sum(x.data(), x.size()));
    CHECK(t->sum_squares(x.data(), x.size()) == t->sum_squares(x.data(), x.size()));
  }
}

TEST_CASE("triangular table indexing") {
  for (int K = 0; K <= kMaxPower2d; ++K) {
    std::size_t expect = 0;
    for (int p = 0; p <= K; ++p)
      for (int q = 0; q <= K - p; ++q) CHECK(tri_index(K, p, q) == expect++);
    CHECK(tri_size(K) == expect);
  }
}

TEST_CASE("select switches tables and rejects unknown names") {
  select("scalar");
  CHECK(std::string(active().name) == "scalar");
  if (avx2_table()) {
    select("avx2");
    CHECK(std::string(active().name) == std::string(avx2_table()->name));
  } else {
    CHECK_THROWS(select("avx2"));
  }
  CHECK_THROWS(select("neon"));
  select("auto");
}
