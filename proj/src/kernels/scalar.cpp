#include <algorithm>

#include "pairwise.hpp"
#include "pos/kernels.hpp"

namespace pos::kernels {
namespace {

using detail::Pairwise;
using detail::kMaxWidth;

void power_sums(const double* x, std::size_t n, const double* const* weights,
                std::size_t channels, int K, double* out) {
  const std::size_t width = channels * static_cast<std::size_t>(K + 1);
  Pairwise<kMaxWidth> acc(width);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double* s = acc.slot();
    std::fill(s, s + width, 0.0);
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t c = 0; c < channels; ++c) {
        double p = weights[c] ? weights[c][i] : 1.0;
        double* row = s + c * static_cast<std::size_t>(K + 1);
        for (int k = 0; k <= K; ++k) {
          row[k] += p;
          p *= x[i];
        }
      }
    }
    acc.push();
  }
  acc.finish(out);
}

void power_sums_2d(const double* xy, std::size_t n, int K, double* out) {
  const std::size_t width = tri_size(K);
  Pairwise<kMaxWidth> acc(width);
  double xp[kMaxPower2d + 1], yp[kMaxPower2d + 1];
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double* s = acc.slot();
    std::fill(s, s + width, 0.0);
    for (std::size_t i = start; i < end; ++i) {
      xp[0] = yp[0] = 1.0;
      for (int k = 1; k <= K; ++k) {
        xp[k] = xp[k - 1] * xy[2 * i];
        yp[k] = yp[k - 1] * xy[2 * i + 1];
      }
      std::size_t idx = 0;
      for (int p = 0; p <= K; ++p)
        for (int q = 0; q <= K - p; ++q) s[idx++] += xp[p] * yp[q];
    }
    acc.push();
  }
  acc.finish(out);
}

inline double horner(const double* c, int deg, double x) {
  double r = c[deg];
  for (int k = deg - 1; k >= 0; --k) r = r * x + c[k];
  return r;
}

double poly_increment(const double* base, double* target, std::size_t n, const double* p,
                      int p_deg, const double* q, int q_deg) {
  Pairwise<1> acc(1);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const double b = base[i];
      double d = horner(p, p_deg, b);
      if (q) d += horner(q, q_deg, b) * target[i];
      target[i] += d;
      s += d * d;
    }
    *acc.slot() = s;
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

double poly_increment_2d(double* xy, std::size_t n, const double* px, const double* py, int deg) {
  Pairwise<1> acc(1);
  double xp[kMaxPower2d + 1], yp[kMaxPower2d + 1];
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      xp[0] = yp[0] = 1.0;
      for (int k = 1; k <= deg; ++k) {
        xp[k] = xp[k - 1] * xy[2 * i];
        yp[k] = yp[k - 1] * xy[2 * i + 1];
      }
      double dx = 0.0, dy = 0.0;
      std::size_t idx = 0;
      for (int a = 0; a <= deg; ++a)
        for (int b = 0; b <= deg - a; ++b, ++idx) {
          const double m = xp[a] * yp[b];
          dx += px[idx] * m;
          dy += py[idx] * m;
        }
      xy[2 * i] += dx;
      xy[2 * i + 1] += dy;
      s += dx * dx + dy * dy;
    }
    *acc.slot() = s;
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

double dot(const double* a, const double* b, std::size_t n) {
  Pairwise<1> acc(1);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) s += a[i] * b[i];
    *acc.slot() = s;
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

void gram(const double* J, std::size_t rows, std::size_t cols, double* u) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = dot(J + i * cols, J + j * cols, cols);
      u[i * rows + j] = v;
      u[j * rows + i] = v;
    }
}

void gemv_t(const double* J, std::size_t rows, std::size_t cols, const double* w, double* out) {
  std::fill(out, out + cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double wr = w[r];
    const double* row = J + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += wr * row[c];
  }
}

double sum(const double* x, std::size_t n) {
  Pairwise<1> acc(1);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) s += x[i];
    *acc.slot() = s;
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

double diff_sum_squares(const double* a, const double* b, std::size_t n) {
  Pairwise<1> acc(1);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = std::min(n, start + kBlock);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    *acc.slot() = s;
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

constexpr KernelTable kScalar{
    "scalar", power_sums, power_sums_2d, poly_increment, poly_increment_2d, gram,
    gemv_t,   sum,        sum_squares,   diff_sum_squares,
};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace pos::kernels
