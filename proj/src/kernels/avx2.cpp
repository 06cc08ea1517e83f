// AVX2/FMA kernels. This file is compiled with -mavx2 -mfma; it deliberately
// avoids inline standard-library templates (std::min, std::fill, ...) whose
// out-of-line copies could be merged with the baseline ones by the linker.

#include "pos/kernels.hpp"

#if defined(POS_HAVE_AVX2)

#include <immintrin.h>

#include "pairwise.hpp"

namespace pos::kernels {
namespace {

using detail::Pairwise;
using detail::kMaxWidth;

inline std::size_t block_end(std::size_t start, std::size_t n) {
  return n - start < kBlock ? n : start + kBlock;
}

inline void zero(double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = 0.0;
}

/// lanes [0, r) enabled
inline __m256i tail_mask(std::size_t r) {
  const __m256i idx = _mm256_setr_epi64x(0, 1, 2, 3);
  return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(r)), idx);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void power_sums(const double* x, std::size_t n, const double* const* weights,
                std::size_t channels, int K, double* out) {
  const std::size_t kp = static_cast<std::size_t>(K + 1);
  const std::size_t width = channels * kp;
  Pairwise<kMaxWidth> acc(width);
  __m256d vacc[kMaxWidth];
  const __m256d one = _mm256_set1_pd(1.0);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = block_end(start, n);
    for (std::size_t k = 0; k < width; ++k) vacc[k] = _mm256_setzero_pd();
    for (std::size_t i = start; i < end; i += 4) {
      __m256d xv, wv[kMaxChannels];
      if (end - i >= 4) {
        xv = _mm256_loadu_pd(x + i);
        for (std::size_t c = 0; c < channels; ++c)
          wv[c] = weights[c] ? _mm256_loadu_pd(weights[c] + i) : one;
      } else {
        const __m256i m = tail_mask(end - i);
        xv = _mm256_maskload_pd(x + i, m);
        for (std::size_t c = 0; c < channels; ++c)
          wv[c] = weights[c] ? _mm256_maskload_pd(weights[c] + i, m)
                             : _mm256_and_pd(one, _mm256_castsi256_pd(m));
      }
      for (std::size_t c = 0; c < channels; ++c) {
        __m256d p = wv[c];
        __m256d* row = vacc + c * kp;
        for (std::size_t k = 0; k < kp; ++k) {
          row[k] = _mm256_add_pd(row[k], p);
          p = _mm256_mul_pd(p, xv);
        }
      }
    }
    double* s = acc.slot();
    for (std::size_t k = 0; k < width; ++k) s[k] = hsum(vacc[k]);
    acc.push();
  }
  acc.finish(out);
}

/// Split 4 interleaved (x, y) pairs into lane vectors. Lane order is
/// (0, 2, 1, 3) for both, which reductions do not care about and
/// interleave() undoes.
inline void deinterleave(const double* xy, __m256d& xv, __m256d& yv) {
  const __m256d a = _mm256_loadu_pd(xy);
  const __m256d b = _mm256_loadu_pd(xy + 4);
  xv = _mm256_unpacklo_pd(a, b);
  yv = _mm256_unpackhi_pd(a, b);
}

inline void interleave(double* xy, __m256d xv, __m256d yv) {
  _mm256_storeu_pd(xy, _mm256_unpacklo_pd(xv, yv));
  _mm256_storeu_pd(xy + 4, _mm256_unpackhi_pd(xv, yv));
}

/// Lane mask matching deinterleave()'s lane order for r valid samples.
inline __m256d pair_mask(std::size_t r) {
  // lanes hold samples 0, 2, 1, 3
  const __m256i idx = _mm256_setr_epi64x(0, 2, 1, 3);
  return _mm256_castsi256_pd(
      _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(r)), idx));
}

void power_sums_2d(const double* xy, std::size_t n, int K, double* out) {
  const std::size_t width = tri_size(K);
  Pairwise<kMaxWidth> acc(width);
  __m256d vacc[kMaxWidth];
  __m256d xp[kMaxPower2d + 1], yp[kMaxPower2d + 1];
  alignas(32) double buf[8];
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = block_end(start, n);
    for (std::size_t k = 0; k < width; ++k) vacc[k] = _mm256_setzero_pd();
    for (std::size_t i = start; i < end; i += 4) {
      __m256d xv, yv;
      xp[0] = _mm256_set1_pd(1.0);
      if (end - i >= 4) {
        deinterleave(xy + 2 * i, xv, yv);
      } else {
        const std::size_t r = end - i;
        for (std::size_t k = 0; k < 8; ++k) buf[k] = k < 2 * r ? xy[2 * i + k] : 0.0;
        deinterleave(buf, xv, yv);
        xp[0] = _mm256_and_pd(xp[0], pair_mask(r));
      }
      yp[0] = _mm256_set1_pd(1.0);
      for (int k = 1; k <= K; ++k) {
        xp[k] = _mm256_mul_pd(xp[k - 1], xv);
        yp[k] = _mm256_mul_pd(yp[k - 1], yv);
      }
      std::size_t idx = 0;
      for (int p = 0; p <= K; ++p)
        for (int q = 0; q <= K - p; ++q, ++idx) vacc[idx] = _mm256_fmadd_pd(xp[p], yp[q], vacc[idx]);
    }
    double* s = acc.slot();
    for (std::size_t k = 0; k < width; ++k) s[k] = hsum(vacc[k]);
    acc.push();
  }
  acc.finish(out);
}

inline __m256d horner(const double* c, int deg, __m256d x) {
  __m256d r = _mm256_set1_pd(c[deg]);
  for (int k = deg - 1; k >= 0; --k) r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c[k]));
  return r;
}

double poly_increment(const double* base, double* target, std::size_t n, const double* p,
                      int p_deg, const double* q, int q_deg) {
  Pairwise<1> acc(1);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = block_end(start, n);
    __m256d s = _mm256_setzero_pd();
    for (std::size_t i = start; i < end; i += 4) {
      const bool full = end - i >= 4;
      const __m256i m = tail_mask(end - i);
      const __m256d b = full ? _mm256_loadu_pd(base + i) : _mm256_maskload_pd(base + i, m);
      const __m256d t = full ? _mm256_loadu_pd(target + i) : _mm256_maskload_pd(target + i, m);
      __m256d d = horner(p, p_deg, b);
      if (q) d = _mm256_fmadd_pd(horner(q, q_deg, b), t, d);
      if (!full) d = _mm256_and_pd(d, _mm256_castsi256_pd(m));
      const __m256d r = _mm256_add_pd(t, d);
      if (full)
        _mm256_storeu_pd(target + i, r);
      else
        _mm256_maskstore_pd(target + i, m, r);
      s = _mm256_fmadd_pd(d, d, s);
    }
    *acc.slot() = hsum(s);
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

double poly_increment_2d(double* xy, std::size_t n, const double* px, const double* py, int deg) {
  Pairwise<1> acc(1);
  __m256d xp[kMaxPower2d + 1], yp[kMaxPower2d + 1];
  alignas(32) double buf[8];
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = block_end(start, n);
    __m256d s = _mm256_setzero_pd();
    for (std::size_t i = start; i < end; i += 4) {
      const std::size_t r = end - i;
      __m256d xv, yv;
      double* src = xy + 2 * i;
      if (r >= 4) {
        deinterleave(src, xv, yv);
      } else {
        for (std::size_t k = 0; k < 8; ++k) buf[k] = k < 2 * r ? src[k] : 0.0;
        deinterleave(buf, xv, yv);
      }
      xp[0] = yp[0] = _mm256_set1_pd(1.0);
      for (int k = 1; k <= deg; ++k) {
        xp[k] = _mm256_mul_pd(xp[k - 1], xv);
        yp[k] = _mm256_mul_pd(yp[k - 1], yv);
      }
      __m256d dx = _mm256_setzero_pd(), dy = _mm256_setzero_pd();
      std::size_t idx = 0;
      for (int a = 0; a <= deg; ++a)
        for (int b = 0; b <= deg - a; ++b, ++idx) {
          const __m256d m = _mm256_mul_pd(xp[a], yp[b]);
          dx = _mm256_fmadd_pd(_mm256_set1_pd(px[idx]), m, dx);
          dy = _mm256_fmadd_pd(_mm256_set1_pd(py[idx]), m, dy);
        }
      if (r < 4) {
        const __m256d m = pair_mask(r);
        dx = _mm256_and_pd(dx, m);
        dy = _mm256_and_pd(dy, m);
      }
      s = _mm256_fmadd_pd(dx, dx, s);
      s = _mm256_fmadd_pd(dy, dy, s);
      xv = _mm256_add_pd(xv, dx);
      yv = _mm256_add_pd(yv, dy);
      if (r >= 4) {
        interleave(src, xv, yv);
      } else {
        interleave(buf, xv, yv);
        for (std::size_t k = 0; k < 2 * r; ++k) src[k] = buf[k];
      }
    }
    *acc.slot() = hsum(s);
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

template <class Body>
inline double reduce(std::size_t n, Body body) {
  Pairwise<1> acc(1);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t end = block_end(start, n);
    __m256d s = _mm256_setzero_pd();
    std::size_t i = start;
    for (; i + 4 <= end; i += 4) s = body(s, i, _mm256_castsi256_pd(_mm256_set1_epi64x(-1)), true);
    if (i < end) s = body(s, i, _mm256_castsi256_pd(tail_mask(end - i)), false);
    *acc.slot() = hsum(s);
    acc.push();
  }
  double out;
  acc.finish(&out);
  return out;
}

inline __m256d load(const double* p, __m256d mask, bool full) {
  return full ? _mm256_loadu_pd(p) : _mm256_maskload_pd(p, _mm256_castpd_si256(mask));
}

double dot(const double* a, const double* b, std::size_t n) {
  return reduce(n, [&](__m256d s, std::size_t i, __m256d m, bool full) {
    return _mm256_fmadd_pd(load(a + i, m, full), load(b + i, m, full), s);
  });
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
  zero(out, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const __m256d wr = _mm256_set1_pd(w[r]);
    const double* row = J + r * cols;
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4)
      _mm256_storeu_pd(out + c, _mm256_fmadd_pd(wr, _mm256_loadu_pd(row + c), _mm256_loadu_pd(out + c)));
    for (; c < cols; ++c) out[c] += w[r] * row[c];
  }
}

double sum(const double* x, std::size_t n) {
  return reduce(n, [&](__m256d s, std::size_t i, __m256d m, bool full) {
    return _mm256_add_pd(s, load(x + i, m, full));
  });
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

double diff_sum_squares(const double* a, const double* b, std::size_t n) {
  return reduce(n, [&](__m256d s, std::size_t i, __m256d m, bool full) {
    const __m256d d = _mm256_sub_pd(load(a + i, m, full), load(b + i, m, full));
    return _mm256_fmadd_pd(d, d, s);
  });
}

constexpr KernelTable kAvx2{
    "avx2", power_sums, power_sums_2d, poly_increment, poly_increment_2d, gram,
    gemv_t, sum,        sum_squares,   diff_sum_squares,
};

}  // namespace

const KernelTable* avx2_table_unchecked() noexcept { return &kAvx2; }

}  // namespace pos::kernels

#else

namespace pos::kernels {
const KernelTable* avx2_table_unchecked() noexcept { return nullptr; }
}  // namespace pos::kernels

#endif
