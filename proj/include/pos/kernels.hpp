#pragma once

// Data-parallel inner loops of the sampler. Every kernel exists as a scalar
// reference implementation and, on x86-64, as an AVX2/FMA variant; the variant
// is chosen once at runtime. Reductions over samples use blocked pairwise
// summation with a fixed block size, so a given kernel table is deterministic
// for a given input regardless of thread count. Scalar and AVX2 results agree
// to rounding, not bitwise.

#include <cstddef>
#include <string_view>

namespace pos::kernels {

/// Samples per leaf block of the pairwise reduction tree.
inline constexpr std::size_t kBlock = 256;

/// Largest power handled by the power-sum kernels.
inline constexpr int kMaxPower = 40;
/// Largest total degree handled by power_sums_2d and poly_increment_2d.
inline constexpr int kMaxPower2d = 16;
/// Largest weight-channel count of power_sums.
inline constexpr std::size_t kMaxChannels = 4;

/// Number of entries of a triangular bivariate table with p + q <= K.
constexpr std::size_t tri_size(int K) noexcept {
  return static_cast<std::size_t>(K + 1) * static_cast<std::size_t>(K + 2) / 2;
}
/// Index of x^p y^q in a triangular table of order K (rows by p).
constexpr std::size_t tri_index(int K, int p, int q) noexcept {
  // rows p = 0..K hold K+1-p entries each
  const auto pp = static_cast<std::size_t>(p);
  return pp * static_cast<std::size_t>(K + 1) - pp * (pp - 1) / 2 + static_cast<std::size_t>(q);
}

struct KernelTable {
  const char* name;

  /// out[c*(K+1) + k] = sum_n w_c[n] * x[n]^k for k = 0..K. A null weight
  /// pointer stands for all-ones.
  void (*power_sums)(const double* x, std::size_t n, const double* const* weights,
                     std::size_t channels, int K, double* out);

  /// xy interleaved (x0 y0 x1 y1 ...); out[tri_index(K,p,q)] = sum x^p y^q.
  void (*power_sums_2d)(const double* xy, std::size_t n, int K, double* out);

  /// target[n] += P(base[n]) + Q(base[n]) * target[n]; returns sum of squared
  /// increments. Coefficients are ascending; q may be null (q_deg ignored).
  /// base and target may alias.
  double (*poly_increment)(const double* base, double* target, std::size_t n, const double* p,
                           int p_deg, const double* q, int q_deg);

  /// In-place (x, y) += (P(x,y), Q(x,y)) with triangular coefficient tables of
  /// order deg; returns sum of squared increments.
  double (*poly_increment_2d)(double* xy, std::size_t n, const double* px, const double* py,
                              int deg);

  /// u (rows x rows, full symmetric) = J J^T for row-major J (rows x cols).
  void (*gram)(const double* J, std::size_t rows, std::size_t cols, double* u);

  /// out[c] = sum_r w[r] * J[r, c].
  void (*gemv_t)(const double* J, std::size_t rows, std::size_t cols, const double* w,
                 double* out);

  double (*sum)(const double* x, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  /// sum (a - b)^2
  double (*diff_sum_squares)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

/// AVX2/FMA table, or nullptr when not compiled in or unsupported by the CPU.
const KernelTable* avx2_table() noexcept;

/// Currently selected table. Defaults to the best supported variant, unless
/// the POS_KERNELS environment variable says "scalar".
const KernelTable& active() noexcept;

/// Select "scalar", "avx2" or "auto". Not thread-safe against concurrent
/// kernel calls; call during start-up. Throws InvalidInput for unknown or
/// unsupported names.
void select(std::string_view name);

}  // namespace pos::kernels
