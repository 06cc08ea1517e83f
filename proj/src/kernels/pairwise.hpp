#pragma once

// Streaming pairwise reduction over fixed-size sample blocks. Both kernel
// variants push one partial-sum vector per block of kBlock samples; partials
// are merged like a binary counter, so the reduction tree depends only on the
// number of blocks. Everything here has internal linkage: this header is also
// compiled with -mavx2, and must not leak AVX2 code into shared symbols.

#include <cstddef>
#include <cstring>

#include "pos/kernels.hpp"

namespace pos::kernels::detail {
namespace {

constexpr std::size_t kMaxWidth = 168;
constexpr int kMaxDepth = 48;

static_assert(kMaxChannels * (kMaxPower + 1) <= kMaxWidth);

template <std::size_t W>
class Pairwise {
 public:
  explicit Pairwise(std::size_t width) : width_(width) {}

  /// Buffer for the next block partial; fill width() entries, then push().
  double* slot() noexcept { return stack_[depth_]; }
  std::size_t width() const noexcept { return width_; }

  void push() noexcept {
    level_[depth_] = 0;
    ++depth_;
    while (depth_ >= 2 && level_[depth_ - 1] == level_[depth_ - 2]) {
      merge(depth_ - 2, depth_ - 1);
      ++level_[depth_ - 2];
      --depth_;
    }
  }

  void finish(double* out) noexcept {
    if (depth_ == 0) {
      std::memset(out, 0, width_ * sizeof(double));
      return;
    }
    for (int i = depth_ - 1; i > 0; --i) merge(i - 1, i);
    std::memcpy(out, stack_[0], width_ * sizeof(double));
  }

 private:
  void merge(int into, int from) noexcept {
    double* a = stack_[into];
    const double* b = stack_[from];
    for (std::size_t k = 0; k < width_; ++k) a[k] += b[k];
  }

  std::size_t width_;
  int depth_ = 0;
  int level_[kMaxDepth];
  double stack_[kMaxDepth][W];
};

inline std::size_t block_count(std::size_t n) noexcept { return (n + kBlock - 1) / kBlock; }

}  // namespace
}  // namespace pos::kernels::detail
