#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace pos {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al. 2011 parameters).
PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) noexcept;

/// What a block of normals is used for. Part of the counter, so streams for
/// different purposes never overlap.
enum class NoisePurpose : std::uint32_t { initial = 0, increment = 1, bridge = 2, resample = 3 };

/// Reproducible standard-normal draws addressed by (seed, run, step, purpose,
/// index). Any element can be regenerated without touching the others, so
/// paired POS/reference runs see identical noise and work can be split across
/// threads freely.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint32_t run) noexcept;

  /// Fill out with independent N(0,1) draws for (step, purpose).
  void fill(std::uint32_t step, NoisePurpose purpose, std::span<double> out) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t run() const noexcept { return run_; }

 private:
  std::uint64_t seed_;
  std::uint32_t run_;
};

}  // namespace pos
