#include "pos/rng.hpp"

#include <cmath>
#include <numbers>

namespace pos {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint32_t run) noexcept : seed_(seed), run_(run) {}

void NoiseStream::fill(std::uint32_t step, NoisePurpose purpose, std::span<double> out) const noexcept {
  const PhiloxKey key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  const std::size_t n = out.size();
  for (std::size_t j = 0; 2 * j < n; ++j) {
    const PhiloxCounter r = philox4x32(
        {static_cast<std::uint32_t>(j), step, run_, static_cast<std::uint32_t>(purpose)}, key);
    const double u1 = unit_open(r[0], r[1]);
    const double u2 = unit_open(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    out[2 * j] = rad * std::cos(ang);
    if (2 * j + 1 < n) out[2 * j + 1] = rad * std::sin(ang);
  }
}

}  // namespace pos
