#pragma once

// Counter-based random numbers (Philox4x32-10). Every draw is a pure
// function of (key, counter), so ensemble members and parallel workers never
// share generator state.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace mvfhn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  Block operator()(Block ctr) const {
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  std::array<std::uint32_t, 2> key_;
};

/// Uniform in the open interval (0, 1) from 64 random bits.
inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Keyed stream: key mixes (seed, stream); the counter carries (index, slot).
class CounterStream {
 public:
  CounterStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : philox_(splitmix64(master_seed ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL))) {}

  /// Two independent uniforms on (0,1) pairs for (index, slot).
  std::array<double, 2> uniforms(std::int64_t index, std::uint32_t slot) const {
    const auto idx = static_cast<std::uint64_t>(index);
    const auto b = philox_({static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32),
                            slot, 0x5EEDu});
    return {to_unit_open(b[0], b[1]), to_unit_open(b[2], b[3])};
  }

  /// Two independent standard normals (Box-Muller) for (index, slot).
  std::array<double, 2> normals(std::int64_t index, std::uint32_t slot) const {
    const auto [u1, u2] = uniforms(index, slot);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

 private:
  Philox4x32 philox_;
};

}  // namespace mvfhn
