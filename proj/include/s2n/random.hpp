/*
   Copyright 2026 The s2ndiff Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC'11).
//
// Every draw is a pure function of (seed, stream, index, step, sub, block),
// so results do not depend on which thread produced them or in which order.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>

namespace s2n {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr void philox_round(PhiloxCounter& c, const PhiloxKey& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds.
constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += detail::kPhiloxW0;
      key[1] += detail::kPhiloxW1;
    }
    detail::philox_round(ctr, key);
  }
  return ctr;
}

/// Purpose tag mixed into the counter so that streams used for different
/// things never overlap for the same (seed, index).
enum class Stream : std::uint32_t {
  data = 1,
  prior = 2,
  step = 3,
  forward = 4,
  monte_carlo = 5,
  reference = 6,
};

/// One independent stream of standard normals / uniforms for a given
/// (seed, purpose, index). `index` is typically the trajectory or sample id.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, Stream stream, std::uint64_t index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        lo_(static_cast<std::uint32_t>(index)),
        hi_(static_cast<std::uint32_t>((index >> 32) & 0x00FFFFFFu) |
            (static_cast<std::uint32_t>(stream) << 24)) {}

  /// Fill `out` with i.i.d. N(0,1) draws for the given step and sub-step.
  /// Two normals per Philox block (Box-Muller on two 53-bit uniforms).
  void normals(std::uint32_t step, std::span<double> out, std::uint32_t sub = 0) const {
    const std::size_t n = out.size();
    for (std::size_t i = 0, block = 0; i < n; i += 2, ++block) {
      const PhiloxCounter r = draw(step, sub, static_cast<std::uint32_t>(block));
      const double u1 = (static_cast<double>(bits53(r[0], r[1])) + 1.0) * 0x1.0p-53;  // (0,1]
      const double u2 = static_cast<double>(bits53(r[2], r[3])) * 0x1.0p-53;          // [0,1)
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      out[i] = radius * std::cos(angle);
      if (i + 1 < n) out[i + 1] = radius * std::sin(angle);
    }
  }

  double normal(std::uint32_t step, std::uint32_t sub = 0) const {
    double v = 0.0;
    normals(step, std::span<double>(&v, 1), sub);
    return v;
  }

  /// Uniform on [0,1) drawn from a block disjoint from the normals' blocks.
  double uniform(std::uint32_t step, std::uint32_t sub = 0) const {
    const PhiloxCounter r = draw(step, sub, 0xFFFFFu);
    return static_cast<double>(bits53(r[0], r[1])) * 0x1.0p-53;
  }

 private:
  static constexpr std::uint64_t bits53(std::uint32_t a, std::uint32_t b) {
    return ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
  }

  PhiloxCounter draw(std::uint32_t step, std::uint32_t sub, std::uint32_t block) const {
    // block occupies the low 20 bits, sub-step the high 12.
    const std::uint32_t c0 = (block & 0xFFFFFu) | (sub << 20);
    return philox4x32_10({c0, step, lo_, hi_}, key_);
  }

  PhiloxKey key_;
  std::uint32_t lo_;
  std::uint32_t hi_;
};

}  // namespace s2n
