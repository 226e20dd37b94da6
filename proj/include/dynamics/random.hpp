/* Copyright 2026 The Dynamics Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DYNAMICS_RANDOM_HPP_
#define DYNAMICS_RANDOM_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

namespace dynamics {

// Finalizer of splitmix64; a bijective 64-bit mixer with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Reserved values for the `epoch` slot of derive_stream, so that streams used
// outside per-epoch sampling never collide with an epoch key.
namespace stream_domain {
inline constexpr std::uint64_t kKMeansSubset = 0xD1A0'0000'0000'0001ULL;
inline constexpr std::uint64_t kKMeansInit = 0xD1A0'0000'0000'0002ULL;
inline constexpr std::uint64_t kSynthCenters = 0xD1A0'0000'0000'0003ULL;
inline constexpr std::uint64_t kSynthPoints = 0xD1A0'0000'0000'0004ULL;
// `cluster` slot value for streams that span the whole dataset.
inline constexpr std::uint64_t kGlobal = 0xFFFF'FFFF'FFFF'FFFFULL;
inline constexpr std::uint64_t kShuffle = 0xFFFF'FFFF'FFFF'FFFEULL;
}  // namespace stream_domain

// Philox4x32-10 counter-based generator. The output at position i depends
// only on (key, i), so a stream can be reproduced from its key alone and
// any number of streams can be consumed concurrently.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  explicit CounterStream(std::uint64_t key) noexcept
      : key_{static_cast<std::uint32_t>(key),
             static_cast<std::uint32_t>(key >> 32)} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (lane_ == 2) {
      block_ = philox(counter_++);
      lane_ = 0;
    }
    const std::uint64_t lo = block_[2 * lane_];
    const std::uint64_t hi = block_[2 * lane_ + 1];
    ++lane_;
    return lo | (hi << 32);
  }

  // Uniform integer in [0, bound) by Lemire's multiply-shift with rejection;
  // exact and platform independent.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  // Standard normal deviate by Box-Muller.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::array<std::uint32_t, 4> philox(std::uint64_t ctr) const noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(ctr),
                                   static_cast<std::uint32_t>(ctr >> 32), 0u,
                                   0u};
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
      k0 += kW0;
      k1 += kW1;
    }
    return c;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int lane_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t epoch,
                                std::uint64_t cluster) noexcept {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ mix64(epoch + 0x632BE59BD9B4E019ULL));
  h = mix64(h ^ mix64(cluster + 0x8CB92BA72F3D8DD7ULL));
  return h;
}

// Keyed stream for one (seed, epoch, cluster) triple. Same triple, same
// sequence; any change in the triple yields an unrelated sequence.
inline CounterStream derive_stream(std::uint64_t seed, std::uint64_t epoch,
                                   std::uint64_t cluster) noexcept {
  return CounterStream(stream_key(seed, epoch, cluster));
}

// Selects `m` distinct positions out of [0, n) by a partial Fisher-Yates
// shuffle and returns them sorted ascending.
inline std::vector<std::uint64_t> draw_without_replacement(CounterStream& rng,
                                                           std::uint64_t n,
                                                           std::uint64_t m) {
  std::vector<std::uint64_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::uint64_t{0});
  m = std::min(m, n);
  for (std::uint64_t j = 0; j < m; ++j) {
    const std::uint64_t r = j + rng.below(n - j);
    std::swap(pool[j], pool[r]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

template <typename T>
void shuffle(std::span<T> items, CounterStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace dynamics

#endif  // DYNAMICS_RANDOM_HPP_
