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
#ifndef DYNAMICS_APPORTION_HPP_
#define DYNAMICS_APPORTION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "dynamics/common.hpp"

namespace dynamics {

// Largest-remainder (Hamilton) apportionment: floors every quota, then hands
// the missing units to the largest fractional parts, lower index first on
// ties. The result sums to `total` exactly.
//
// Entries with eligible[i] == 0 never receive a unit; pass an empty span
// to make every entry eligible. Quotas are expected to sum to roughly
// `total`; floating-point drift in either direction is absorbed.
inline std::vector<std::uint64_t> largest_remainder(
    std::span<const double> quotas, std::uint64_t total,
    std::span<const std::uint8_t> eligible = {}) {
  const std::size_t n = quotas.size();
  auto ok = [&](std::size_t i) { return eligible.empty() || eligible[i]; };

  std::vector<std::uint64_t> seats(n, 0);
  std::vector<double> frac(n, 0.0);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = quotas[i];
    if (!(q >= 0.0) || !std::isfinite(q)) {
      throw ConfigError("apportionment quota must be finite and non-negative");
    }
    if (!ok(i)) continue;
    const double f = std::floor(q);
    seats[i] = static_cast<std::uint64_t>(f);
    frac[i] = q - f;
    assigned += seats[i];
  }

  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (ok(i)) order.push_back(i);
  if (order.empty()) {
    if (total != 0) throw ConfigError("no eligible entry to apportion into");
    return seats;
  }

  if (assigned < total) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    std::uint64_t missing = total - assigned;
    // More than one pass only happens when quotas undershoot badly.
    while (missing > 0) {
      for (std::size_t i : order) {
        if (missing == 0) break;
        ++seats[i];
        --missing;
      }
    }
  } else if (assigned > total) {
    // Drift upward: take units back from the smallest remainders first.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] < frac[b]; });
    std::uint64_t excess = assigned - total;
    while (excess > 0) {
      bool progressed = false;
      for (std::size_t i : order) {
        if (excess == 0) break;
        if (seats[i] == 0) continue;
        --seats[i];
        --excess;
        progressed = true;
      }
      if (!progressed) break;
    }
  }
  return seats;
}

}  // namespace dynamics

#endif  // DYNAMICS_APPORTION_HPP_
