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
#ifndef DYNAMICS_SCALING_HPP_
#define DYNAMICS_SCALING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dynamics/apportion.hpp"
#include "dynamics/common.hpp"
#include "json.hpp"

namespace dynamics {

// Per-cluster resampling budget derived from cluster sizes.
//
//   targets_real[i] = counts[i]^alpha / sum_j counts[j]^alpha * target_total
//   targets_int     = largest-remainder integerization summing to
//                     round(target_total)
//   rates[i]        = targets_int[i] / counts[i]
//
// Empty clusters get weight 0 for every alpha (including alpha == 0) and are
// left out of the denominator.
struct ScalingPlan {
  double alpha = 0.0;
  double target_total = 0.0;
  std::vector<std::uint64_t> counts;
  std::vector<double> targets_real;
  std::vector<std::uint64_t> targets_int;
  std::vector<double> rates;

  std::size_t size() const noexcept { return counts.size(); }
};

namespace detail {

// Power weights c^alpha. Evaluated directly while the largest term is safely
// below the double range, so alpha = 0 gives exactly 1 and alpha = 1 gives
// exactly c. Beyond that, weights are rescaled by the largest count in log
// space.
inline std::vector<double> power_weights(std::span<const std::uint64_t> counts,
                                         double alpha) {
  std::uint64_t cmax = 0;
  for (auto c : counts) cmax = std::max(cmax, c);
  std::vector<double> w(counts.size(), 0.0);
  const double log_max = std::log(static_cast<double>(cmax));
  const bool direct = alpha * log_max < 600.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    const double c = static_cast<double>(counts[i]);
    w[i] = direct ? std::pow(c, alpha)
                  : std::exp(alpha * (std::log(c) - log_max));
  }
  return w;
}

}  // namespace detail

inline ScalingPlan compute_targets(std::span<const std::uint64_t> counts,
                                   double alpha, double target_total) {
  if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
  if (alpha < 0.0) {
    throw ConfigError("alpha must be >= 0 (got " + std::to_string(alpha) + ")");
  }
  if (!std::isfinite(target_total) || !(target_total > 0.0)) {
    throw ConfigError("target total must be a positive finite number");
  }
  if (std::none_of(counts.begin(), counts.end(),
                   [](std::uint64_t c) { return c > 0; })) {
    throw ConfigError("at least one cluster must be non-empty");
  }

  ScalingPlan plan;
  plan.alpha = alpha;
  plan.target_total = target_total;
  plan.counts.assign(counts.begin(), counts.end());

  const std::vector<double> w = detail::power_weights(counts, alpha);
  double denom = 0.0;
  for (double x : w) denom += x;

  plan.targets_real.resize(counts.size());
  std::vector<std::uint8_t> nonempty(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    plan.targets_real[i] = w[i] * target_total / denom;
    nonempty[i] = counts[i] > 0;
  }

  plan.targets_int = largest_remainder(
      plan.targets_real, static_cast<std::uint64_t>(std::llround(target_total)),
      nonempty);

  plan.rates.resize(counts.size(), 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0) {
      plan.rates[i] = static_cast<double>(plan.targets_int[i]) /
                      static_cast<double>(counts[i]);
    }
  }
  return plan;
}

// Sampling rate of one cluster; above 1 means the cluster is upsampled.
inline double sampling_rate(const ScalingPlan& plan, std::size_t cluster) {
  if (cluster >= plan.size()) {
    throw ConfigError("cluster index " + std::to_string(cluster) +
                      " out of range for plan of " +
                      std::to_string(plan.size()) + " clusters");
  }
  const std::uint64_t c = plan.counts[cluster];
  const std::uint64_t s = plan.targets_int[cluster];
  if (c == 0) {
    if (s > 0) {
      throw IntegrityError("cluster " + std::to_string(cluster) +
                           " is empty but has a positive target");
    }
    return 0.0;
  }
  return static_cast<double>(s) / static_cast<double>(c);
}

// Structural checks for a plan that came from outside (e.g. a JSON file).
inline void check_plan(const ScalingPlan& plan) {
  const std::size_t n = plan.counts.size();
  if (plan.targets_real.size() != n || plan.targets_int.size() != n ||
      plan.rates.size() != n) {
    throw IntegrityError("plan vectors have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.counts[i] == 0 && plan.targets_int[i] > 0) {
      throw IntegrityError("plan assigns a positive target to empty cluster " +
                           std::to_string(i));
    }
  }
}

inline nlohmann::json plan_to_json(const ScalingPlan& plan) {
  return nlohmann::json{{"alpha", plan.alpha},
                        {"target_total", plan.target_total},
                        {"counts", plan.counts},
                        {"targets_real", plan.targets_real},
                        {"targets_int", plan.targets_int},
                        {"rates", plan.rates}};
}

inline ScalingPlan plan_from_json(const nlohmann::json& j) {
  ScalingPlan plan;
  try {
    j.at("alpha").get_to(plan.alpha);
    j.at("target_total").get_to(plan.target_total);
    j.at("counts").get_to(plan.counts);
    j.at("targets_real").get_to(plan.targets_real);
    j.at("targets_int").get_to(plan.targets_int);
    j.at("rates").get_to(plan.rates);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed plan JSON: ") + e.what());
  }
  check_plan(plan);
  return plan;
}

inline void save_plan(const ScalingPlan& plan, const std::string& path) {
  detail::write_file(path, plan_to_json(plan).dump(2) + "\n");
}

inline ScalingPlan load_plan(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  return plan_from_json(j);
}

}  // namespace dynamics

#endif  // DYNAMICS_SCALING_HPP_
