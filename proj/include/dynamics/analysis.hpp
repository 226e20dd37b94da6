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
#ifndef DYNAMICS_ANALYSIS_HPP_
#define DYNAMICS_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dynamics/apportion.hpp"
#include "dynamics/clustering.hpp"
#include "dynamics/random.hpp"
#include "dynamics/sampler.hpp"
#include "dynamics/scaling.hpp"
#include "dynamics/store.hpp"
#include "json.hpp"

namespace dynamics {

inline constexpr const char* kReportSchema = "dynamics-report/1";

// Gini coefficient over ascending-sorted sizes:
//   sum_i (2i - n - 1) x_(i) / (n * sum x),  i = 1..n
// Zero for a uniform or all-zero vector.
template <typename T>
double gini(std::span<const T> values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  std::vector<long double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  long double sum = 0.0L, weighted = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    sum += x[i];
    weighted += (2.0L * static_cast<long double>(i + 1) -
                 static_cast<long double>(n) - 1.0L) * x[i];
  }
  if (sum <= 0.0L) return 0.0;
  return static_cast<double>(weighted / (static_cast<long double>(n) * sum));
}

template <typename T>
double gini(const std::vector<T>& values) {
  return gini(std::span<const T>(values));
}

struct DistributionReport {
  std::size_t n_clusters = 0;
  std::uint64_t total = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  double mean = 0.0;
  double gini = 0.0;
  // Share of samples held by the largest max(1, ceil(n/100)) clusters.
  double head_share_1pct = 0.0;
  // Fraction of clusters with fewer than `tail_threshold` samples.
  double tail_share = 0.0;
  std::uint64_t tail_threshold = 1000;
};

inline DistributionReport distribution_report(std::span<const std::uint64_t> counts,
                                              std::uint64_t tail_threshold = 1000) {
  DistributionReport r;
  r.tail_threshold = tail_threshold;
  r.n_clusters = counts.size();
  if (counts.empty()) return r;
  std::vector<std::uint64_t> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  r.total = std::accumulate(sorted.begin(), sorted.end(), std::uint64_t{0});
  r.max = sorted.front();
  r.min = sorted.back();
  r.mean = static_cast<double>(r.total) / static_cast<double>(sorted.size());
  r.gini = gini(counts);
  const std::size_t head = std::max<std::size_t>(1, (sorted.size() + 99) / 100);
  const std::uint64_t head_sum =
      std::accumulate(sorted.begin(), sorted.begin() + head, std::uint64_t{0});
  r.head_share_1pct =
      r.total ? static_cast<double>(head_sum) / static_cast<double>(r.total) : 0.0;
  const auto below = std::count_if(sorted.begin(), sorted.end(),
                                   [&](std::uint64_t c) { return c < tail_threshold; });
  r.tail_share = static_cast<double>(below) / static_cast<double>(sorted.size());
  return r;
}

inline DistributionReport distribution_report(const std::vector<std::uint64_t>& counts,
                                              std::uint64_t tail_threshold = 1000) {
  return distribution_report(std::span<const std::uint64_t>(counts), tail_threshold);
}

// Report over a plan's integer targets.
inline DistributionReport describe_plan(const ScalingPlan& plan,
                                        std::uint64_t tail_threshold = 1000) {
  return distribution_report(plan.targets_int, tail_threshold);
}

inline nlohmann::json to_json(const DistributionReport& r) {
  return {{"n_clusters", r.n_clusters}, {"total", r.total},
          {"min", r.min},               {"max", r.max},
          {"mean", r.mean},             {"gini", r.gini},
          {"head_share_1pct", r.head_share_1pct},
          {"tail_share", r.tail_share}, {"tail_threshold", r.tail_threshold}};
}

// ---------------------------------------------------------------------------
// Synthetic long-tail data.

struct SyntheticSpec {
  std::uint32_t n_clusters = 1000;
  double zipf_exponent = 1.2;
  std::uint64_t total_samples = 100000;
  std::uint32_t dim = 64;
  double intra_cluster_noise = 0.05;
  std::uint64_t seed = 0;
  // Upper bound on pairwise cosine between generating centers.
  double max_center_similarity = 0.5;
  std::uint32_t max_rejections = 10000;
};

struct SyntheticData {
  EmbeddingStore store;
  ClusterAssignment truth;
  std::vector<float> centers;  // n_clusters x dim, unit rows
  std::vector<std::uint64_t> sizes;
};

// Cluster sizes proportional to rank^-exponent, apportioned to `total`.
inline std::vector<std::uint64_t> zipf_sizes(std::uint32_t n_clusters,
                                             double exponent, std::uint64_t total) {
  std::vector<double> w(n_clusters);
  double sum = 0.0;
  for (std::uint32_t r = 0; r < n_clusters; ++r) {
    w[r] = std::pow(static_cast<double>(r + 1), -exponent);
    sum += w[r];
  }
  for (auto& x : w) x = x / sum * static_cast<double>(total);
  return largest_remainder(w, total);
}

inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_clusters < 2) throw ConfigError("synthetic data needs at least 2 clusters");
  if (spec.total_samples < spec.n_clusters) {
    throw ConfigError("total samples must be at least the number of clusters");
  }
  if (spec.dim == 0) throw ConfigError("dim must be positive");
  if (!(spec.zipf_exponent >= 0.0) || !std::isfinite(spec.zipf_exponent)) {
    throw ConfigError("zipf exponent must be finite and non-negative");
  }
  if (!(spec.intra_cluster_noise >= 0.0)) {
    throw ConfigError("noise must be non-negative");
  }
  const std::size_t dim = spec.dim;
  const std::size_t k = spec.n_clusters;

  SyntheticData out;
  out.centers.resize(k * dim);
  {
    auto rng = derive_stream(spec.seed, stream_domain::kSynthCenters, 0);
    std::vector<double> g(dim);
    for (std::size_t c = 0; c < k; ++c) {
      float* dst = out.centers.data() + c * dim;
      std::uint32_t attempts = 0;
      for (;;) {
        if (attempts++ >= spec.max_rejections) {
          throw GenerationError(
              "could not place " + std::to_string(k) + " centers with pairwise "
              "cosine below " + std::to_string(spec.max_center_similarity) +
              " in dim " + std::to_string(dim) + "; try a higher dim");
        }
        for (auto& v : g) v = rng.normal();
        double sq = 0.0;
        for (double v : g) sq += v * v;
        if (!(sq > 0.0)) continue;
        detail::normalize_into(g.data(), dim, dst);
        bool ok = true;
        for (std::size_t o = 0; o < c && ok; ++o) {
          ok = dot(dst, out.centers.data() + o * dim, dim) <
               spec.max_center_similarity;
        }
        if (ok) break;
      }
    }
  }

  out.sizes = zipf_sizes(spec.n_clusters, spec.zipf_exponent, spec.total_samples);
  const std::uint64_t n = spec.total_samples;
  std::vector<float> rows(n * dim);
  std::vector<SampleId> ids(n);
  out.truth.clusters.resize(n);
  out.truth.counts = out.sizes;

  std::vector<std::size_t> start(k + 1, 0);
  for (std::size_t c = 0; c < k; ++c) start[c + 1] = start[c] + out.sizes[c];
  for (std::size_t c = 0; c < k; ++c) {
    auto rng = derive_stream(spec.seed, stream_domain::kSynthPoints, c);
    const float* center = out.centers.data() + c * dim;
    std::vector<double> v(dim);
    for (std::size_t i = start[c]; i < start[c + 1]; ++i) {
      float* dst = rows.data() + i * dim;
      ids[i].value = i;
      out.truth.clusters[i] = static_cast<std::uint32_t>(c);
      if (spec.intra_cluster_noise == 0.0) {
        std::copy_n(center, dim, dst);
        continue;
      }
      double sq = 0.0;
      do {
        sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          v[j] = center[j] + spec.intra_cluster_noise * rng.normal();
          sq += v[j] * v[j];
        }
      } while (!(sq > 0.0));
      detail::normalize_into(v.data(), dim, dst);
    }
  }
  out.truth.ids = ids;
  out.store = EmbeddingStore(spec.dim, std::move(ids), std::move(rows));
  return out;
}

// ---------------------------------------------------------------------------
// Multi-epoch coverage.

struct CoverageReport {
  SamplingMode mode = SamplingMode::kClusterDynamic;
  std::uint64_t epochs = 0;
  std::uint64_t trials = 0;
  std::vector<std::uint64_t> counts;
  std::vector<double> mean_unique;  // per cluster, averaged over trials
  std::vector<double> expected_unique;  // closed form per cluster
  std::vector<double> unique_fraction_by_epoch;  // aggregate, epochs entries
  double unique_fraction = 0.0;
};

// Expected distinct ids of a cluster of size c seen after E epochs when each
// epoch draws S of them without replacement, independently across epochs.
inline double expected_unique_dynamic(std::uint64_t c, std::uint64_t s,
                                      std::uint64_t epochs) {
  if (c == 0) return 0.0;
  if (s >= c) return static_cast<double>(c);
  const double p = static_cast<double>(s) / static_cast<double>(c);
  return static_cast<double>(c) *
         (1.0 - std::pow(1.0 - p, static_cast<double>(epochs)));
}

inline double expected_unique(const ScalingPlan& plan, const SamplerConfig& cfg,
                              std::size_t i, std::uint64_t epochs) {
  const std::uint64_t c = plan.counts[i];
  const std::uint64_t s = plan.targets_int[i];
  const double cd = static_cast<double>(c);
  const double e = static_cast<double>(epochs);
  switch (cfg.mode) {
    case SamplingMode::kClusterDynamic:
      return expected_unique_dynamic(c, s, epochs);
    case SamplingMode::kClusterStatic:
      return static_cast<double>(std::min(c, s));
    case SamplingMode::kRandomStatic: {
      std::uint64_t n = 0;
      for (auto x : plan.counts) n += x;
      const double m = std::floor(*cfg.keep_fraction * static_cast<double>(n));
      return n ? cd * m / static_cast<double>(n) : 0.0;
    }
    case SamplingMode::kRandomDynamic:
      return cd * (1.0 - std::pow(1.0 - *cfg.keep_fraction, e));
    case SamplingMode::kBernoulliDynamic: {
      if (c == 0) return 0.0;
      if (s >= c) return cd;
      return cd * (1.0 - std::pow(1.0 - static_cast<double>(s) / cd, e));
    }
  }
  return 0.0;
}

// Runs the real sampler for `epochs` epochs, `trials` times with seeds
// config.seed + t, on a synthetic assignment shaped like plan.counts.
inline CoverageReport coverage_sim(const ScalingPlan& plan, const SamplerConfig& config,
                                   std::uint64_t epochs, std::uint64_t trials,
                                   unsigned threads = 1) {
  if (trials == 0) throw ConfigError("trials must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  check_plan(plan);
  const std::size_t k = plan.size();

  ClusterAssignment a;
  a.counts = plan.counts;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::uint64_t j = 0; j < plan.counts[c]; ++j) {
      a.ids.push_back(SampleId{a.ids.size()});
      a.clusters.push_back(static_cast<std::uint32_t>(c));
    }
  }
  const std::size_t n = a.size();

  CoverageReport rep;
  rep.mode = config.mode;
  rep.epochs = epochs;
  rep.trials = trials;
  rep.counts = plan.counts;
  rep.mean_unique.assign(k, 0.0);
  rep.expected_unique.resize(k);
  rep.unique_fraction_by_epoch.assign(epochs, 0.0);

  // Trials are independent; each fills its own slot and slots are summed in
  // trial order afterwards.
  std::vector<std::vector<std::uint64_t>> unique(trials);
  std::vector<std::vector<std::uint64_t>> curve(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    SamplerConfig cfg = config;
    cfg.seed = config.seed + t;
    cfg.epochs = epochs;
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::uint64_t> per(k, 0);
    std::uint64_t distinct = 0;
    curve[t].resize(epochs);
    for (std::uint64_t e = 0; e < epochs; ++e) {
      const EpochManifest m = sample_epoch(a, plan, cfg, e);
      for (const auto& entry : m.entries) {
        auto& s = seen[entry.id.value];
        if (!s) {
          s = 1;
          ++per[entry.cluster];
          ++distinct;
        }
      }
      curve[t][e] = distinct;
    }
    unique[t] = std::move(per);
  });

  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t c = 0; c < k; ++c) rep.mean_unique[c] += static_cast<double>(unique[t][c]);
    for (std::uint64_t e = 0; e < epochs; ++e)
      rep.unique_fraction_by_epoch[e] += static_cast<double>(curve[t][e]);
  }
  for (auto& v : rep.mean_unique) v /= static_cast<double>(trials);
  const double denom = static_cast<double>(trials) * static_cast<double>(std::max<std::size_t>(n, 1));
  for (auto& v : rep.unique_fraction_by_epoch) v /= denom;
  rep.unique_fraction = rep.unique_fraction_by_epoch.back();
  for (std::size_t c = 0; c < k; ++c) rep.expected_unique[c] = expected_unique(plan, config, c, epochs);
  return rep;
}

inline nlohmann::json to_json(const CoverageReport& r) {
  return {{"schema", kReportSchema},
          {"kind", "coverage"},
          {"mode", std::string(to_string(r.mode))},
          {"epochs", r.epochs},
          {"trials", r.trials},
          {"counts", r.counts},
          {"mean_unique", r.mean_unique},
          {"expected_unique", r.expected_unique},
          {"unique_fraction_by_epoch", r.unique_fraction_by_epoch},
          {"unique_fraction", r.unique_fraction}};
}

// ---------------------------------------------------------------------------
// Sweeps.

inline const std::vector<double>& default_alpha_grid() {
  static const std::vector<double> grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0};
  return grid;
}

struct AlphaSweepPoint {
  double alpha = 0.0;
  ScalingPlan plan;
  DistributionReport report;  // over targets_int
  double gini_real = 0.0;     // over targets_real
};

inline std::vector<AlphaSweepPoint> alpha_sweep(std::span<const std::uint64_t> counts,
                                                std::span<const double> alphas,
                                                double target_total,
                                                std::uint64_t tail_threshold = 1000) {
  std::vector<AlphaSweepPoint> out;
  out.reserve(alphas.size());
  for (double alpha : alphas) {
    AlphaSweepPoint p;
    p.alpha = alpha;
    p.plan = compute_targets(counts, alpha, target_total);
    p.report = describe_plan(p.plan, tail_threshold);
    p.gini_real = gini(p.plan.targets_real);
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<AlphaSweepPoint>& sweep) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : sweep) {
    points.push_back({{"alpha", p.alpha},
                      {"gini_real", p.gini_real},
                      {"targets", to_json(p.report)}});
  }
  return {{"schema", kReportSchema}, {"kind", "alpha_sweep"}, {"points", points}};
}

// Settings shared by the full train -> merge -> recount -> scale chain.
struct PipelineParams {
  std::uint32_t iterations = 10;
  std::uint64_t max_points_per_centroid = 1000;
  double merge_threshold = 0.7;
  double alpha = 0.2;
  double target_fraction = 0.5;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ClusterSweepPoint {
  std::uint32_t k = 0;
  std::uint32_t live_k = 0;
  DistributionReport counts;   // post-merge cluster sizes
  DistributionReport targets;  // integer targets
  ScalingPlan plan;
};

// Expects a normalized store.
inline std::vector<ClusterSweepPoint> cluster_count_sweep(
    const EmbeddingStore& store, std::span<const std::uint32_t> ks,
    const PipelineParams& params, std::uint64_t tail_threshold = 1000) {
  std::vector<ClusterSweepPoint> out;
  for (std::uint32_t k : ks) {
    KMeansOptions opt;
    opt.k = k;
    opt.iterations = params.iterations;
    opt.max_points_per_centroid = params.max_points_per_centroid;
    opt.seed = params.seed;
    opt.threads = params.threads;
    const KMeansResult trained = train_kmeans(store, opt);
    const ClusterAssignment raw = assign(store, trained.model, params.threads);
    const ClusterModel merged = merge_centroids(trained.model, params.merge_threshold);
    const ClusterAssignment asg = recount_after_merge(raw, merged);
    ClusterSweepPoint p;
    p.k = k;
    p.live_k = merged.k;
    p.plan = compute_targets(asg.counts, params.alpha,
                             params.target_fraction * static_cast<double>(store.size()));
    p.counts = distribution_report(asg.counts, tail_threshold);
    p.targets = describe_plan(p.plan, tail_threshold);
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<ClusterSweepPoint>& sweep) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : sweep) {
    points.push_back({{"k", p.k},
                      {"live_k", p.live_k},
                      {"counts", to_json(p.counts)},
                      {"targets", to_json(p.targets)}});
  }
  return {{"schema", kReportSchema}, {"kind", "cluster_sweep"}, {"points", points}};
}

}  // namespace dynamics

#endif  // DYNAMICS_ANALYSIS_HPP_
