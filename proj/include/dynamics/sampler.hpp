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
#ifndef DYNAMICS_SAMPLER_HPP_
#define DYNAMICS_SAMPLER_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dynamics/clustering.hpp"
#include "dynamics/common.hpp"
#include "dynamics/random.hpp"
#include "dynamics/scaling.hpp"

namespace dynamics {

enum class SamplingMode {
  kClusterDynamic,
  kClusterStatic,
  kRandomStatic,
  kRandomDynamic,
  kBernoulliDynamic,
};

inline std::string_view to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::kClusterDynamic: return "cluster_dynamic";
    case SamplingMode::kClusterStatic: return "cluster_static";
    case SamplingMode::kRandomStatic: return "random_static";
    case SamplingMode::kRandomDynamic: return "random_dynamic";
    case SamplingMode::kBernoulliDynamic: return "bernoulli_dynamic";
  }
  return "unknown";
}

// Accepts both "cluster_dynamic" and "cluster-dynamic" spellings.
inline SamplingMode parse_mode(std::string_view text) {
  std::string s(text);
  for (auto& ch : s)
    if (ch == '-') ch = '_';
  for (auto m : {SamplingMode::kClusterDynamic, SamplingMode::kClusterStatic,
                 SamplingMode::kRandomStatic, SamplingMode::kRandomDynamic,
                 SamplingMode::kBernoulliDynamic}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown sampling mode '" + std::string(text) + "'");
}

inline bool is_random_mode(SamplingMode m) {
  return m == SamplingMode::kRandomStatic || m == SamplingMode::kRandomDynamic;
}

struct SamplerConfig {
  SamplingMode mode = SamplingMode::kClusterDynamic;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 1;
  // Required for random modes, rejected otherwise.
  std::optional<double> keep_fraction;
};

inline void check_sampler_config(const SamplerConfig& cfg) {
  if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (is_random_mode(cfg.mode)) {
    if (!cfg.keep_fraction) {
      throw ConfigError(std::string(to_string(cfg.mode)) +
                        " requires keep_fraction");
    }
    if (!(*cfg.keep_fraction > 0.0) || *cfg.keep_fraction > 1.0) {
      throw ConfigError("keep_fraction must lie in (0, 1]");
    }
  } else if (cfg.keep_fraction) {
    throw ConfigError("keep_fraction only applies to random modes");
  }
}

struct ManifestEntry {
  SampleId id;
  std::uint32_t cluster = 0;
  std::uint32_t copy = 0;

  friend constexpr auto operator<=>(const ManifestEntry&, const ManifestEntry&) = default;
};

struct EpochManifest {
  std::uint64_t epoch = 0;
  SamplingMode mode = SamplingMode::kClusterDynamic;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

namespace detail {

// Members of every cluster in ascending id order, as offsets into one array.
struct ClusterIndex {
  std::vector<std::size_t> offsets;  // size k + 1
  std::vector<std::size_t> rows;     // positions into the assignment

  std::span<const std::size_t> members(std::size_t c) const {
    return std::span<const std::size_t>(rows).subspan(offsets[c],
                                                      offsets[c + 1] - offsets[c]);
  }
};

inline ClusterIndex index_clusters(const ClusterAssignment& a) {
  ClusterIndex idx;
  const std::size_t k = a.counts.size();
  idx.offsets.assign(k + 1, 0);
  for (auto c : a.clusters) {
    if (c >= k) throw IntegrityError("assignment refers to a missing cluster");
    ++idx.offsets[c + 1];
  }
  for (std::size_t c = 0; c < k; ++c) idx.offsets[c + 1] += idx.offsets[c];
  idx.rows.resize(a.clusters.size());
  std::vector<std::size_t> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
  for (std::size_t i = 0; i < a.clusters.size(); ++i) {
    idx.rows[cursor[a.clusters[i]]++] = i;
  }
  return idx;
}

inline void emit(const ClusterAssignment& a, std::size_t row, std::uint32_t cluster,
                 std::uint64_t copies, std::vector<ManifestEntry>& out) {
  for (std::uint64_t k = 0; k < copies; ++k) {
    out.push_back({a.ids[row], cluster, static_cast<std::uint32_t>(k)});
  }
}

}  // namespace detail

// Builds the manifest of one epoch. Output entries are sorted by
// (cluster, id, copy).
//
//   cluster_dynamic    exactly targets_int[i] entries per cluster: floor(S/c)
//                      full copies plus a fresh without-replacement draw of
//                      the remainder, keyed by (seed, epoch, cluster)
//   cluster_static     the same draw with the epoch key fixed to 0
//   random_static      one fixed uniform subset of floor(keep * n) ids
//   random_dynamic     every id kept independently with probability keep
//   bernoulli_dynamic  floor(P) copies plus one more with probability
//                      P - floor(P), independently per id
inline EpochManifest sample_epoch(const ClusterAssignment& assignment,
                                  const ScalingPlan& plan,
                                  const SamplerConfig& config,
                                  std::uint64_t epoch, unsigned threads = 1) {
  check_sampler_config(config);
  if (epoch >= config.epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " is outside the " +
                      std::to_string(config.epochs) + " configured epochs");
  }
  if (plan.counts != assignment.counts) {
    throw IntegrityError("plan counts do not match the assignment counts");
  }
  check_plan(plan);
  if (assignment.clusters.size() != assignment.ids.size()) {
    throw IntegrityError("assignment ids and clusters differ in length");
  }

  EpochManifest out;
  out.epoch = epoch;
  out.mode = config.mode;
  out.seed = config.seed;

  const detail::ClusterIndex index = detail::index_clusters(assignment);
  const std::size_t k = assignment.counts.size();

  if (config.mode == SamplingMode::kRandomStatic) {
    const std::uint64_t n = assignment.size();
    const auto m = static_cast<std::uint64_t>(
        std::floor(*config.keep_fraction * static_cast<double>(n)));
    auto rng = derive_stream(config.seed, 0, stream_domain::kGlobal);
    std::vector<std::uint8_t> keep(n, 0);
    for (auto pos : draw_without_replacement(rng, n, m)) keep[pos] = 1;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t row : index.members(c)) {
        if (keep[row]) detail::emit(assignment, row, static_cast<std::uint32_t>(c), 1, out.entries);
      }
    }
    return out;
  }

  std::vector<std::vector<ManifestEntry>> per_cluster(k);
  parallel_for(k, threads, [&](std::size_t c) {
    const auto cluster = static_cast<std::uint32_t>(c);
    const auto members = index.members(c);
    const std::uint64_t count = members.size();
    auto& local = per_cluster[c];

    switch (config.mode) {
      case SamplingMode::kClusterDynamic:
      case SamplingMode::kClusterStatic: {
        const std::uint64_t target = plan.targets_int[c];
        if (target == 0) return;
        if (count == 0) {
          throw IntegrityError("cluster " + std::to_string(c) +
                               " is empty but has a positive target");
        }
        const std::uint64_t key_epoch =
            config.mode == SamplingMode::kClusterStatic ? 0 : epoch;
        auto rng = derive_stream(config.seed, key_epoch, c);
        const std::uint64_t copies = target / count;
        const std::uint64_t rest = target - copies * count;
        std::vector<std::uint8_t> extra(count, 0);
        for (auto pos : draw_without_replacement(rng, count, rest)) extra[pos] = 1;
        local.reserve(target);
        for (std::size_t j = 0; j < count; ++j) {
          detail::emit(assignment, members[j], cluster, copies + extra[j], local);
        }
        break;
      }
      case SamplingMode::kRandomDynamic: {
        auto rng = derive_stream(config.seed, epoch, c);
        const double keep = *config.keep_fraction;
        for (std::size_t row : members) {
          if (rng.uniform() < keep) detail::emit(assignment, row, cluster, 1, local);
        }
        break;
      }
      case SamplingMode::kBernoulliDynamic: {
        const std::uint64_t target = plan.targets_int[c];
        if (count == 0) {
          if (target > 0) {
            throw IntegrityError("cluster " + std::to_string(c) +
                                 " is empty but has a positive target");
          }
          return;
        }
        auto rng = derive_stream(config.seed, epoch, c);
        const std::uint64_t copies = target / count;
        const double frac = static_cast<double>(target - copies * count) /
                            static_cast<double>(count);
        for (std::size_t row : members) {
          const std::uint64_t mult = copies + (rng.uniform() < frac ? 1 : 0);
          detail::emit(assignment, row, cluster, mult, local);
        }
        break;
      }
      case SamplingMode::kRandomStatic:
        break;
    }
  });

  std::size_t total = 0;
  for (const auto& v : per_cluster) total += v.size();
  out.entries.reserve(total);
  for (auto& v : per_cluster) {
    out.entries.insert(out.entries.end(), v.begin(), v.end());
  }
  return out;
}

// Applies a seeded permutation to the entries; the key is independent of the
// sampling streams.
inline void shuffle_manifest(EpochManifest& manifest) {
  auto rng = derive_stream(manifest.seed, manifest.epoch, stream_domain::kShuffle);
  shuffle(std::span<ManifestEntry>(manifest.entries), rng);
}

// Multiplicity per cluster.
inline std::vector<std::uint64_t> manifest_stats(const EpochManifest& manifest,
                                                 std::size_t n_clusters = 0) {
  std::size_t k = n_clusters;
  for (const auto& e : manifest.entries) k = std::max<std::size_t>(k, e.cluster + 1);
  std::vector<std::uint64_t> counts(k, 0);
  for (const auto& e : manifest.entries) ++counts[e.cluster];
  return counts;
}

// Text form:
//   #dynamics-manifest v1 mode=<m> epoch=<e> seed=<s> total=<n>
//   <sample_id>\t<cluster_id>      (one line per entry)
inline std::string format_manifest(const EpochManifest& m) {
  std::string out;
  out.reserve(48 + m.entries.size() * 16);
  out += "#dynamics-manifest v1 mode=";
  out += to_string(m.mode);
  out += " epoch=" + std::to_string(m.epoch);
  out += " seed=" + std::to_string(m.seed);
  out += " total=" + std::to_string(m.entries.size());
  out += '\n';
  for (const auto& e : m.entries) {
    out += std::to_string(e.id.value);
    out += '\t';
    out += std::to_string(e.cluster);
    out += '\n';
  }
  return out;
}

inline void save_manifest(const EpochManifest& m, const std::string& path) {
  detail::write_file(path, format_manifest(m));
}

// Copy numbers are not stored in the text form; they are rebuilt from the
// order of repeated (id, cluster) lines.
inline EpochManifest parse_manifest(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("#dynamics-manifest v1 ", 0) != 0) {
    throw FormatError("missing '#dynamics-manifest v1' header");
  }
  EpochManifest m;
  std::uint64_t declared = 0;
  bool have_total = false;
  std::istringstream header(line.substr(22));
  std::string field;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("bad header field '" + field + "'");
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    try {
      if (key == "mode") m.mode = parse_mode(val);
      else if (key == "epoch") m.epoch = std::stoull(val);
      else if (key == "seed") m.seed = std::stoull(val);
      else if (key == "total") { declared = std::stoull(val); have_total = true; }
    } catch (const std::logic_error&) {
      throw FormatError("bad header value '" + field + "'");
    }
  }
  if (!have_total) throw FormatError("manifest header lacks total=");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("manifest line " + std::to_string(lineno) + " lacks a tab");
    }
    ManifestEntry e;
    try {
      e.id.value = std::stoull(line.substr(0, tab));
      e.cluster = static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1)));
    } catch (const std::logic_error&) {
      throw FormatError("manifest line " + std::to_string(lineno) + " is not numeric");
    }
    if (!m.entries.empty() && m.entries.back().id == e.id &&
        m.entries.back().cluster == e.cluster) {
      e.copy = m.entries.back().copy + 1;
    }
    m.entries.push_back(e);
  }
  if (m.entries.size() != declared) {
    throw TruncationError("manifest declares " + std::to_string(declared) +
                          " entries but holds " + std::to_string(m.entries.size()));
  }
  return m;
}

inline EpochManifest load_manifest(const std::string& path) {
  return parse_manifest(detail::read_file(path));
}

}  // namespace dynamics

#endif  // DYNAMICS_SAMPLER_HPP_
