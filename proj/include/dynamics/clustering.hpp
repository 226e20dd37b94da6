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
#ifndef DYNAMICS_CLUSTERING_HPP_
#define DYNAMICS_CLUSTERING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "dynamics/common.hpp"
#include "dynamics/random.hpp"
#include "dynamics/store.hpp"
#include "json.hpp"

namespace dynamics {

// Unit-norm centroids plus the map from every originally trained centroid to
// the live cluster that absorbed it.
struct ClusterModel {
  std::uint32_t k = 0;
  std::uint32_t dim = 0;
  std::vector<float> centroids;       // k x dim, row-major
  std::vector<std::uint32_t> lineage;  // original index -> live index
  std::optional<double> threshold_applied;

  std::span<const float> centroid(std::size_t i) const noexcept {
    return std::span<const float>(centroids).subspan(i * dim, dim);
  }
};

// Cluster index per sample, parallel to the store's sorted ids. Empty clusters
// keep their slot in `counts`.
struct ClusterAssignment {
  std::vector<SampleId> ids;
  std::vector<std::uint32_t> clusters;
  std::vector<std::uint64_t> counts;

  std::size_t size() const noexcept { return ids.size(); }
  std::uint64_t total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
};

struct KMeansOptions {
  std::uint32_t k = 0;
  std::uint32_t iterations = 10;
  std::uint64_t max_points_per_centroid = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Optional k x dim starting centroids; replaces the random initialization.
  std::vector<float> initial_centroids;
};

struct KMeansResult {
  ClusterModel model;
  // Training objective (sum of best cosine similarity over the training
  // subset) after each assignment pass: iterations + 1 entries.
  std::vector<double> objective;
  std::size_t training_points = 0;
};

namespace detail {

inline constexpr std::size_t kAssignBlock = 1024;

// Nearest centroid by cosine for rows [begin, end) of `points` (indexed via
// `rows` when non-empty). Ties go to the lowest centroid index.
inline void nearest_block(const float* points, std::size_t dim,
                          std::span<const std::size_t> rows, std::size_t begin,
                          std::size_t end, const float* centroids,
                          std::size_t k, std::uint32_t* labels, float* sims) {
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t r = rows.empty() ? i : rows[i];
    const float* p = points + r * dim;
    float best = -std::numeric_limits<float>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const float s = dot(p, centroids + c * dim, dim);
      if (s > best) {
        best = s;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    labels[i] = arg;
    sims[i] = best;
  }
}

// Assigns every point and returns the objective; the sum is reduced per
// fixed-size block and then across blocks in order, so it does not depend on
// the worker count.
inline double assign_points(const float* points, std::size_t dim,
                            std::span<const std::size_t> rows, std::size_t n,
                            const std::vector<float>& centroids, std::size_t k,
                            std::vector<std::uint32_t>& labels,
                            std::vector<float>& sims, unsigned threads) {
  labels.resize(n);
  sims.resize(n);
  const std::size_t blocks = (n + kAssignBlock - 1) / kAssignBlock;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kAssignBlock;
    const std::size_t hi = std::min(n, lo + kAssignBlock);
    nearest_block(points, dim, rows, lo, hi, centroids.data(), k,
                  labels.data(), sims.data());
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += sims[i];
    partial[b] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

inline void normalize_into(const double* v, std::size_t dim, float* out) {
  double sq = 0.0;
  for (std::size_t j = 0; j < dim; ++j) sq += v[j] * v[j];
  const double inv = 1.0 / std::sqrt(sq);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(v[j] * inv);
}

}  // namespace detail

// Spherical k-means: assign by maximum cosine, update each centroid to the
// normalized mean of its members. When the store exceeds
// k * max_points_per_centroid rows, training runs on a uniform subset of
// that size. Empty clusters are re-seeded from the training points least
// similar to their current centroid.
inline KMeansResult train_kmeans(const EmbeddingStore& store,
                                 const KMeansOptions& opt) {
  const std::size_t n = store.size();
  const std::size_t dim = store.dim();
  const std::size_t k = opt.k;
  if (k == 0) throw ConfigError("k must be positive");
  if (k > n) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds the " +
                      std::to_string(n) + " available points");
  }
  if (opt.iterations == 0) throw ConfigError("iterations must be positive");
  if (opt.max_points_per_centroid == 0) {
    throw ConfigError("max_points_per_centroid must be positive");
  }
  if (!is_normalized(store, 1e-3)) {
    throw ConfigError("k-means expects unit-normalized embeddings");
  }

  std::vector<std::size_t> subset;
  const std::uint64_t cap =
      static_cast<std::uint64_t>(k) * opt.max_points_per_centroid;
  if (n > cap) {
    auto rng = derive_stream(opt.seed, stream_domain::kKMeansSubset, 0);
    auto picked = draw_without_replacement(rng, n, cap);
    subset.assign(picked.begin(), picked.end());
  }
  const std::size_t m = subset.empty() ? n : subset.size();
  auto train_row = [&](std::size_t i) {
    return store.data().data() + (subset.empty() ? i : subset[i]) * dim;
  };

  std::vector<float> centroids(k * dim);
  if (!opt.initial_centroids.empty()) {
    if (opt.initial_centroids.size() != k * dim) {
      throw ConfigError("initial centroids must be k x dim");
    }
    std::vector<double> buf(dim);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < dim; ++j)
        buf[j] = opt.initial_centroids[c * dim + j];
      detail::normalize_into(buf.data(), dim, centroids.data() + c * dim);
    }
  } else {
    auto rng = derive_stream(opt.seed, stream_domain::kKMeansInit, 0);
    std::vector<std::uint64_t> pool(m);
    std::iota(pool.begin(), pool.end(), std::uint64_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(pool[j], pool[j + rng.below(m - j)]);
      std::copy_n(train_row(pool[j]), dim, centroids.begin() + j * dim);
    }
  }

  KMeansResult result;
  result.training_points = m;
  std::vector<std::uint32_t> labels;
  std::vector<float> sims;
  std::vector<std::size_t> members(m);
  std::vector<std::size_t> offsets(k + 1);

  auto objective = [&] {
    return detail::assign_points(store.data().data(), dim, subset, m,
                                 centroids, k, labels, sims, opt.threads);
  };

  result.objective.push_back(objective());
  for (std::uint32_t it = 0; it < opt.iterations; ++it) {
    // Bucket training points by label (counting sort keeps point order).
    std::fill(offsets.begin(), offsets.end(), 0);
    for (auto l : labels) ++offsets[l + 1];
    for (std::size_t c = 0; c < k; ++c) offsets[c + 1] += offsets[c];
    {
      std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
      for (std::size_t i = 0; i < m; ++i) members[cursor[labels[i]]++] = i;
    }

    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < k; ++c)
      if (offsets[c] == offsets[c + 1]) empty.push_back(c);

    parallel_for(k, opt.threads, [&](std::size_t c) {
      if (offsets[c] == offsets[c + 1]) return;
      std::vector<double> sum(dim, 0.0);
      for (std::size_t t = offsets[c]; t < offsets[c + 1]; ++t) {
        const float* p = train_row(members[t]);
        for (std::size_t j = 0; j < dim; ++j) sum[j] += p[j];
      }
      double sq = 0.0;
      for (double v : sum) sq += v * v;
      // Members that cancel out exactly leave the centroid where it was.
      if (sq > 0.0) detail::normalize_into(sum.data(), dim, centroids.data() + c * dim);
    });

    if (!empty.empty()) {
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(),
                        order.begin() + std::min(empty.size(), m), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          return sims[a] < sims[b] || (sims[a] == sims[b] && a < b);
                        });
      for (std::size_t e = 0; e < empty.size() && e < m; ++e) {
        std::copy_n(train_row(order[e]), dim,
                    centroids.begin() + empty[e] * dim);
      }
    }
    result.objective.push_back(objective());
  }

  result.model.k = static_cast<std::uint32_t>(k);
  result.model.dim = static_cast<std::uint32_t>(dim);
  result.model.centroids = std::move(centroids);
  result.model.lineage.resize(k);
  std::iota(result.model.lineage.begin(), result.model.lineage.end(), 0u);
  return result;
}

// Maps every sample to its most similar centroid (lowest index on ties) and
// recounts cluster sizes from scratch.
inline ClusterAssignment assign(const EmbeddingStore& store,
                                const ClusterModel& model,
                                unsigned threads = 1) {
  if (store.dim() != model.dim) {
    throw ConfigError("store dim " + std::to_string(store.dim()) +
                      " does not match model dim " + std::to_string(model.dim));
  }
  if (model.k == 0) throw ConfigError("model has no centroids");
  ClusterAssignment out;
  out.ids.assign(store.ids().begin(), store.ids().end());
  std::vector<float> sims;
  detail::assign_points(store.data().data(), store.dim(), {}, store.size(),
                        model.centroids, model.k, out.clusters, sims, threads);
  out.counts.assign(model.k, 0);
  for (auto c : out.clusters) ++out.counts[c];
  return out;
}

// Greedy agglomeration: repeatedly merges the most similar live pair whose
// cosine exceeds `threshold` into the renormalized mean weighted by the
// number of original centroids each side has absorbed. Stops when no live
// pair exceeds the threshold. Survivors are renumbered in order of their
// lowest original index.
inline ClusterModel merge_centroids(const ClusterModel& model, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw ConfigError("merge threshold must lie in (0, 1]");
  }
  const std::size_t k = model.k;
  const std::size_t dim = model.dim;
  if (model.centroids.size() != k * dim) {
    throw IntegrityError("centroid block does not match k x dim");
  }

  std::vector<float> cent = model.centroids;
  std::vector<std::uint64_t> weight(k, 0);
  for (auto l : model.lineage) {
    if (l >= k) throw IntegrityError("lineage refers to a missing centroid");
    ++weight[l];
  }
  for (auto& w : weight) w = std::max<std::uint64_t>(w, 1);

  std::vector<std::size_t> parent(k);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::vector<bool> alive(k, true);
  std::vector<std::uint32_t> version(k, 0);

  struct Pair {
    float sim;
    std::uint32_t a, b;
    std::uint32_t va, vb;
  };
  // Highest similarity first; ties resolved toward the lowest index pair.
  auto lower = [](const Pair& x, const Pair& y) {
    if (x.sim != y.sim) return x.sim < y.sim;
    if (x.a != y.a) return x.a > y.a;
    return x.b > y.b;
  };
  std::priority_queue<Pair, std::vector<Pair>, decltype(lower)> heap(lower);

  auto sim = [&](std::size_t a, std::size_t b) {
    return dot(cent.data() + a * dim, cent.data() + b * dim, dim);
  };
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const float s = sim(a, b);
      if (s > threshold) {
        heap.push({s, static_cast<std::uint32_t>(a),
                   static_cast<std::uint32_t>(b), 0, 0});
      }
    }
  }

  std::vector<double> buf(dim);
  while (!heap.empty()) {
    const Pair top = heap.top();
    heap.pop();
    if (!alive[top.a] || !alive[top.b] || version[top.a] != top.va ||
        version[top.b] != top.vb) {
      continue;
    }
    const std::size_t a = top.a, b = top.b;
    const double wa = static_cast<double>(weight[a]);
    const double wb = static_cast<double>(weight[b]);
    for (std::size_t j = 0; j < dim; ++j) {
      buf[j] = wa * cent[a * dim + j] + wb * cent[b * dim + j];
    }
    double sq = 0.0;
    for (double v : buf) sq += v * v;
    if (sq > 0.0) detail::normalize_into(buf.data(), dim, cent.data() + a * dim);
    weight[a] += weight[b];
    alive[b] = false;
    parent[b] = a;
    ++version[a];
    for (std::size_t o = 0; o < k; ++o) {
      if (o == a || !alive[o]) continue;
      const float s = sim(a, o);
      if (s > threshold) {
        const auto lo = static_cast<std::uint32_t>(std::min(a, o));
        const auto hi = static_cast<std::uint32_t>(std::max(a, o));
        heap.push({s, lo, hi, version[lo], version[hi]});
      }
    }
  }

  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  std::vector<std::uint32_t> renumber(k, std::numeric_limits<std::uint32_t>::max());
  ClusterModel out;
  out.dim = model.dim;
  out.threshold_applied = threshold;
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!alive[i]) continue;
    renumber[i] = next++;
    out.centroids.insert(out.centroids.end(), cent.begin() + i * dim,
                         cent.begin() + (i + 1) * dim);
  }
  out.k = next;
  out.lineage.resize(model.lineage.size());
  for (std::size_t o = 0; o < model.lineage.size(); ++o) {
    out.lineage[o] = renumber[root(model.lineage[o])];
  }
  return out;
}

// Re-maps a pre-merge assignment through the model's lineage.
inline ClusterAssignment recount_after_merge(const ClusterAssignment& assignment,
                                             const ClusterModel& model) {
  ClusterAssignment out;
  out.ids = assignment.ids;
  out.clusters.resize(assignment.clusters.size());
  out.counts.assign(model.k, 0);
  for (std::size_t i = 0; i < assignment.clusters.size(); ++i) {
    const std::uint32_t c = assignment.clusters[i];
    if (c >= model.lineage.size()) {
      throw IntegrityError("cluster index " + std::to_string(c) +
                           " is outside the merge lineage (size " +
                           std::to_string(model.lineage.size()) + ")");
    }
    const std::uint32_t to = model.lineage[c];
    out.clusters[i] = to;
    ++out.counts[to];
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats.
//
// Assignment file: repeated (u64 sample id, u32 cluster) little-endian pairs,
// 12 bytes each, sorted by id.
//
// Model file: "CLM1", u64 LE byte length L of a UTF-8 JSON header
// {k, dim, threshold_applied, lineage}, the L header bytes, then k*dim f32 LE
// centroids, row-major.

inline std::string encode_assignment(const ClusterAssignment& a) {
  std::string out;
  out.reserve(a.size() * 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    detail::put_le<std::uint64_t>(out, a.ids[i].value);
    detail::put_le<std::uint32_t>(out, a.clusters[i]);
  }
  return out;
}

// `n_clusters` widens the count vector for trailing empty clusters, which the
// pair format cannot express on its own.
inline ClusterAssignment decode_assignment(std::string_view bytes,
                                           std::size_t n_clusters = 0) {
  if (bytes.size() % 12 != 0) {
    throw TruncationError("assignment file size is not a multiple of 12 bytes");
  }
  ClusterAssignment a;
  const std::size_t n = bytes.size() / 12;
  a.ids.resize(n);
  a.clusters.resize(n);
  std::size_t k = n_clusters;
  for (std::size_t i = 0; i < n; ++i) {
    a.ids[i].value = detail::get_le<std::uint64_t>(bytes.data() + 12 * i);
    a.clusters[i] = detail::get_le<std::uint32_t>(bytes.data() + 12 * i + 8);
    if (i > 0 && !(a.ids[i - 1] < a.ids[i])) {
      throw IntegrityError("assignment ids must be unique and sorted ascending");
    }
    k = std::max<std::size_t>(k, std::size_t{a.clusters[i]} + 1);
  }
  a.counts.assign(k, 0);
  for (auto c : a.clusters) ++a.counts[c];
  return a;
}

inline void save_assignment(const ClusterAssignment& a, const std::string& path) {
  detail::write_file(path, encode_assignment(a));
}

inline ClusterAssignment load_assignment(const std::string& path,
                                         std::size_t n_clusters = 0) {
  return decode_assignment(detail::read_file(path), n_clusters);
}

inline std::string encode_model(const ClusterModel& m) {
  nlohmann::json header{{"k", m.k},
                        {"dim", m.dim},
                        {"threshold_applied", nullptr},
                        {"lineage", m.lineage}};
  if (m.threshold_applied) header["threshold_applied"] = *m.threshold_applied;
  const std::string text = header.dump();
  std::string out = "CLM1";
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  detail::put_le_block(out, m.centroids.data(), m.centroids.size());
  return out;
}

inline ClusterModel decode_model(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "CLM1") {
    throw FormatError("missing CLM1 magic");
  }
  if (bytes.size() < 12) throw TruncationError("model header truncated");
  const auto len = detail::get_le<std::uint64_t>(bytes.data() + 4);
  if (len > bytes.size() - 12) throw TruncationError("model header truncated");
  ClusterModel m;
  try {
    auto j = nlohmann::json::parse(bytes.substr(12, len));
    j.at("k").get_to(m.k);
    j.at("dim").get_to(m.dim);
    j.at("lineage").get_to(m.lineage);
    if (!j.at("threshold_applied").is_null())
      m.threshold_applied = j["threshold_applied"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what());
  }
  const std::size_t values = std::size_t{m.k} * m.dim;
  const std::size_t payload = bytes.size() - 12 - len;
  if (payload < values * 4) throw TruncationError("centroid block truncated");
  if (payload > values * 4) throw FormatError("trailing bytes after centroids");
  for (auto l : m.lineage) {
    if (l >= m.k) throw IntegrityError("lineage refers to a missing centroid");
  }
  m.centroids.resize(values);
  detail::get_le_block(bytes.data() + 12 + len, m.centroids.data(), values);
  return m;
}

inline void save_model(const ClusterModel& m, const std::string& path) {
  detail::write_file(path, encode_model(m));
}

inline ClusterModel load_model(const std::string& path) {
  return decode_model(detail::read_file(path));
}

}  // namespace dynamics

#endif  // DYNAMICS_CLUSTERING_HPP_
