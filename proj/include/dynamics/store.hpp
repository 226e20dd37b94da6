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
#ifndef DYNAMICS_STORE_HPP_
#define DYNAMICS_STORE_HPP_

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "dynamics/common.hpp"

namespace dynamics {

struct SampleId {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(SampleId, SampleId) = default;
};

// Dot product of two float rows. Eight independent partial sums let the
// compiler vectorize without reassociating; the summation order is fixed,
// so results are reproducible for a given build.
inline float dot(const float* a, const float* b, std::size_t d) noexcept {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t body = d - d % 8;
  for (std::size_t i = 0; i < body; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  float tail = 0.0f;
  for (std::size_t l = 0; l < d % 8; ++l) tail += a[body + l] * b[body + l];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) +
         ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

inline float dot(std::span<const float> a, std::span<const float> b) noexcept {
  return dot(a.data(), b.data(), std::min(a.size(), b.size()));
}

// Dense row-major matrix of float embeddings keyed by sorted unique ids.
// Immutable after construction.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  // Throws IntegrityError on unsorted or duplicate ids and ConfigError on a
  // shape mismatch.
  EmbeddingStore(std::uint32_t dim, std::vector<SampleId> ids,
                 std::vector<float> rows)
      : dim_(dim), ids_(std::move(ids)), rows_(std::move(rows)) {
    if (dim_ == 0) throw ConfigError("embedding dim must be positive");
    if (rows_.size() != ids_.size() * static_cast<std::size_t>(dim_)) {
      throw ConfigError("row payload size " + std::to_string(rows_.size()) +
                        " does not match count*dim = " +
                        std::to_string(ids_.size()) + "*" +
                        std::to_string(dim_));
    }
    for (std::size_t i = 1; i < ids_.size(); ++i) {
      if (ids_[i] == ids_[i - 1]) {
        throw IntegrityError("duplicate sample id " +
                             std::to_string(ids_[i].value));
      }
      if (ids_[i] < ids_[i - 1]) {
        throw IntegrityError("sample ids must be sorted ascending (id " +
                             std::to_string(ids_[i].value) + " follows " +
                             std::to_string(ids_[i - 1].value) + ")");
      }
    }
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::uint32_t dim() const noexcept { return dim_; }

  std::span<const SampleId> ids() const noexcept { return ids_; }
  std::span<const float> data() const noexcept { return rows_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(rows_).subspan(i * dim_, dim_);
  }

  // Ids equal and rows equal bit for bit.
  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           a.rows_.size() == b.rows_.size() &&
           (a.rows_.empty() ||
            std::memcmp(a.rows_.data(), b.rows_.data(),
                        a.rows_.size() * sizeof(float)) == 0);
  }

 private:
  std::uint32_t dim_ = 1;
  std::vector<SampleId> ids_;
  std::vector<float> rows_;
};

inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbeddingHeaderBytes = 16;

struct EmbeddingHeader {
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
};

inline EmbeddingHeader parse_embedding_header(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw FormatError("missing EMB1 magic");
  }
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw TruncationError("embedding header truncated");
  }
  EmbeddingHeader h;
  h.count = detail::get_le<std::uint64_t>(bytes.data() + 4);
  h.dim = detail::get_le<std::uint32_t>(bytes.data() + 12);
  if (h.dim == 0) throw FormatError("embedding header declares dim 0");
  return h;
}

// Reads only the 16-byte header; used for validation without loading rows.
inline EmbeddingHeader read_embedding_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string buf(kEmbeddingHeaderBytes, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return parse_embedding_header(buf);
}

inline EmbeddingStore decode_embeddings(std::string_view bytes) {
  const EmbeddingHeader h = parse_embedding_header(bytes);
  const std::size_t avail = bytes.size() - kEmbeddingHeaderBytes;
  // Guard count*dim*4 against overflow before comparing sizes.
  if (h.count > avail / 8) {
    throw TruncationError("header declares " + std::to_string(h.count) +
                          " ids but the file is too short");
  }
  const std::size_t id_bytes = h.count * 8;
  const std::size_t row_avail = avail - id_bytes;
  if (h.dim != 0 && h.count > row_avail / 4 / h.dim) {
    throw TruncationError("header declares " + std::to_string(h.count) +
                          " rows of dim " + std::to_string(h.dim) +
                          " but the payload is short");
  }
  const std::size_t n_values = h.count * h.dim;
  if (row_avail != n_values * 4) {
    throw FormatError("trailing bytes after embedding payload");
  }
  const char* p = bytes.data() + kEmbeddingHeaderBytes;
  std::vector<SampleId> ids(h.count);
  for (std::size_t i = 0; i < h.count; ++i) {
    ids[i].value = detail::get_le<std::uint64_t>(p + 8 * i);
  }
  std::vector<float> rows(n_values);
  detail::get_le_block(p + id_bytes, rows.data(), n_values);
  return EmbeddingStore(h.dim, std::move(ids), std::move(rows));
}

inline std::string encode_embeddings(const EmbeddingStore& store) {
  std::string out;
  out.reserve(kEmbeddingHeaderBytes + store.size() * 8 + store.data().size() * 4);
  out.append(kEmbeddingMagic, 4);
  detail::put_le<std::uint64_t>(out, store.size());
  detail::put_le<std::uint32_t>(out, store.dim());
  for (SampleId id : store.ids()) detail::put_le<std::uint64_t>(out, id.value);
  detail::put_le_block(out, store.data().data(), store.data().size());
  return out;
}

inline EmbeddingStore load_embeddings(const std::string& path) {
  return decode_embeddings(detail::read_file(path));
}

// Writes the payload as-is; normalization problems are not checked here.
inline void save_embeddings(const EmbeddingStore& store,
                            const std::string& path) {
  detail::write_file(path, encode_embeddings(store));
}

// Returns a copy with every row scaled to unit Euclidean norm.
inline EmbeddingStore normalize(const EmbeddingStore& store) {
  const std::size_t d = store.dim();
  std::vector<float> rows(store.data().begin(), store.data().end());
  for (std::size_t i = 0; i < store.size(); ++i) {
    float* r = rows.data() + i * d;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(r[j]) * r[j];
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      const std::uint64_t id = store.ids()[i].value;
      throw DegenerateVectorError(
          id, "cannot normalize row for sample id " + std::to_string(id) +
                  ": norm is zero or not finite");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) {
      r[j] = static_cast<float>(r[j] * inv);
    }
  }
  return EmbeddingStore(store.dim(),
                        std::vector<SampleId>(store.ids().begin(),
                                              store.ids().end()),
                        std::move(rows));
}

// True when every row norm is within `tol` of 1.
inline bool is_normalized(const EmbeddingStore& store, double tol = 1e-5) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto r = store.row(i);
    double sq = 0.0;
    for (float v : r) sq += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(sq) - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace dynamics

#endif  // DYNAMICS_STORE_HPP_
