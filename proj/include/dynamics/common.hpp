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
#ifndef DYNAMICS_COMMON_HPP_
#define DYNAMICS_COMMON_HPP_

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <vector>

namespace dynamics {

// Error hierarchy. Every failure raised by the library derives from Error so
// callers can catch one type and still dispatch on the concrete kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  DegenerateVectorError(std::uint64_t id, const std::string& what)
      : Error(what), id_(id) {}
  std::uint64_t id() const noexcept { return id_; }

 private:
  std::uint64_t id_;
};

namespace detail {

template <typename T>
T byteswap(T v) noexcept {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <typename T>
T to_little(T v) noexcept {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return byteswap(v);
  }
}

template <typename T>
void put_le(std::string& out, T v) {
  v = to_little(v);
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <typename T>
T get_le(const char* p) noexcept {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}

// Appends a contiguous block of trivially copyable values in little-endian
// order. On little-endian hosts this is a single memcpy.
template <typename T>
void put_le_block(std::string& out, const T* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(data), n * sizeof(T));
  } else {
    for (std::size_t i = 0; i < n; ++i) put_le(out, data[i]);
  }
}

template <typename T>
void get_le_block(const char* p, T* data, std::size_t n) noexcept {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(data, p, n * sizeof(T));
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = get_le<T>(p + i * sizeof(T));
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return bytes;
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

// Resolves a worker count: an explicit positive request wins, then the
// DYNAMICS_THREADS environment variable, then 1.
inline unsigned resolve_threads(int requested = 0) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("DYNAMICS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

// Runs fn(task) for task in [0, n_tasks) on up to `threads` workers.
// Tasks are handed out in contiguous stripes; callers that need
// bit-stable results must make each task's output independent of which
// worker ran it.
template <typename Fn>
void parallel_for(std::size_t n_tasks, unsigned threads, Fn&& fn) {
  if (n_tasks == 0) return;
  unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n_tasks));
  if (workers == 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  std::vector<std::exception_ptr> errors(workers);
  auto stripe = [&](unsigned w) {
    try {
      for (std::size_t t = w; t < n_tasks; t += workers) fn(t);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(stripe, w);
  stripe(0);
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dynamics

#endif  // DYNAMICS_COMMON_HPP_
