// Copyright 2026 The iaraudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace iaraudit {

/// Failure categories. The CLI maps them onto exit codes.
enum class ErrorKind {
  kUsage = 1,      // bad arguments or incompatible options
  kInput = 2,      // malformed or unreadable input file
  kNumerical = 3,  // degenerate statistics, empty score sets
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

// ---------------------------------------------------------------------------
// Deterministic random streams.
//
// Every random draw in the toolkit comes from a stream identified by a master
// seed plus a tuple of integer keys (trial index, sample hash, position, ...).
// Streams never depend on scheduling, so results are identical for any thread
// count.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_keys(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Keys>
constexpr std::uint64_t mix_keys(std::uint64_t seed, std::uint64_t key, Keys... rest) {
  return mix_keys(splitmix64(seed) ^ splitmix64(key + 0x632be59bd9b4e019ULL), rest...);
}

/// FNV-1a; used to key streams by sample id and to name stream families.
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

template <typename... Keys>
Rng make_stream(std::uint64_t seed, Keys... keys) {
  return Rng(mix_keys(seed, static_cast<std::uint64_t>(keys)...));
}

/// First `count` entries of a uniformly random permutation of [0, n).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                           Rng& rng) {
  require(count <= n, ErrorKind::kUsage, "cannot draw more samples than available");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

// ---------------------------------------------------------------------------
// Parallel map over an index range. Each index is processed exactly once and
// writes only its own slot, so output never depends on `threads`. The first
// exception (by index) is rethrown on the calling thread.

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Line-oriented text I/O with transparent gzip for paths ending in ".gz".

inline bool has_gz_suffix(std::string_view path) {
  return path.size() >= 3 && path.substr(path.size() - 3) == ".gz";
}

class LineWriter {
 public:
  explicit LineWriter(const std::string& path) : path_(path) {
    if (has_gz_suffix(path)) {
      gz_ = gzopen(path.c_str(), "wb");
      require(gz_ != nullptr, ErrorKind::kInput, "cannot open for writing: " + path);
    } else {
      out_.open(path, std::ios::binary | std::ios::trunc);
      require(out_.good(), ErrorKind::kInput, "cannot open for writing: " + path);
    }
  }
  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;
  ~LineWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  void write_line(std::string_view line) {
    if (gz_ != nullptr) {
      if (!line.empty()) {
        const int n = gzwrite(gz_, line.data(), static_cast<unsigned>(line.size()));
        require(n == static_cast<int>(line.size()), ErrorKind::kInput, "write failed: " + path_);
      }
      require(gzputc(gz_, '\n') == '\n', ErrorKind::kInput, "write failed: " + path_);
    } else {
      out_ << line << '\n';
      require(out_.good(), ErrorKind::kInput, "write failed: " + path_);
    }
  }

  void close() {
    if (gz_ != nullptr) {
      const int rc = gzclose(gz_);
      gz_ = nullptr;
      require(rc == Z_OK, ErrorKind::kInput, "close failed: " + path_);
    } else if (out_.is_open()) {
      out_.close();
      require(!out_.fail(), ErrorKind::kInput, "close failed: " + path_);
    }
  }

 private:
  std::string path_;
  gzFile gz_ = nullptr;
  std::ofstream out_;
};

class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path) {
    if (has_gz_suffix(path)) {
      gz_ = gzopen(path.c_str(), "rb");
      require(gz_ != nullptr, ErrorKind::kInput, "cannot open: " + path);
    } else {
      in_.open(path, std::ios::binary);
      require(in_.good(), ErrorKind::kInput, "cannot open: " + path);
    }
  }
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;
  ~LineReader() {
    if (gz_ != nullptr) gzclose(gz_);
  }

  /// Next line without its terminator; nullopt at end of file.
  std::optional<std::string> next() {
    std::string line;
    if (gz_ != nullptr) {
      char buf[1 << 16];
      bool any = false;
      while (gzgets(gz_, buf, sizeof(buf)) != nullptr) {
        any = true;
        line.append(buf);
        if (!line.empty() && line.back() == '\n') break;
      }
      int errnum = 0;
      gzerror(gz_, &errnum);
      require(errnum == Z_OK || errnum == Z_STREAM_END, ErrorKind::kInput,
              "corrupt compressed stream: " + path_);
      if (!any) return std::nullopt;
    } else {
      if (!std::getline(in_, line)) return std::nullopt;
      line.push_back('\n');
    }
    ++line_number_;
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    return line;
  }

  /// 1-based number of the line most recently returned by next().
  std::size_t line_number() const { return line_number_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  gzFile gz_ = nullptr;
  std::ifstream in_;
  std::size_t line_number_ = 0;
};

/// Fixed-format real number with 17 significant digits (round-trips doubles).
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace iaraudit
