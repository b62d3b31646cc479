// Copyright 2026-present the qdim project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qdim {

/// Seeded generator with platform-independent bounded draws (the standard
/// distributions are implementation-defined, which would break
/// byte-identical reruns across toolchains).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Uniform real in [0, 1).
  double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal();

  /// n distinct elements of pool, in draw order (partial Fisher-Yates).
  template <typename T>
  std::vector<T> sample(std::span<const T> pool, std::size_t n) {
    std::vector<T> work(pool.begin(), pool.end());
    const std::size_t take = std::min(n, work.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(work[i], work[i + uniform_index(work.size() - i)]);
    }
    work.resize(take);
    return work;
  }

private:
  std::mt19937_64 engine_;
};

/// Stable per-stage seed: mixes the global seed with an FNV-1a hash of the
/// stage name through splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

std::uint64_t fnv1a64(std::string_view text);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write into
/// preallocated slots so results never depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::string sha256_hex(std::string_view data);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
/// Lowercase, trimmed, internal whitespace collapsed to single spaces.
std::string normalize_text(std::string_view s);
/// Lowercased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace qdim
