/*
 * Copyright 2026 The CSST Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace csst {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Samples are stored one per row.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

inline constexpr const char* kToolVersion = "0.3.0";

// Derives an independent stream seed from (seed, stream). SplitMix64 finalizer;
// used so that shards and sub-streams never share state.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Small-state generator for per-sample streams (cheap to construct, unlike
// mt19937_64). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Worker count from CSST_THREADS (default 1, fully sequential).
int configured_threads();

// Runs fn(shard) for shard in [0, n_shards) on up to configured_threads()
// workers. Each shard must write only to its own output slot; callers reduce
// the slots in shard order so results do not depend on the worker count.
void for_each_shard(std::size_t n_shards,
                    const std::function<void(std::size_t)>& fn);

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);
int argmax(const Vector& values);

inline std::span<const double> row_span(const FeatureMatrix& m,
                                        Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace csst
