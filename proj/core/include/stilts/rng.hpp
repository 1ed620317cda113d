/*
 * Copyright 2026 The stilts-lab Authors.
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

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "stilts/tensor.hpp"

namespace stilts {

/// Derives an independent stream seed from (base, tag). Every consumer of
/// randomness in a run owns a tagged stream, so adding or removing one
/// consumer never shifts the draws seen by another.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// Seeded random stream. Deterministic for a fixed seed within one build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform();                       // [0, 1)
  std::uint64_t next_u64() { return eng_(); }
  int uniform_int(int lo, int hi);        // inclusive bounds
  double normal(double mean, double stddev);

  Tensor normal_tensor(const std::vector<std::size_t>& shape, double stddev);

  /// Inverted-dropout mask: entries are 0 with probability `rate`,
  /// otherwise 1/(1-rate). rate == 0 yields all-ones.
  Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct values from {0, ..., n-1}, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 eng_;
};

}  // namespace stilts
