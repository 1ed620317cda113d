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
#include "stilts/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace stilts {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return splitmix64(base ^ splitmix64(fnv1a64(tag)));
}

double Rng::uniform() {
  // 53 random bits -> double in [0, 1).
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  // Rejection sampling keeps the draw exactly uniform.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = eng_();
  } while (r >= limit);
  return lo + static_cast<int>(r % span);
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller; one fresh pair per call keeps the stream state simple.
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  return mean + stddev * z;
}

Tensor Rng::normal_tensor(const std::vector<std::size_t>& shape, double stddev) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(0.0, stddev);
  return t;
}

Tensor Rng::dropout_mask(const std::vector<std::size_t>& shape, double rate) {
  Tensor t(shape);
  if (rate <= 0.0) {
    t.fill(1.0);
    return t;
  }
  double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform() < rate ? 0.0 : keep_scale;
  return t;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_int(0, static_cast<int>(n - i) - 1));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace stilts
