/*
 * Copyright 2026 The semifair Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Portable random helpers. The std:: distributions are implementation
// defined, so everything that feeds a reproducible artifact goes through
// these instead.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

#include "semifair/tensor.hpp"

namespace semifair {

using Rng = std::mt19937_64;

/// Engine seeded from a list of integers (seed, epoch, stream id, ...).
inline Rng make_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n), rejection sampled.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = uniform_below(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

inline Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = stddev * standard_normal(rng);
  return Tensor(std::move(shape), std::move(d));
}

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = lo + (hi - lo) * uniform01(rng);
  return Tensor(std::move(shape), std::move(d));
}

/// Keep-mask for inverted dropout: 1 with probability 1 - rate.
inline Tensor bernoulli_mask(Shape shape, double rate, Rng& rng) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = uniform01(rng) >= rate ? 1.0 : 0.0;
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace semifair
