// Copyright 2026 The watchlabel Authors.
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

// Portable seeded randomness. The generator is xoshiro256** (Blackman and
// Vigna) with its state expanded from the 64-bit seed by splitmix64. Normal
// deviates use the inverse normal CDF of an open-interval uniform, so a seed
// fixes the whole stream independent of the standard library.

#ifndef WATCHLABEL_RANDOM_HPP_
#define WATCHLABEL_RANDOM_HPP_

#include <array>
#include <cstdint>

namespace watchlabel {

// Stateless 64-bit finalizer (the splitmix64 output function).
std::uint64_t mix64(std::uint64_t x);

// Inverse of the standard normal CDF for p in (0, 1).
double inverse_normal_cdf(double p);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  // 53-bit uniform on [0, 1).
  double uniform();
  // 53-bit uniform on (0, 1).
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n) by rejection; n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal() { return inverse_normal_cdf(uniform_open()); }

 private:
  std::array<std::uint64_t, 4> state_;
};

}  // namespace watchlabel

#endif  // WATCHLABEL_RANDOM_HPP_
