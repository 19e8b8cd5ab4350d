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

// Synthetic interaction logs with known ground truth.
//
// Users and videos get standard normal latent vectors u and v_r. The matching
// score is m = <u, v_r> / sqrt(K). Video duration depends on v_r through a
// fixed unit direction w_d, which makes duration a confounder:
//
//   v_d = clamp(exp(mu_d + s_d * <w_d, v_r> / sqrt(K) + sigma_d * eta), d_min, d_max)
//   f   = clamp(sigmoid(alpha * m + beta + sigma_y * eps), 0, 1)
//   y   = v_d * f, rounded to milliseconds
//
// Draw order for a seed: all user vectors, then per video its vector and eta,
// then per user its video sample (Floyd's algorithm) and one eps per record.

#ifndef WATCHLABEL_DATAGEN_HPP_
#define WATCHLABEL_DATAGEN_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "watchlabel/core.hpp"

namespace watchlabel {

struct SyntheticConfig {
  std::size_t n_users = 1000;
  std::size_t n_videos = 1000;
  std::size_t interactions_per_user = 100;
  // Truncates the log to this many records when set.
  std::optional<std::size_t> n_records;
  int latent_dim = 8;
  double mu_d = 3.5;
  double s_d = 1.0;
  double sigma_d = 0.3;
  double d_min = 5.0;
  double d_max = 600.0;
  double alpha = 2.0;
  double beta = -0.5;
  double sigma_y = 0.5;
  // Sign of w_d = sign * (1, ..., 1) / sqrt(K).
  int confounding_sign = 1;
  std::uint64_t seed = 42;

  // Throws kConfigInvalid on out-of-range fields.
  void validate() const;
};

struct SyntheticTruth {
  std::vector<double> m;       // matching score per record
  std::vector<double> f_mean;  // sigmoid(alpha * m + beta)
};

struct SyntheticData {
  Dataset interactions;
  SyntheticTruth truth;
};

SyntheticData generate(const SyntheticConfig& config);

// Impression-weighted mean over users of the pairwise concordance between
// scores and the true matching score. Pairs with equal m are skipped, ties in
// scores count 0.5. Users need >= 2 records and non-constant m.
double oracle_rank_quality(std::span<const double> scores,
                           std::span<const double> m,
                           std::span<const std::size_t> user_groups);
double oracle_rank_quality(std::span<const double> scores,
                           std::span<const double> m,
                           std::span<const Interaction> records);

}  // namespace watchlabel

#endif  // WATCHLABEL_DATAGEN_HPP_
