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

#include "watchlabel/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "watchlabel/error.hpp"
#include "watchlabel/metrics.hpp"
#include "watchlabel/random.hpp"

namespace watchlabel {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kConfigInvalid, what);
}

}  // namespace

void SyntheticConfig::validate() const {
  check(n_users >= 1, "n_users must be >= 1");
  check(interactions_per_user >= 1, "interactions_per_user must be >= 1");
  check(n_videos >= interactions_per_user,
        "n_videos must be >= interactions_per_user");
  check(!n_records.has_value() || *n_records >= 1, "records must be >= 1");
  check(latent_dim >= 1, "latent_dim must be >= 1");
  check(d_min > 0.0, "d_min must be > 0");
  check(d_max > d_min, "d_max must exceed d_min");
  check(sigma_d >= 0.0 && sigma_y >= 0.0, "noise scales must be >= 0");
  check(std::isfinite(mu_d) && std::isfinite(s_d) && std::isfinite(alpha) &&
            std::isfinite(beta),
        "model parameters must be finite");
  check(confounding_sign == 1 || confounding_sign == -1,
        "confounding_sign must be +1 or -1");
}

SyntheticData generate(const SyntheticConfig& config) {
  config.validate();
  const auto k = static_cast<std::size_t>(config.latent_dim);
  const double root_k = std::sqrt(static_cast<double>(k));
  Rng rng(config.seed);

  std::vector<double> users(config.n_users * k);
  for (double& x : users) x = rng.normal();

  std::vector<double> videos(config.n_videos * k);
  std::vector<double> durations(config.n_videos);
  const double w = config.confounding_sign / root_k;
  for (std::size_t v = 0; v < config.n_videos; ++v) {
    double projection = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      videos[v * k + j] = rng.normal();
      projection += w * videos[v * k + j];
    }
    const double eta = rng.normal();
    const double raw = std::exp(config.mu_d + config.s_d * projection / root_k +
                                config.sigma_d * eta);
    durations[v] = std::clamp(raw, config.d_min, config.d_max);
  }

  const std::size_t total = config.n_records.value_or(
      config.n_users * config.interactions_per_user);
  SyntheticData out;
  out.interactions.reserve(total);
  out.truth.m.reserve(total);
  out.truth.f_mean.reserve(total);

  std::vector<std::size_t> picked;
  std::unordered_set<std::size_t> seen;
  const std::size_t n = config.n_videos;
  const std::size_t per_user = config.interactions_per_user;
  for (std::size_t u = 0; u < config.n_users && out.interactions.size() < total; ++u) {
    // Floyd's sampling of per_user distinct videos, kept in draw order.
    picked.clear();
    seen.clear();
    for (std::size_t j = n - per_user; j < n; ++j) {
      const auto t = static_cast<std::size_t>(rng.below(j + 1));
      const std::size_t chosen = seen.count(t) ? j : t;
      seen.insert(chosen);
      picked.push_back(chosen);
    }
    for (std::size_t v : picked) {
      if (out.interactions.size() == total) break;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += users[u * k + j] * videos[v * k + j];
      const double m = dot / root_k;
      const double noise = rng.normal();
      const double f = std::clamp(
          sigmoid(config.alpha * m + config.beta + config.sigma_y * noise), 0.0, 1.0);
      const double d = durations[v];
      const double y = std::min(std::round(d * f * 1000.0) / 1000.0, d);

      Interaction record;
      record.user_id = fmt::format("u{}", u);
      record.video_id = fmt::format("v{}", v);
      record.duration_s = d;
      record.watch_time_s = y;
      record.row_index = out.interactions.size();
      out.interactions.push_back(std::move(record));
      out.truth.m.push_back(m);
      out.truth.f_mean.push_back(sigmoid(config.alpha * m + config.beta));
    }
  }
  if (out.interactions.size() < total) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("requested {} records but users * interactions_per_user "
                            "only yields {}",
                            total, out.interactions.size()));
  }
  return out;
}

double oracle_rank_quality(std::span<const double> scores,
                           std::span<const double> m,
                           std::span<const std::size_t> user_groups) {
  if (scores.size() != m.size() || scores.size() != user_groups.size()) {
    throw Error(ErrorCode::kEmptyInput, "scores, truth and users must align");
  }
  const auto members = group_members(user_groups);
  double weighted = 0.0;
  double weight = 0.0;
  for (const auto& rows : members) {
    if (rows.size() < 2) continue;
    double concordance = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        const double dm = m[rows[a]] - m[rows[b]];
        if (dm == 0.0) continue;
        const double ds = scores[rows[a]] - scores[rows[b]];
        ++pairs;
        if (ds == 0.0) {
          concordance += 0.5;
        } else if ((ds > 0.0) == (dm > 0.0)) {
          concordance += 1.0;
        }
      }
    }
    if (pairs == 0) continue;
    const double n = static_cast<double>(rows.size());
    weighted += n * concordance / static_cast<double>(pairs);
    weight += n;
  }
  if (weight == 0.0) {
    throw Error(ErrorCode::kNoEligibleUsers,
                "no user has two records with distinct matching scores");
  }
  return weighted / weight;
}

double oracle_rank_quality(std::span<const double> scores,
                           std::span<const double> m,
                           std::span<const Interaction> records) {
  const auto groups = user_group_ids(records);
  return oracle_rank_quality(scores, m, groups);
}

}  // namespace watchlabel
