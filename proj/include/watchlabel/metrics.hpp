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

// Offline evaluation metrics: AUC, impression-weighted GAUC, MAE/RMSE/MAPE
// and the two-sample Kolmogorov-Smirnov distance.

#ifndef WATCHLABEL_METRICS_HPP_
#define WATCHLABEL_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "watchlabel/core.hpp"

namespace watchlabel {

// Dense user indices in order of first appearance.
std::vector<std::size_t> user_group_ids(std::span<const Interaction> records);

// Row lists per group id, rows in ascending order.
std::vector<std::vector<std::size_t>> group_members(std::span<const std::size_t> groups);

// Probability that a random positive outscores a random negative, ties 0.5.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct GaucResult {
  double gauc = 0.0;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::size_t records_evaluated = 0;
  std::size_t records_skipped = 0;
};

// Per-user AUC averaged with weights equal to each user's record count over
// users that have both classes.
GaucResult gauc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                std::span<const std::size_t> user_groups);

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  std::size_t evaluated = 0;
  // Records with zero true watch time, excluded from MAPE only.
  std::size_t mape_skipped = 0;
};

RegressionMetrics regression_metrics(std::span<const double> predicted,
                                     std::span<const double> actual);

double ks_distance(std::span<const double> a, std::span<const double> b);

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
};

struct EvalReport {
  double auc = 0.0;
  double gauc = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  std::size_t records_evaluated = 0;
  std::size_t records_skipped = 0;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::size_t mape_skipped = 0;
  // Additional rows (AUC/GAUC against other labels, ground-truth concordance).
  std::vector<MetricRow> extra;

  std::vector<MetricRow> rows() const;
  // "metric,value,n_evaluated,n_skipped" with one line per row.
  std::string to_csv() const;
  std::string to_table() const;
};

}  // namespace watchlabel

#endif  // WATCHLABEL_METRICS_HPP_
