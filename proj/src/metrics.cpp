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

#include "watchlabel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "watchlabel/error.hpp"

namespace watchlabel {

std::vector<std::size_t> user_group_ids(std::span<const Interaction> records) {
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (const auto& record : records) {
    auto [it, inserted] = ids.emplace(record.user_id, ids.size());
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::vector<std::size_t>> group_members(std::span<const std::size_t> groups) {
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i] >= members.size()) members.resize(groups[i] + 1);
    members[groups[i]].push_back(i);
  }
  return members;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kEmptyInput, "scores and labels must align");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank-sum with mid ranks over tied scores.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tied_positives += labels[order[j]] != 0;
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    positive_rank_sum += mid_rank * static_cast<double>(tied_positives);
    positives += tied_positives;
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::kDegenerateLabels, "AUC needs both classes");
  }
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(negatives));
}

GaucResult gauc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                std::span<const std::size_t> user_groups) {
  if (scores.size() != labels.size() || scores.size() != user_groups.size()) {
    throw Error(ErrorCode::kEmptyInput, "scores, labels and users must align");
  }
  GaucResult out;
  double weighted = 0.0;
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  for (const auto& rows : group_members(user_groups)) {
    if (rows.empty()) continue;
    std::size_t positives = 0;
    for (std::size_t r : rows) positives += labels[r] != 0;
    if (positives == 0 || positives == rows.size()) {
      ++out.users_skipped;
      out.records_skipped += rows.size();
      continue;
    }
    s.clear();
    l.clear();
    for (std::size_t r : rows) {
      s.push_back(scores[r]);
      l.push_back(labels[r]);
    }
    weighted += static_cast<double>(rows.size()) * auc(s, l);
    ++out.users_evaluated;
    out.records_evaluated += rows.size();
  }
  if (out.users_evaluated == 0) {
    throw Error(ErrorCode::kNoEligibleUsers, "no user has both label classes");
  }
  out.gauc = weighted / static_cast<double>(out.records_evaluated);
  return out;
}

RegressionMetrics regression_metrics(std::span<const double> predicted,
                                     std::span<const double> actual) {
  if (predicted.empty() || predicted.size() != actual.size()) {
    throw Error(ErrorCode::kEmptyInput,
                "regression metrics need aligned, non-empty sequences");
  }
  RegressionMetrics out;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double pct_sum = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double err = predicted[i] - actual[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (actual[i] > 0.0) {
      pct_sum += std::abs(err) / actual[i];
      ++pct_n;
    } else {
      ++out.mape_skipped;
    }
  }
  const double n = static_cast<double>(predicted.size());
  out.evaluated = predicted.size();
  out.mae = abs_sum / n;
  out.rmse = std::sqrt(sq_sum / n);
  out.mape = pct_n > 0 ? pct_sum / static_cast<double>(pct_n) : 0.0;
  return out;
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::kEmptyGroup, "KS distance needs two non-empty groups");
  }
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < x.size() || j < y.size()) {
    // Step both empirical CDFs past the next value.
    double v;
    if (j == y.size() || (i < x.size() && x[i] <= y[j])) {
      v = x[i];
    } else {
      v = y[j];
    }
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / nx -
                                   static_cast<double>(j) / ny));
  }
  return best;
}

std::vector<MetricRow> EvalReport::rows() const {
  std::vector<MetricRow> out = {
      {"auc", auc, records_evaluated + records_skipped, 0},
      {"gauc", gauc, records_evaluated, records_skipped},
      {"mae", mae, records_evaluated + records_skipped, 0},
      {"rmse", rmse, records_evaluated + records_skipped, 0},
      {"mape", mape, records_evaluated + records_skipped - mape_skipped, mape_skipped},
  };
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::string EvalReport::to_csv() const {
  std::string out = "metric,value,n_evaluated,n_skipped\n";
  for (const auto& row : rows()) {
    out += fmt::format("{},{:.6f},{},{}\n", row.metric, row.value, row.n_evaluated,
                       row.n_skipped);
  }
  return out;
}

std::string EvalReport::to_table() const {
  std::string out = fmt::format("{:<16} {:>12} {:>12} {:>10}\n", "metric", "value",
                                "evaluated", "skipped");
  for (const auto& row : rows()) {
    out += fmt::format("{:<16} {:>12.6f} {:>12} {:>10}\n", row.metric, row.value,
                       row.n_evaluated, row.n_skipped);
  }
  return out;
}

}  // namespace watchlabel
