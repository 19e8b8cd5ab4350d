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

#include "watchlabel/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "watchlabel/error.hpp"

namespace watchlabel {
namespace {

constexpr double kRatioSumTolerance = 1e-9;
// Slack when comparing a rank fraction against a prefix sum, so that a rank
// equal to a boundary in exact arithmetic stays in the lower group.
constexpr double kBoundarySlack = 1e-12;

const std::string& require_field(const std::optional<std::string>& field,
                                 std::string_view name,
                                 std::uint64_t row_index) {
  if (!field.has_value() || field->empty()) {
    throw Error(ErrorCode::kMissingField,
                fmt::format("row {}: field '{}' is missing", row_index, name));
  }
  return *field;
}

// Divides weights by their sum. Shared by every kind so that identical
// weights produce bitwise identical ratios.
std::vector<double> normalize(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  return weights;
}

std::vector<double> log_quadratic_ratios(int n_groups,
                                         const LogQuadraticCurve& curve) {
  if (!(curve.min_watch_s > 0.0) || !(curve.max_watch_s > curve.min_watch_s)) {
    throw Error(ErrorCode::kConfigInvalid,
                "log_quadratic needs 0 < min_watch_s < max_watch_s");
  }
  const double k_lo = std::ceil(std::log(curve.min_watch_s));
  const double k_hi = std::ceil(std::log(curve.max_watch_s));
  if (!(k_hi > k_lo)) {
    throw Error(ErrorCode::kConfigInvalid,
                "log_quadratic watch-time range spans a single ceil(ln y) step");
  }
  auto wpr_at = [&](double k) {
    const double denom = curve.a * k * k + curve.b * k + curve.c;
    return denom > 0.0 ? 1.0 / denom : -1.0;
  };
  double previous = 0.0;
  for (double k = k_lo; k <= k_hi; k += 1.0) {
    const double value = wpr_at(k);
    if (!(value > previous) || value > 1.0) {
      throw Error(ErrorCode::kNonMonotoneCurve,
                  fmt::format("WPR curve must increase within (0,1]; got {} "
                              "at k={}",
                              value, k));
    }
    previous = value;
  }
  // Group upper boundaries are evenly spaced in k between k_lo and k_hi.
  std::vector<double> levels(n_groups);
  for (int n = 0; n < n_groups; ++n) {
    const double k = k_lo + (k_hi - k_lo) * (n + 1) / n_groups;
    levels[n] = wpr_at(k);
    if (!(levels[n] > (n == 0 ? 0.0 : levels[n - 1])) || levels[n] > 1.0) {
      throw Error(ErrorCode::kNonMonotoneCurve,
                  fmt::format("WPR curve not increasing at group boundary {}",
                              n + 1));
    }
  }
  std::vector<double> ratios(n_groups);
  for (int n = 0; n < n_groups; ++n) {
    ratios[n] = levels[n] - (n == 0 ? 0.0 : levels[n - 1]);
  }
  return normalize(std::move(ratios));
}

}  // namespace

double parse_real(std::string_view text, std::string_view field,
                  std::uint64_t row_index) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorCode::kFormat,
                fmt::format("row {}: field '{}' is not a finite number: '{}'",
                            row_index, field, text));
  }
  return value;
}

Interaction validate_interaction(const RawRecord& raw, std::uint64_t row_index) {
  Interaction out;
  out.user_id = require_field(raw.user_id, "user_id", row_index);
  out.video_id = require_field(raw.video_id, "video_id", row_index);
  out.duration_s = parse_real(
      require_field(raw.duration_s, "duration_s", row_index), "duration_s",
      row_index);
  out.watch_time_s = parse_real(
      require_field(raw.watch_time_s, "watch_time_s", row_index),
      "watch_time_s", row_index);
  if (!(out.duration_s > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDuration,
                fmt::format("row {}: duration_s must be > 0, got {}", row_index,
                            out.duration_s));
  }
  if (out.watch_time_s < 0.0) {
    throw Error(ErrorCode::kNegativeWatchTime,
                fmt::format("row {}: watch_time_s must be >= 0, got {}",
                            row_index, out.watch_time_s));
  }
  out.row_index = row_index;
  return out;
}

std::string_view partition_kind_name(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::kEqualFrequency: return "equal_frequency";
    case PartitionKind::kPowerDecay: return "power_decay";
    case PartitionKind::kLogQuadratic: return "log_quadratic";
    case PartitionKind::kExplicit: return "explicit";
  }
  return "unknown";
}

PartitionKind parse_partition_kind(std::string_view name) {
  for (auto kind : {PartitionKind::kEqualFrequency, PartitionKind::kPowerDecay,
                    PartitionKind::kLogQuadratic, PartitionKind::kExplicit}) {
    if (partition_kind_name(kind) == name) return kind;
  }
  throw Error(ErrorCode::kConfigInvalid,
              fmt::format("unknown partition kind '{}'", name));
}

PartitionScheme PartitionScheme::from_ratios(std::vector<double> ratios,
                                             bool progressive,
                                             bool strict_decrease) {
  if (ratios.size() < 2) {
    throw Error(ErrorCode::kInvalidRatios, "a partition needs at least 2 groups");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < ratios.size(); ++n) {
    if (!(ratios[n] > 0.0) || !std::isfinite(ratios[n])) {
      throw Error(ErrorCode::kInvalidRatios,
                  fmt::format("ratio q_{} = {} is not positive", n + 1,
                              ratios[n]));
    }
    if (progressive && n > 0) {
      const bool violates = strict_decrease ? !(ratios[n] < ratios[n - 1])
                                            : ratios[n] > ratios[n - 1];
      if (violates) {
        throw Error(ErrorCode::kInvalidRatios,
                    fmt::format("progressive partition requires q_{} {} q_{}",
                                n, strict_decrease ? ">" : ">=", n + 1));
      }
    }
    total += ratios[n];
  }
  if (std::abs(total - 1.0) > kRatioSumTolerance) {
    throw Error(ErrorCode::kInvalidRatios,
                fmt::format("ratios sum to {} instead of 1", total));
  }
  std::vector<double> prefix(ratios.size());
  double running = 0.0;
  for (std::size_t n = 0; n < ratios.size(); ++n) {
    running += ratios[n];
    prefix[n] = running / total;
  }
  prefix.back() = 1.0;
  for (std::size_t n = 1; n < prefix.size(); ++n) {
    if (!(prefix[n] > prefix[n - 1])) {
      throw Error(ErrorCode::kInvalidRatios, "prefix sums not strictly increasing");
    }
  }
  return PartitionScheme(std::move(ratios), std::move(prefix));
}

std::size_t PartitionScheme::group_of(double rank_fraction) const {
  auto it = std::lower_bound(
      prefix_.begin(), prefix_.end(), rank_fraction,
      [](double level, double r) { return level + kBoundarySlack < r; });
  if (it == prefix_.end()) return prefix_.size() - 1;
  return static_cast<std::size_t>(it - prefix_.begin());
}

PartitionScheme make_partition(PartitionKind kind, int n_groups,
                               const PartitionParams& params) {
  if (kind != PartitionKind::kExplicit && n_groups < 2) {
    throw Error(ErrorCode::kInvalidRatios,
                fmt::format("number of groups must be >= 2, got {}", n_groups));
  }
  switch (kind) {
    case PartitionKind::kEqualFrequency:
      return PartitionScheme::from_ratios(
          normalize(std::vector<double>(n_groups, 1.0)), params.progressive,
          false);
    case PartitionKind::kPowerDecay: {
      if (!(params.gamma >= 0.0)) {
        throw Error(ErrorCode::kConfigInvalid,
                    fmt::format("power_decay exponent must be >= 0, got {}",
                                params.gamma));
      }
      std::vector<double> weights(n_groups);
      for (int n = 0; n < n_groups; ++n) {
        weights[n] = std::pow(static_cast<double>(n + 1), -params.gamma);
      }
      return PartitionScheme::from_ratios(normalize(std::move(weights)),
                                          params.progressive,
                                          params.strict_decrease);
    }
    case PartitionKind::kLogQuadratic:
      return PartitionScheme::from_ratios(
          log_quadratic_ratios(n_groups, params.curve), params.progressive,
          params.strict_decrease);
    case PartitionKind::kExplicit:
      if (n_groups != 0 && static_cast<std::size_t>(n_groups) != params.ratios.size()) {
        throw Error(ErrorCode::kInvalidRatios,
                    fmt::format("expected {} ratios, got {}", n_groups,
                                params.ratios.size()));
      }
      return PartitionScheme::from_ratios(params.ratios, params.progressive,
                                          params.strict_decrease);
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown partition kind");
}

DurationBins::DurationBins(std::vector<double> upper_edges)
    : upper_edges_(std::move(upper_edges)) {
  for (std::size_t i = 1; i < upper_edges_.size(); ++i) {
    if (!(upper_edges_[i] > upper_edges_[i - 1])) {
      throw Error(ErrorCode::kConfigInvalid,
                  "duration bin edges must be strictly increasing");
    }
  }
}

std::size_t DurationBins::bin_of(double duration_s) const {
  return static_cast<std::size_t>(
      std::lower_bound(upper_edges_.begin(), upper_edges_.end(), duration_s) -
      upper_edges_.begin());
}

DurationBins make_duration_bins(std::span<const double> durations, int max_bins,
                                std::size_t min_bin_size) {
  if (durations.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "cannot bin an empty dataset");
  }
  if (max_bins < 1) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("bin count must be >= 1, got {}", max_bins));
  }
  std::vector<double> sorted(durations.begin(), durations.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t bins = static_cast<std::size_t>(max_bins);

  // Nearest-rank cut at j/B: the ceil(j*n/B)-th smallest duration.
  std::vector<double> edges;
  for (std::size_t j = 1; j < bins; ++j) {
    const double cut = sorted[(j * n + bins - 1) / bins - 1];
    if (cut >= sorted.back()) break;
    if (edges.empty() || cut > edges.back()) edges.push_back(cut);
  }

  std::vector<std::size_t> counts(edges.size() + 1, 0);
  {
    std::size_t bin = 0;
    for (double d : sorted) {
      while (bin < edges.size() && d > edges[bin]) ++bin;
      ++counts[bin];
    }
  }

  // Merge the leftmost smallest bin into its smaller neighbour until every
  // bin holds at least min_bin_size records.
  while (counts.size() > 1) {
    const auto smallest = std::min_element(counts.begin(), counts.end());
    if (*smallest >= min_bin_size) break;
    const std::size_t i = static_cast<std::size_t>(smallest - counts.begin());
    std::size_t left;  // merge bins left and left+1
    if (i == 0) {
      left = 0;
    } else if (i + 1 == counts.size()) {
      left = i - 1;
    } else {
      left = counts[i - 1] <= counts[i + 1] ? i - 1 : i;
    }
    counts[left] += counts[left + 1];
    counts.erase(counts.begin() + static_cast<std::ptrdiff_t>(left) + 1);
    edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(left));
  }
  return DurationBins(std::move(edges));
}

DurationBins make_duration_bins(std::span<const Interaction> dataset,
                                int max_bins, std::size_t min_bin_size) {
  std::vector<double> durations;
  durations.reserve(dataset.size());
  for (const auto& record : dataset) durations.push_back(record.duration_s);
  return make_duration_bins(std::span<const double>(durations), max_bins,
                            min_bin_size);
}

}  // namespace watchlabel
