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

// Domain types shared by every stage of the labeling pipeline: validated
// interaction records, group-ratio partition schemes and duration bins.

#ifndef WATCHLABEL_CORE_HPP_
#define WATCHLABEL_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace watchlabel {

// One user-video playback record.
struct Interaction {
  std::string user_id;
  std::string video_id;
  double duration_s = 0.0;
  double watch_time_s = 0.0;
  // 0-based ingestion ordinal, also the tie-break key when ranking.
  std::uint64_t row_index = 0;
};

using Dataset = std::vector<Interaction>;

// Unparsed fields of one input row. Absent or empty fields are MissingField.
struct RawRecord {
  std::optional<std::string> user_id;
  std::optional<std::string> video_id;
  std::optional<std::string> duration_s;
  std::optional<std::string> watch_time_s;
};

// Parses and checks one row. Errors carry the row number in the message.
Interaction validate_interaction(const RawRecord& raw, std::uint64_t row_index);

// Parses a finite real number; throws kFormat naming `field` otherwise.
double parse_real(std::string_view text, std::string_view field,
                  std::uint64_t row_index);

enum class PartitionKind { kEqualFrequency, kPowerDecay, kLogQuadratic, kExplicit };

std::string_view partition_kind_name(PartitionKind kind);
PartitionKind parse_partition_kind(std::string_view name);

// Implied WPR curve 1 / (a k^2 + b k + c) over k = ceil(ln y), y in
// [min_watch_s, max_watch_s].
struct LogQuadraticCurve {
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;
  double min_watch_s = 1.0;
  double max_watch_s = 600.0;
};

struct PartitionParams {
  double gamma = 0.5;
  LogQuadraticCurve curve;
  std::vector<double> ratios;  // explicit mode only
  // Require q_1 >= q_2 >= ... >= q_N. Power decay satisfies it by construction.
  bool progressive = false;
  // With `progressive`, reject equal neighbours too.
  bool strict_decrease = false;
};

// Ordered group ratios q_1..q_N and their prefix sums. Immutable.
class PartitionScheme {
 public:
  // Validates `ratios` (sum 1 within 1e-9, all positive) and builds prefixes.
  static PartitionScheme from_ratios(std::vector<double> ratios,
                                     bool progressive = false,
                                     bool strict_decrease = false);

  std::size_t size() const { return ratios_.size(); }
  std::span<const double> ratios() const { return ratios_; }
  std::span<const double> prefix() const { return prefix_; }

  // 0-based index of the smallest group n with rank_fraction <= prefix(n).
  // Fractions above 1 map to the last group, non-positive ones to the first.
  std::size_t group_of(double rank_fraction) const;

  // Label value of the 0-based group, i.e. prefix(group).
  double level(std::size_t group) const { return prefix_[group]; }

 private:
  PartitionScheme(std::vector<double> ratios, std::vector<double> prefix)
      : ratios_(std::move(ratios)), prefix_(std::move(prefix)) {}

  std::vector<double> ratios_;
  std::vector<double> prefix_;
};

PartitionScheme make_partition(PartitionKind kind, int n_groups,
                               const PartitionParams& params = {});

// Equal-frequency bins over video duration. Boundaries sit on observed
// distinct durations so records with equal duration always share a bin.
class DurationBins {
 public:
  DurationBins() = default;
  // `upper_edges` are the inclusive upper boundaries of every bin but the
  // last; they must be strictly increasing.
  explicit DurationBins(std::vector<double> upper_edges);

  std::size_t size() const { return upper_edges_.size() + 1; }
  std::span<const double> upper_edges() const { return upper_edges_; }
  std::size_t bin_of(double duration_s) const;

 private:
  std::vector<double> upper_edges_;
};

DurationBins make_duration_bins(std::span<const double> durations, int max_bins,
                                std::size_t min_bin_size);
DurationBins make_duration_bins(std::span<const Interaction> dataset,
                                int max_bins, std::size_t min_bin_size);

}  // namespace watchlabel

#endif  // WATCHLABEL_CORE_HPP_
