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

// Watch-time labels: WPR and its duration-stratified variant, percentile
// based binary labels (EV/LV) with duration, video and user stratification,
// and the ablation targets (playing rate, equal-width WPR).

#ifndef WATCHLABEL_LABELING_HPP_
#define WATCHLABEL_LABELING_HPP_

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "watchlabel/core.hpp"
#include "watchlabel/quantile.hpp"

namespace watchlabel {

// How records with equal watch time are ranked.
enum class TieMode {
  // Ties split by ascending row_index; group ratios hold exactly.
  kDistinctRank,
  // Every tied record gets the group of the last record of its tied run.
  kEqualValuesEqualLabels,
};

std::string_view tie_mode_name(TieMode mode);
TieMode parse_tie_mode(std::string_view name);

struct SummaryOptions {
  SummaryMode mode = SummaryMode::kExact;
  double eps = kDefaultSketchEps;
  TieMode tie_mode = TieMode::kDistinctRank;
  int threads = 1;
};

enum class GroupKind { kGlobal, kDurationBin, kVideo, kUser };

std::string_view group_kind_name(GroupKind kind);

struct GroupKey {
  GroupKind kind = GroupKind::kGlobal;
  std::size_t bin = 0;  // kDurationBin only
  std::string id;       // kVideo / kUser only

  static GroupKey global() { return {}; }
  static GroupKey duration_bin(std::size_t b) { return {GroupKind::kDurationBin, b, {}}; }
  static GroupKey video(std::string v) { return {GroupKind::kVideo, 0, std::move(v)}; }
  static GroupKey user(std::string u) { return {GroupKind::kUser, 0, std::move(u)}; }

  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

// Finalized per-group summaries with the fallback chain
// video/user -> duration bin -> global.
class GroupedSummaries {
 public:
  struct Selection {
    bool duration_bins = true;
    bool videos = true;
    bool users = true;
  };

  static GroupedSummaries build(std::span<const Interaction> dataset,
                                const DurationBins& bins,
                                const SummaryOptions& options,
                                Selection selection);
  static GroupedSummaries build(std::span<const Interaction> dataset,
                                const DurationBins& bins,
                                const SummaryOptions& options) {
    return build(dataset, bins, options, Selection{});
  }

  const DurationBins& bins() const { return bins_; }
  const QuantileSummary& global() const { return global_; }
  // nullptr when the group was not built or holds no records.
  const QuantileSummary* find(const GroupKey& key) const;

  // Summary to threshold `record` against for `kind`, stepping down the
  // fallback chain while the candidate holds fewer than min_group_size
  // records or is missing.
  const QuantileSummary& resolve(GroupKind kind, const Interaction& record,
                                 std::size_t min_group_size) const;

 private:
  DurationBins bins_;
  QuantileSummary global_ = QuantileSummary::exact();
  std::vector<QuantileSummary> by_bin_;
  std::map<std::string, QuantileSummary> by_video_;
  std::map<std::string, QuantileSummary> by_user_;
};

// Label for one watch time against one ranked population. With a tie key
// the record's distinct rank is used, otherwise its percentile rank.
double assign_wpr(const QuantileSummary& summary, const PartitionScheme& partition,
                  double watch_time_s,
                  std::optional<std::uint64_t> tie_key = std::nullopt);

std::vector<double> label_wpr_global(std::span<const Interaction> dataset,
                                     const PartitionScheme& partition,
                                     const SummaryOptions& options = {});

// WPR computed independently inside each duration bin.
std::vector<double> label_wpr_debiased(std::span<const Interaction> dataset,
                                       const PartitionScheme& partition,
                                       const DurationBins& bins,
                                       const SummaryOptions& options = {});

// 1 iff watch_time >= t_p of the record's reference population.
std::vector<std::uint8_t> label_binary(std::span<const Interaction> dataset,
                                       double p, GroupKind kind,
                                       const GroupedSummaries& summaries,
                                       std::size_t min_group_size);

std::vector<double> label_playing_rate(std::span<const Interaction> dataset);

// n/N for the equal-width interval n of [0, t_cap]; group n covers
// ((n-1)w, nw], 0 falls in group 1 and values above the cap in group N.
std::vector<double> label_equal_width_wpr(std::span<const Interaction> dataset,
                                          int n_groups, double cap_percentile);

inline constexpr double kEffectiveViewPercentile = 50.0;
inline constexpr double kLongViewPercentile = 75.0;

// Output columns in file order.
inline constexpr std::array<std::string_view, 13> kLabelColumns = {
    "wpr",  "wpr_d", "ev",   "ev_d", "ev_v",         "ev_u",  "lv",
    "lv_d", "lv_v",  "lv_u", "playing_rate", "ef_wpr", "ew_wpr"};

struct LabelSet {
  std::optional<double> wpr, wpr_d;
  std::optional<std::uint8_t> ev, ev_d, ev_v, ev_u;
  std::optional<std::uint8_t> lv, lv_d, lv_v, lv_u;
  std::optional<double> playing_rate;
  std::optional<double> ef_wpr, ew_wpr;

  // Value of the named column as a real; nullopt when absent.
  std::optional<double> get(std::string_view column) const;
};

struct LabelToggles {
  bool wpr = true, wpr_d = true;
  bool ev = true, ev_d = true, ev_v = true, ev_u = true;
  bool lv = true, lv_d = true, lv_v = true, lv_u = true;
  bool playing_rate = true;
  bool ef_wpr = false, ew_wpr = false;

  static LabelToggles none();
  // Enables a comma separated list of column names (or "all").
  static LabelToggles parse(std::string_view list);
  bool enabled(std::string_view column) const;
  void set(std::string_view column, bool on);
};

struct LabelConfig {
  PartitionScheme partition =
      make_partition(PartitionKind::kPowerDecay, 300, PartitionParams{});
  int max_bins = 30;
  std::size_t min_bin_size = 20;
  std::size_t min_group_size = 10;
  SummaryOptions summary;
  int ef_groups = 300;
  int ew_groups = 300;
  double ew_cap_percentile = 99.0;
  LabelToggles enabled;
};

struct LabelOutput {
  DurationBins bins;
  std::vector<LabelSet> labels;  // aligned with the input records
};

LabelOutput label_all(std::span<const Interaction> dataset,
                      const LabelConfig& config);

}  // namespace watchlabel

#endif  // WATCHLABEL_LABELING_HPP_
