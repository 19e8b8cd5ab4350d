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

#include "watchlabel/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "watchlabel/error.hpp"
#include "watchlabel/parallel.hpp"

namespace watchlabel {
namespace {

constexpr std::size_t kChunk = 4096;

void require_non_empty(std::span<const Interaction> dataset) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "dataset is empty");
}

// Runs fn(begin, end) over contiguous record ranges.
template <typename Fn>
void for_chunks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    fn(c * kChunk, std::min(n, (c + 1) * kChunk));
  });
}

std::optional<std::uint64_t> tie_key_for(const Interaction& record,
                                         const SummaryOptions& options) {
  if (options.tie_mode == TieMode::kDistinctRank) return record.row_index;
  return std::nullopt;
}

std::vector<std::size_t> assign_bins(std::span<const Interaction> dataset,
                                     const DurationBins& bins) {
  std::vector<std::size_t> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out[i] = bins.bin_of(dataset[i].duration_s);
  }
  return out;
}

// Labels every record against summary_of(i).
template <typename SummaryOf>
std::vector<double> wpr_against(std::span<const Interaction> dataset,
                                const PartitionScheme& partition,
                                const SummaryOptions& options,
                                SummaryOf&& summary_of) {
  std::vector<double> out(dataset.size());
  for_chunks(dataset.size(), options.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      out[i] = assign_wpr(summary_of(i), partition, dataset[i].watch_time_s,
                          tie_key_for(dataset[i], options));
    }
  });
  return out;
}

std::vector<double> equal_width_levels(std::span<const double> watch_times,
                                       int n_groups, double cap_percentile) {
  if (watch_times.empty()) throw Error(ErrorCode::kEmptyDataset, "dataset is empty");
  if (n_groups < 1) {
    throw Error(ErrorCode::kConfigInvalid, "equal-width WPR needs >= 1 group");
  }
  QuantileSummary summary = QuantileSummary::exact();
  for (double y : watch_times) summary.insert(y);
  summary.finalize();
  const double cap = summary.query_threshold(cap_percentile);
  const double width = cap / n_groups;
  std::vector<double> out(watch_times.size());
  for (std::size_t i = 0; i < watch_times.size(); ++i) {
    const double y = watch_times[i];
    int group = 1;
    if (y > 0.0) {
      group = width > 0.0
                  ? static_cast<int>(std::ceil(y / width - 1e-9))
                  : n_groups;
      group = std::clamp(group, 1, n_groups);
    }
    out[i] = static_cast<double>(group) / n_groups;
  }
  return out;
}

}  // namespace

std::string_view tie_mode_name(TieMode mode) {
  return mode == TieMode::kDistinctRank ? "distinct_rank" : "equal_values";
}

TieMode parse_tie_mode(std::string_view name) {
  if (name == "distinct_rank") return TieMode::kDistinctRank;
  if (name == "equal_values") return TieMode::kEqualValuesEqualLabels;
  throw Error(ErrorCode::kConfigInvalid, fmt::format("unknown tie mode '{}'", name));
}

std::string_view group_kind_name(GroupKind kind) {
  switch (kind) {
    case GroupKind::kGlobal: return "global";
    case GroupKind::kDurationBin: return "duration_bin";
    case GroupKind::kVideo: return "video";
    case GroupKind::kUser: return "user";
  }
  return "unknown";
}

GroupedSummaries GroupedSummaries::build(std::span<const Interaction> dataset,
                                         const DurationBins& bins,
                                         const SummaryOptions& options,
                                         Selection selection) {
  GroupedSummaries out;
  out.bins_ = bins;
  const auto make = [&] { return QuantileSummary::make(options.mode, options.eps); };
  out.global_ = make();

  // Member lists per group, in row order. Each summary is then filled by a
  // single worker so the result is independent of the thread count.
  std::vector<std::vector<std::size_t>> bin_members;
  std::map<std::string, std::vector<std::size_t>> video_members;
  std::map<std::string, std::vector<std::size_t>> user_members;
  if (selection.duration_bins) {
    bin_members.resize(bins.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      bin_members[bins.bin_of(dataset[i].duration_s)].push_back(i);
    }
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (selection.videos) video_members[dataset[i].video_id].push_back(i);
    if (selection.users) user_members[dataset[i].user_id].push_back(i);
  }

  struct Task {
    QuantileSummary* target;
    const std::vector<std::size_t>* members;  // nullptr: every record
  };
  std::vector<Task> tasks;
  tasks.push_back({&out.global_, nullptr});
  out.by_bin_.assign(bin_members.size(), make());
  for (std::size_t b = 0; b < bin_members.size(); ++b) {
    tasks.push_back({&out.by_bin_[b], &bin_members[b]});
  }
  for (const auto& [id, members] : video_members) {
    auto [it, inserted] = out.by_video_.emplace(id, make());
    tasks.push_back({&it->second, &members});
  }
  for (const auto& [id, members] : user_members) {
    auto [it, inserted] = out.by_user_.emplace(id, make());
    tasks.push_back({&it->second, &members});
  }

  parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
    QuantileSummary& summary = *tasks[t].target;
    if (tasks[t].members == nullptr) {
      for (const auto& record : dataset) {
        summary.insert(record.watch_time_s, record.row_index);
      }
    } else {
      for (std::size_t i : *tasks[t].members) {
        summary.insert(dataset[i].watch_time_s, dataset[i].row_index);
      }
    }
    summary.finalize();
  });
  return out;
}

const QuantileSummary* GroupedSummaries::find(const GroupKey& key) const {
  const QuantileSummary* found = nullptr;
  switch (key.kind) {
    case GroupKind::kGlobal:
      found = &global_;
      break;
    case GroupKind::kDurationBin:
      if (key.bin < by_bin_.size()) found = &by_bin_[key.bin];
      break;
    case GroupKind::kVideo: {
      auto it = by_video_.find(key.id);
      if (it != by_video_.end()) found = &it->second;
      break;
    }
    case GroupKind::kUser: {
      auto it = by_user_.find(key.id);
      if (it != by_user_.end()) found = &it->second;
      break;
    }
  }
  return found != nullptr && !found->empty() ? found : nullptr;
}

const QuantileSummary& GroupedSummaries::resolve(GroupKind kind,
                                                 const Interaction& record,
                                                 std::size_t min_group_size) const {
  auto usable = [&](const QuantileSummary* s) {
    return s != nullptr && s->count() >= std::max<std::size_t>(min_group_size, 1);
  };
  if (kind == GroupKind::kVideo || kind == GroupKind::kUser) {
    const QuantileSummary* entity =
        find(kind == GroupKind::kVideo ? GroupKey::video(record.video_id)
                                       : GroupKey::user(record.user_id));
    if (usable(entity)) return *entity;
    kind = GroupKind::kDurationBin;
  }
  if (kind == GroupKind::kDurationBin) {
    const QuantileSummary* bin =
        find(GroupKey::duration_bin(bins_.bin_of(record.duration_s)));
    if (usable(bin)) return *bin;
  }
  if (global_.empty()) {
    throw Error(ErrorCode::kMissingGroupSummary,
                fmt::format("row {}: no summary available for {} grouping",
                            record.row_index, group_kind_name(kind)));
  }
  return global_;
}

double assign_wpr(const QuantileSummary& summary, const PartitionScheme& partition,
                  double watch_time_s, std::optional<std::uint64_t> tie_key) {
  const double rank = tie_key.has_value()
                          ? summary.distinct_rank_fraction(watch_time_s, *tie_key)
                          : summary.percentile_rank(watch_time_s);
  return partition.level(partition.group_of(rank));
}

std::vector<double> label_wpr_global(std::span<const Interaction> dataset,
                                     const PartitionScheme& partition,
                                     const SummaryOptions& options) {
  require_non_empty(dataset);
  const auto summaries = GroupedSummaries::build(
      dataset, DurationBins{}, options,
      {.duration_bins = false, .videos = false, .users = false});
  return wpr_against(dataset, partition, options,
                     [&](std::size_t) -> const QuantileSummary& {
                       return summaries.global();
                     });
}

std::vector<double> label_wpr_debiased(std::span<const Interaction> dataset,
                                       const PartitionScheme& partition,
                                       const DurationBins& bins,
                                       const SummaryOptions& options) {
  require_non_empty(dataset);
  const auto summaries = GroupedSummaries::build(
      dataset, bins, options,
      {.duration_bins = true, .videos = false, .users = false});
  const auto bin_of = assign_bins(dataset, bins);
  return wpr_against(dataset, partition, options,
                     [&](std::size_t i) -> const QuantileSummary& {
                       return *summaries.find(GroupKey::duration_bin(bin_of[i]));
                     });
}

std::vector<std::uint8_t> label_binary(std::span<const Interaction> dataset,
                                       double p, GroupKind kind,
                                       const GroupedSummaries& summaries,
                                       std::size_t min_group_size) {
  std::vector<std::uint8_t> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& summary = summaries.resolve(kind, dataset[i], min_group_size);
    out[i] = dataset[i].watch_time_s >= summary.query_threshold(p) ? 1 : 0;
  }
  return out;
}

std::vector<double> label_playing_rate(std::span<const Interaction> dataset) {
  std::vector<double> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out[i] = std::min(dataset[i].watch_time_s / dataset[i].duration_s, 1.0);
  }
  return out;
}

std::vector<double> label_equal_width_wpr(std::span<const Interaction> dataset,
                                          int n_groups, double cap_percentile) {
  require_non_empty(dataset);
  std::vector<double> watch(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) watch[i] = dataset[i].watch_time_s;
  return equal_width_levels(watch, n_groups, cap_percentile);
}

std::optional<double> LabelSet::get(std::string_view column) const {
  auto real = [](const std::optional<std::uint8_t>& v) -> std::optional<double> {
    if (!v) return std::nullopt;
    return static_cast<double>(*v);
  };
  if (column == "wpr") return wpr;
  if (column == "wpr_d") return wpr_d;
  if (column == "ev") return real(ev);
  if (column == "ev_d") return real(ev_d);
  if (column == "ev_v") return real(ev_v);
  if (column == "ev_u") return real(ev_u);
  if (column == "lv") return real(lv);
  if (column == "lv_d") return real(lv_d);
  if (column == "lv_v") return real(lv_v);
  if (column == "lv_u") return real(lv_u);
  if (column == "playing_rate") return playing_rate;
  if (column == "ef_wpr") return ef_wpr;
  if (column == "ew_wpr") return ew_wpr;
  return std::nullopt;
}

LabelToggles LabelToggles::none() {
  LabelToggles t;
  for (auto column : kLabelColumns) t.set(column, false);
  return t;
}

LabelToggles LabelToggles::parse(std::string_view list) {
  LabelToggles t = none();
  while (!list.empty()) {
    const auto comma = list.find(',');
    std::string_view item = list.substr(0, comma);
    list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
    if (item.empty()) continue;
    if (item == "all") {
      for (auto column : kLabelColumns) t.set(column, true);
      continue;
    }
    if (std::find(kLabelColumns.begin(), kLabelColumns.end(), item) ==
        kLabelColumns.end()) {
      throw Error(ErrorCode::kConfigInvalid, fmt::format("unknown label '{}'", item));
    }
    t.set(item, true);
  }
  return t;
}

bool LabelToggles::enabled(std::string_view column) const {
  const std::pair<std::string_view, bool> flags[] = {
      {"wpr", wpr},       {"wpr_d", wpr_d},   {"ev", ev},
      {"ev_d", ev_d},     {"ev_v", ev_v},     {"ev_u", ev_u},
      {"lv", lv},         {"lv_d", lv_d},     {"lv_v", lv_v},
      {"lv_u", lv_u},     {"playing_rate", playing_rate},
      {"ef_wpr", ef_wpr}, {"ew_wpr", ew_wpr}};
  for (const auto& [name, on] : flags) {
    if (name == column) return on;
  }
  return false;
}

void LabelToggles::set(std::string_view column, bool on) {
  bool* flags[] = {&wpr,  &wpr_d, &ev,   &ev_d, &ev_v,         &ev_u,  &lv,
                   &lv_d, &lv_v,  &lv_u, &playing_rate, &ef_wpr, &ew_wpr};
  for (std::size_t i = 0; i < kLabelColumns.size(); ++i) {
    if (kLabelColumns[i] == column) *flags[i] = on;
  }
}

LabelOutput label_all(std::span<const Interaction> dataset,
                      const LabelConfig& config) {
  require_non_empty(dataset);
  const LabelToggles& on = config.enabled;
  const SummaryOptions& options = config.summary;

  LabelOutput out;
  out.bins = make_duration_bins(dataset, config.max_bins, config.min_bin_size);
  out.labels.resize(dataset.size());
  auto& labels = out.labels;

  const auto summaries = GroupedSummaries::build(
      dataset, out.bins, options,
      {.duration_bins = true,
       .videos = on.ev_v || on.lv_v,
       .users = on.ev_u || on.lv_u});
  const auto bin_of = assign_bins(dataset, out.bins);
  auto bin_summary = [&](std::size_t i) -> const QuantileSummary& {
    return *summaries.find(GroupKey::duration_bin(bin_of[i]));
  };
  auto global_summary = [&](std::size_t) -> const QuantileSummary& {
    return summaries.global();
  };

  if (on.wpr) {
    const auto v = wpr_against(dataset, config.partition, options, global_summary);
    for (std::size_t i = 0; i < v.size(); ++i) labels[i].wpr = v[i];
  }
  if (on.wpr_d) {
    const auto v = wpr_against(dataset, config.partition, options, bin_summary);
    for (std::size_t i = 0; i < v.size(); ++i) labels[i].wpr_d = v[i];
  }
  if (on.ef_wpr) {
    const auto equal = make_partition(PartitionKind::kEqualFrequency, config.ef_groups);
    const auto v = wpr_against(dataset, equal, options, bin_summary);
    for (std::size_t i = 0; i < v.size(); ++i) labels[i].ef_wpr = v[i];
  }
  if (on.ew_wpr) {
    // Equal-width grid drawn separately inside every duration bin.
    std::vector<std::vector<std::size_t>> members(out.bins.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) members[bin_of[i]].push_back(i);
    for (const auto& group : members) {
      if (group.empty()) continue;
      std::vector<double> watch;
      watch.reserve(group.size());
      for (std::size_t i : group) watch.push_back(dataset[i].watch_time_s);
      const auto v =
          equal_width_levels(watch, config.ew_groups, config.ew_cap_percentile);
      for (std::size_t j = 0; j < group.size(); ++j) labels[group[j]].ew_wpr = v[j];
    }
  }
  if (on.playing_rate) {
    const auto v = label_playing_rate(dataset);
    for (std::size_t i = 0; i < v.size(); ++i) labels[i].playing_rate = v[i];
  }

  struct BinaryColumn {
    bool enabled;
    double p;
    GroupKind kind;
    std::optional<std::uint8_t> LabelSet::*field;
  };
  const BinaryColumn binaries[] = {
      {on.ev, kEffectiveViewPercentile, GroupKind::kGlobal, &LabelSet::ev},
      {on.ev_d, kEffectiveViewPercentile, GroupKind::kDurationBin, &LabelSet::ev_d},
      {on.ev_v, kEffectiveViewPercentile, GroupKind::kVideo, &LabelSet::ev_v},
      {on.ev_u, kEffectiveViewPercentile, GroupKind::kUser, &LabelSet::ev_u},
      {on.lv, kLongViewPercentile, GroupKind::kGlobal, &LabelSet::lv},
      {on.lv_d, kLongViewPercentile, GroupKind::kDurationBin, &LabelSet::lv_d},
      {on.lv_v, kLongViewPercentile, GroupKind::kVideo, &LabelSet::lv_v},
      {on.lv_u, kLongViewPercentile, GroupKind::kUser, &LabelSet::lv_u},
  };
  for (const auto& column : binaries) {
    if (!column.enabled) continue;
    const auto v = label_binary(dataset, column.p, column.kind, summaries,
                                config.min_group_size);
    for (std::size_t i = 0; i < v.size(); ++i) labels[i].*column.field = v[i];
  }
  return out;
}

}  // namespace watchlabel
