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

#include "watchlabel/quantile.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "watchlabel/error.hpp"

namespace watchlabel {
namespace {

constexpr std::array<char, 4> kMagic = {'W', 'L', 'Q', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

// Each compaction at level h moves any rank estimate by at most 2^h and
// consumes at least `capacity` items of that weight, so the total error is
// bounded by (levels in use) * n / capacity. Sizing the capacity for this
// many levels keeps the bound below eps for any n < capacity * 2^49.
constexpr double kCertifiedLevels = 50.0;

std::size_t capacity_for(double eps) {
  const auto half = static_cast<std::size_t>(std::ceil(kCertifiedLevels / (2.0 * eps)));
  return 2 * std::max<std::size_t>(half, 1);
}

// Smallest count k in [1, n] with k / n >= p / 100.
std::uint64_t nearest_rank(double p, std::uint64_t n) {
  const double target = p * static_cast<double>(n) / 100.0;
  auto k = static_cast<std::uint64_t>(std::ceil(target - 1e-9));
  return std::clamp<std::uint64_t>(k, 1, n);
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::kFormat, "truncated quantile summary");
  return value;
}

}  // namespace

std::string_view summary_mode_name(SummaryMode mode) {
  return mode == SummaryMode::kExact ? "exact" : "sketch";
}

SummaryMode parse_summary_mode(std::string_view name) {
  if (name == "exact") return SummaryMode::kExact;
  if (name == "sketch") return SummaryMode::kSketch;
  throw Error(ErrorCode::kConfigInvalid,
              fmt::format("unknown summary mode '{}'", name));
}

QuantileSummary::QuantileSummary(SummaryMode mode, double eps)
    : mode_(mode), eps_(eps) {
  if (mode_ == SummaryMode::kSketch) {
    if (!(eps > 0.0 && eps < 0.5)) {
      throw Error(ErrorCode::kConfigInvalid,
                  fmt::format("sketch eps must lie in (0, 0.5), got {}", eps));
    }
    capacity_ = capacity_for(eps);
    levels_.emplace_back();
    compactions_.push_back(0);
  } else {
    eps_ = 0.0;
  }
}

QuantileSummary QuantileSummary::exact() {
  return QuantileSummary(SummaryMode::kExact, 0.0);
}

QuantileSummary QuantileSummary::sketch(double eps) {
  return QuantileSummary(SummaryMode::kSketch, eps);
}

QuantileSummary QuantileSummary::make(SummaryMode mode, double eps) {
  return QuantileSummary(mode, eps);
}

void QuantileSummary::insert(double value, std::uint64_t tie_key) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw Error(ErrorCode::kNegativeValue,
                fmt::format("summary values must be finite and >= 0, got {}",
                            value));
  }
  finalized_ = false;
  ++count_;
  if (mode_ == SummaryMode::kExact) {
    entries_.push_back({value, tie_key});
    return;
  }
  levels_[0].push_back(value);
  if (levels_[0].size() >= capacity_) compact_from(0);
}

void QuantileSummary::compact_from(std::size_t level) {
  for (std::size_t h = level; h < levels_.size(); ++h) {
    if (levels_[h].size() < capacity_) break;
    auto& items = levels_[h];
    std::sort(items.begin(), items.end());
    const std::size_t paired = items.size() & ~std::size_t{1};
    const std::size_t offset = compactions_[h] % 2;
    if (h + 1 == levels_.size()) {
      levels_.emplace_back();
      compactions_.push_back(0);
    }
    auto& next = levels_[h + 1];  // levels_ may have grown above
    auto& current = levels_[h];
    for (std::size_t i = offset; i < paired; i += 2) next.push_back(current[i]);
    // An odd item out (the largest) stays behind at this level.
    current.erase(current.begin(),
                  current.begin() + static_cast<std::ptrdiff_t>(paired));
    ++compactions_[h];
    error_weight_ += std::uint64_t{1} << h;
  }
}

void QuantileSummary::merge(const QuantileSummary& other) {
  if (other.mode_ != mode_ || other.eps_ != eps_) {
    throw Error(ErrorCode::kModeMismatch,
                fmt::format("cannot merge {} summary (eps {}) into {} (eps {})",
                            summary_mode_name(other.mode_), other.eps_,
                            summary_mode_name(mode_), eps_));
  }
  if (other.count_ == 0) return;
  finalized_ = false;
  count_ += other.count_;
  if (mode_ == SummaryMode::kExact) {
    entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
    return;
  }
  error_weight_ += other.error_weight_;
  while (levels_.size() < other.levels_.size()) {
    levels_.emplace_back();
    compactions_.push_back(0);
  }
  for (std::size_t h = 0; h < other.levels_.size(); ++h) {
    levels_[h].insert(levels_[h].end(), other.levels_[h].begin(),
                      other.levels_[h].end());
  }
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    if (levels_[h].size() >= capacity_) compact_from(h);
  }
}

void QuantileSummary::finalize() {
  if (mode_ == SummaryMode::kExact) {
    std::sort(entries_.begin(), entries_.end());
  } else {
    std::vector<std::pair<double, std::uint64_t>> weighted;
    for (std::size_t h = 0; h < levels_.size(); ++h) {
      for (double v : levels_[h]) weighted.emplace_back(v, std::uint64_t{1} << h);
    }
    std::sort(weighted.begin(), weighted.end());
    view_values_.clear();
    view_cumulative_.clear();
    std::uint64_t running = 0;
    for (const auto& [value, weight] : weighted) {
      running += weight;
      if (!view_values_.empty() && view_values_.back() == value) {
        view_cumulative_.back() = running;
      } else {
        view_values_.push_back(value);
        view_cumulative_.push_back(running);
      }
    }
  }
  finalized_ = true;
}

void QuantileSummary::require_finalized() const {
  if (count_ == 0) throw Error(ErrorCode::kEmptySummary, "summary is empty");
  if (!finalized_) throw std::logic_error("quantile summary queried before finalize()");
}

std::uint64_t QuantileSummary::weight_at_most(double value) const {
  if (mode_ == SummaryMode::kExact) {
    auto it = std::upper_bound(
        entries_.begin(), entries_.end(), value,
        [](double v, const Entry& e) { return v < e.value; });
    return static_cast<std::uint64_t>(it - entries_.begin());
  }
  auto it = std::upper_bound(view_values_.begin(), view_values_.end(), value);
  if (it == view_values_.begin()) return 0;
  return view_cumulative_[static_cast<std::size_t>(it - view_values_.begin()) - 1];
}

double QuantileSummary::query_threshold(double p) const {
  if (!(p > 0.0 && p <= 100.0)) {
    throw Error(ErrorCode::kPercentileOutOfRange,
                fmt::format("percentile must lie in (0, 100], got {}", p));
  }
  require_finalized();
  const std::uint64_t k = nearest_rank(p, count_);
  if (mode_ == SummaryMode::kExact) return entries_[k - 1].value;
  auto it = std::lower_bound(view_cumulative_.begin(), view_cumulative_.end(), k);
  if (it == view_cumulative_.end()) return view_values_.back();
  return view_values_[static_cast<std::size_t>(it - view_cumulative_.begin())];
}

double QuantileSummary::percentile_rank(double value) const {
  require_finalized();
  return static_cast<double>(weight_at_most(value)) / static_cast<double>(count_);
}

double QuantileSummary::distinct_rank_fraction(double value,
                                               std::uint64_t tie_key) const {
  require_finalized();
  if (mode_ == SummaryMode::kSketch || tie_key == kNoTieKey) {
    return percentile_rank(value);
  }
  auto it = std::lower_bound(entries_.begin(), entries_.end(), Entry{value, tie_key});
  const auto before = static_cast<std::uint64_t>(it - entries_.begin());
  return static_cast<double>(std::min(before + 1, count_)) /
         static_cast<double>(count_);
}

double QuantileSummary::rank_error_bound() const {
  if (mode_ == SummaryMode::kExact || count_ == 0) return 0.0;
  return static_cast<double>(error_weight_) / static_cast<double>(count_);
}

std::size_t QuantileSummary::retained() const {
  if (mode_ == SummaryMode::kExact) return entries_.size();
  std::size_t total = 0;
  for (const auto& level : levels_) total += level.size();
  return total;
}

void QuantileSummary::serialize(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::uint8_t>(mode_));
  write_pod(out, count_);
  if (mode_ == SummaryMode::kExact) {
    for (const auto& e : entries_) {
      write_pod(out, e.value);
      write_pod(out, e.tie_key);
    }
    return;
  }
  write_pod(out, eps_);
  write_pod(out, error_weight_);
  write_pod(out, static_cast<std::uint32_t>(levels_.size()));
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    write_pod(out, compactions_[h]);
    write_pod(out, static_cast<std::uint64_t>(levels_[h].size()));
    for (double v : levels_[h]) write_pod(out, v);
  }
}

QuantileSummary QuantileSummary::deserialize(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw Error(ErrorCode::kFormat, "not a quantile summary (bad magic)");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kFormat,
                fmt::format("unsupported quantile summary version {}", version));
  }
  const auto mode_byte = read_pod<std::uint8_t>(in);
  if (mode_byte > 1) throw Error(ErrorCode::kFormat, "bad summary mode");
  const auto count = read_pod<std::uint64_t>(in);
  if (static_cast<SummaryMode>(mode_byte) == SummaryMode::kExact) {
    QuantileSummary summary = exact();
    summary.entries_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto value = read_pod<double>(in);
      const auto tie = read_pod<std::uint64_t>(in);
      summary.entries_.push_back({value, tie});
    }
    summary.count_ = count;
    summary.finalize();
    return summary;
  }
  const auto eps = read_pod<double>(in);
  QuantileSummary summary = sketch(eps);
  summary.count_ = count;
  summary.error_weight_ = read_pod<std::uint64_t>(in);
  const auto n_levels = read_pod<std::uint32_t>(in);
  if (n_levels == 0 || n_levels > 64) throw Error(ErrorCode::kFormat, "bad level count");
  summary.levels_.assign(n_levels, {});
  summary.compactions_.assign(n_levels, 0);
  std::uint64_t weight = 0;
  for (std::uint32_t h = 0; h < n_levels; ++h) {
    summary.compactions_[h] = read_pod<std::uint64_t>(in);
    const auto size = read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < size; ++i) {
      summary.levels_[h].push_back(read_pod<double>(in));
    }
    weight += size << h;
  }
  if (weight != count) {
    throw Error(ErrorCode::kFormat, "sketch weights do not add up to its count");
  }
  summary.finalize();
  return summary;
}

}  // namespace watchlabel
