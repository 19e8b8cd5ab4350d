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

// Watch-time distribution summaries. Exact mode keeps the full multiset;
// sketch mode keeps a mergeable stack of compactors whose rank error is
// certified by construction and tracked as data is inserted or merged.

#ifndef WATCHLABEL_QUANTILE_HPP_
#define WATCHLABEL_QUANTILE_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string_view>
#include <vector>

namespace watchlabel {

enum class SummaryMode : std::uint8_t { kExact = 0, kSketch = 1 };

std::string_view summary_mode_name(SummaryMode mode);
SummaryMode parse_summary_mode(std::string_view name);

inline constexpr std::uint64_t kNoTieKey =
    std::numeric_limits<std::uint64_t>::max();
inline constexpr double kDefaultSketchEps = 0.005;

class QuantileSummary {
 public:
  static QuantileSummary exact();
  static QuantileSummary sketch(double eps = kDefaultSketchEps);
  static QuantileSummary make(SummaryMode mode, double eps = kDefaultSketchEps);

  SummaryMode mode() const { return mode_; }
  std::uint64_t count() const { return count_; }
  bool empty() const { return count_ == 0; }
  double eps() const { return eps_; }
  bool finalized() const { return finalized_; }

  // Adds one watch time. `tie_key` orders equal values for distinct ranks
  // and is only retained in exact mode.
  void insert(double value, std::uint64_t tie_key = kNoTieKey);
  void merge(const QuantileSummary& other);

  // Must be called after the last insert/merge and before any query. A
  // finalized summary is read-only and safe to share between threads.
  void finalize();

  // Nearest-rank percentile: the smallest stored value w such that the
  // fraction of values <= w is at least p/100. p must lie in (0, 100].
  double query_threshold(double p) const;

  // Fraction of values <= value.
  double percentile_rank(double value) const;

  // Rank fraction of the record (value, tie_key) when equal values are
  // ordered by tie key: (#entries strictly before it + 1) / count. Sketch
  // mode cannot split ties and falls back to percentile_rank.
  double distinct_rank_fraction(double value, std::uint64_t tie_key) const;

  // Certified upper bound on |estimated - exact| rank fraction for any
  // query. Always 0 in exact mode; at most eps() in sketch mode.
  double rank_error_bound() const;

  // Number of retained items (exact entries or sketch samples).
  std::size_t retained() const;

  // Versioned binary format: "WLQS", version, mode, count, payload.
  void serialize(std::ostream& out) const;
  static QuantileSummary deserialize(std::istream& in);

 private:
  struct Entry {
    double value;
    std::uint64_t tie_key;
    friend bool operator<(const Entry& a, const Entry& b) {
      return a.value < b.value || (a.value == b.value && a.tie_key < b.tie_key);
    }
  };

  QuantileSummary(SummaryMode mode, double eps);

  void require_finalized() const;
  void compact_from(std::size_t level);
  std::uint64_t weight_at_most(double value) const;

  SummaryMode mode_;
  double eps_ = 0.0;
  std::uint64_t count_ = 0;
  bool finalized_ = true;

  // Exact mode.
  std::vector<Entry> entries_;

  // Sketch mode. Items in levels_[h] carry weight 2^h.
  std::size_t capacity_ = 0;
  std::vector<std::vector<double>> levels_;
  std::vector<std::uint64_t> compactions_;
  std::uint64_t error_weight_ = 0;
  // Finalized sketch view: sorted samples with cumulative weights.
  std::vector<double> view_values_;
  std::vector<std::uint64_t> view_cumulative_;
};

}  // namespace watchlabel

#endif  // WATCHLABEL_QUANTILE_HPP_
