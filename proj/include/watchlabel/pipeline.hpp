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

// End-to-end orchestration shared by the CLI and the acceptance suite:
// resolved configuration, the deterministic train/eval split, training and
// evaluation of one task list, and the ablation matrix.

#ifndef WATCHLABEL_PIPELINE_HPP_
#define WATCHLABEL_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "watchlabel/core.hpp"
#include "watchlabel/datagen.hpp"
#include "watchlabel/io.hpp"
#include "watchlabel/labeling.hpp"
#include "watchlabel/learner.hpp"
#include "watchlabel/metrics.hpp"
#include "watchlabel/quantile.hpp"

namespace watchlabel {

// Target computed from the records at train time: 1-based group of each
// record in a global equal-frequency partition with `ordinal_groups` groups.
inline constexpr std::string_view kOrdinalGroupColumn = "or_group";

struct PipelineConfig {
  std::string output_dir = "out";
  // Empty paths resolve inside output_dir.
  std::string input, truth, labeled, model;

  std::uint64_t seed = 42;
  int threads = 1;

  SyntheticConfig gen;  // gen.seed is ignored in favour of `seed`

  PartitionKind partition_kind = PartitionKind::kPowerDecay;
  int partition_groups = 300;
  PartitionParams partition;

  int max_bins = 30;
  std::size_t min_bin_size = 20;
  bool debias = true;  // false forces a single duration bin
  std::size_t min_group_size = 10;
  std::string labels = "default";
  SummaryMode summary_mode = SummaryMode::kExact;
  double summary_eps = kDefaultSketchEps;
  TieMode tie_mode = TieMode::kDistinctRank;
  int ef_groups = 300;
  int ew_groups = 300;
  double ew_cap_percentile = 99.0;

  std::size_t embed_dim = 8;
  std::size_t experts = 2;
  std::size_t hidden = 16;
  // Comma separated `target:loss[:weight]` items.
  std::string tasks = "wpr_d:squared_error,ev_d:logistic,lv_d:logistic";
  int ordinal_groups = 20;
  OptimizerConfig optimizer;
  std::optional<std::uint64_t> train_seed;  // defaults to `seed`

  double train_fraction = 0.9;
  std::uint64_t split_seed = 7;

  int ablate_seeds = 1;
  std::string ablate_variants = "all";

  // Applies one `key = value` setting; unknown keys are kConfigInvalid.
  void set(std::string_view key, std::string_view value);
  // Applies every setting of a flat config file (`#` starts a comment).
  void load_file(const std::filesystem::path& path);
  void load_text(std::string_view text);
  // Every key with its resolved value, one `key = value` per line.
  std::string resolved() const;
  void validate() const;

  std::filesystem::path input_path() const;
  std::filesystem::path truth_path() const;
  std::filesystem::path labeled_path() const;
  std::filesystem::path model_path() const;

  SyntheticConfig synthetic() const;
  LabelConfig label_config() const;
  PartitionScheme partition_scheme() const;
  std::vector<TaskConfig> task_configs() const;
  std::uint64_t effective_train_seed() const { return train_seed.value_or(seed); }
};

std::vector<std::string> config_keys();

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

// Record i goes to the training side when mix64(row_index ^ seed) falls
// below train_fraction of the 64-bit range.
Split split_rows(std::span<const Interaction> records, double train_fraction,
                 std::uint64_t seed);

LabelOutput label_records(std::span<const Interaction> records,
                          const PipelineConfig& config);

// Adds the columns tasks may target beyond the label file: raw watch time
// and the ordinal group index.
void add_derived_columns(LabeledData& data, const PipelineConfig& config);

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainResult result;
  Split split;
};

TrainOutcome train_pipeline(const LabeledData& data, const PipelineConfig& config);

// Back-conversion map for a quantile or ordinal task, built on the
// training rows; nullopt for tasks that need none.
std::optional<WprInverse> build_inverse(const TaskConfig& task, const LabeledData& data,
                                        const Checkpoint& checkpoint,
                                        std::span<const std::size_t> train_rows,
                                        const PipelineConfig& config);
bool inverse_is_per_bin(const TaskConfig& task);

// AUC/GAUC against the global EV (headline) and LV labels from the fused
// score, MAE/RMSE/MAPE from the first task with a seconds readout, and
// concordance with the ground truth when `truth` is given.
EvalReport evaluate_pipeline(const Checkpoint& checkpoint, const LabeledData& data,
                             const PipelineConfig& config,
                             const SyntheticTruth* truth = nullptr);

struct AblationVariant {
  std::string name;
  std::string tasks;
};

const std::vector<AblationVariant>& ablation_variants();

struct AblationRow {
  std::string variant;
  // Means over training seeds.
  double gauc_truth = 0.0, auc_ev = 0.0, gauc_ev = 0.0;
  double mae = 0.0, rmse = 0.0, mape = 0.0;
  std::vector<double> gauc_truth_by_seed;

  double gauc_truth_spread() const;
};

std::vector<AblationRow> run_ablation(std::span<const Interaction> records,
                                      const SyntheticTruth& truth,
                                      const PipelineConfig& config);
std::string ablation_csv(std::span<const AblationRow> rows);
std::string ablation_table(std::span<const AblationRow> rows);

}  // namespace watchlabel

#endif  // WATCHLABEL_PIPELINE_HPP_
