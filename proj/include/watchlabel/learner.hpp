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

// Desk-scale multi-gate mixture-of-experts model.
//
// Input x is the concatenation of user, video and duration-bin embeddings.
// Every expert is affine -> softplus -> affine with hidden width h; every
// task mixes the experts with its own softmax gate over x and reads the
// mixture out with an affine head (one output, or N-1 for ordinal tasks).
// All parameters live in one flat vector so that optimizers, finite
// differences and checkpoints can treat them uniformly.

#ifndef WATCHLABEL_LEARNER_HPP_
#define WATCHLABEL_LEARNER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "watchlabel/core.hpp"

namespace watchlabel {

enum class LossKind { kSquaredError, kLogistic, kOrdinalCumulative, kWeightedLogistic };

std::string_view loss_kind_name(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

// Squared-error target holding raw seconds rather than a label column.
inline constexpr std::string_view kWatchTimeColumn = "watch_time_s";

struct TaskConfig {
  std::string name;
  std::string target;  // label column
  LossKind loss = LossKind::kSquaredError;
  double weight = 1.0;
  // Ordinal tasks: number of groups N; the target column holds group
  // indices 1..N and the head has N-1 outputs.
  int ordinal_groups = 0;
  // Squared error fits target / target_scale.
  double target_scale = 1.0;

  std::size_t outputs() const {
    return loss == LossKind::kOrdinalCumulative
               ? static_cast<std::size_t>(ordinal_groups - 1)
               : 1;
  }
  void validate() const;
};

struct ArchConfig {
  std::size_t n_users = 0;
  std::size_t n_videos = 0;
  std::size_t n_bins = 0;
  std::size_t embed_dim = 8;
  std::size_t experts = 2;
  std::size_t hidden = 16;
  std::vector<std::size_t> task_outputs;

  std::size_t input_dim() const { return 3 * embed_dim; }
  std::size_t tasks() const { return task_outputs.size(); }
  void validate() const;
};

// Offsets of every parameter block inside the flat vector.
struct ParamLayout {
  std::size_t user_table = 0, video_table = 0, bin_table = 0;
  std::size_t dense_begin = 0;  // first non-embedding parameter
  std::vector<std::size_t> expert_w1, expert_b1, expert_w2, expert_b2;
  std::vector<std::size_t> gate_w, gate_b;
  std::vector<std::size_t> head_w, head_b;
  std::size_t total = 0;

  static ParamLayout of(const ArchConfig& arch);
};

struct ModelParams {
  ArchConfig arch;
  ParamLayout layout;
  std::vector<double> values;

  std::size_t parameter_count() const { return values.size(); }
};

ModelParams init_model(const ArchConfig& arch, std::uint64_t seed);
ModelParams zero_model(const ArchConfig& arch);

// Embedding rows; ids unseen at training time use the fallback row at
// index n_users / n_videos / n_bins.
struct Features {
  std::size_t user = 0;
  std::size_t video = 0;
  std::size_t bin = 0;
};

struct ForwardResult {
  // Task outputs concatenated in task order.
  std::vector<double> scores;
  // gates[t * experts + e]
  std::vector<double> gates;
  std::vector<std::size_t> task_offset;

  double score(std::size_t task) const { return scores[task_offset[task]]; }
  std::span<const double> outputs(std::size_t task) const;
  // sigmoid(score) for logistic tasks.
  double probability(std::size_t task) const;
};

ForwardResult forward(const ModelParams& model, const Features& features);

// Training rows: features, raw watch time and named target columns.
struct TrainingData {
  std::vector<Features> features;
  std::vector<double> watch_time_s;
  std::vector<double> duration_s;
  std::map<std::string, std::vector<double>, std::less<>> columns;

  std::size_t size() const { return features.size(); }
  // Target values for `task`; throws kMissingLabelColumn if absent or if any
  // selected row has no value (NaN).
  std::span<const double> target(const TaskConfig& task) const;
};

// Sum over tasks of weight * mean loss on `rows`. When `grad` is non-empty
// it receives the gradient of that total (it is overwritten).
double total_loss(const ModelParams& model, const TrainingData& data,
                  std::span<const std::size_t> rows, std::span<const TaskConfig> tasks,
                  std::span<double> grad = {},
                  std::vector<double>* per_task_loss = nullptr);

struct OptimizerConfig {
  double lr_embed = 0.05;  // user and video tables
  // Everything else, the duration-bin table included.
  double lr_dense = 0.005;
  std::size_t batch_size = 256;
  int epochs = 10;
  std::uint64_t seed = 1;
  // Gradient shards per batch, accumulated in fixed order. 1 = serial.
  int threads = 1;
  void validate() const;
};

struct LossTracePoint {
  int epoch = 0;
  std::string task;  // task name, or "total"
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossTracePoint> trace;
};

TrainResult train(ModelParams& model, const TrainingData& data,
                  std::span<const std::size_t> train_rows,
                  std::span<const TaskConfig> tasks, const OptimizerConfig& optimizer);

std::string loss_trace_csv(const TrainResult& result);

// Test hook run on the analytic gradient before comparison.
using GradientMutator = std::function<void(std::span<double>)>;

// Max relative error |g_a - g_n| / max(|g_a|, |g_n|, 1e-8) between analytic
// and central finite-difference gradients (step 1e-5) over `n_params`
// parameters sampled from the dense blocks and the embedding rows the batch
// touches.
double gradient_check(const ModelParams& model, const TrainingData& data,
                      std::span<const std::size_t> rows,
                      std::span<const TaskConfig> tasks, std::size_t n_params = 100,
                      std::uint64_t seed = 1, const GradientMutator& mutate = {});

// How a task's score maps back to seconds.
enum class Readout { kSeconds, kOdds, kQuantile, kPlayingRate, kOrdinal, kProbability };
Readout readout_of(const TaskConfig& task);

// Representative watch time per (stratum, label group): the nearest-rank
// median of the training watch times that fall in the group.
class WprInverse {
 public:
  WprInverse() = default;
  // `levels` are the strictly increasing label values of the groups.
  // `labels` hold training label values (each equal to one of the levels).
  static WprInverse build(std::vector<double> levels, std::span<const double> labels,
                          std::span<const double> watch_time_s,
                          std::span<const std::size_t> strata, std::size_t n_strata);

  bool empty() const { return levels_.empty(); }
  std::size_t groups() const { return levels_.size(); }
  std::span<const double> levels() const { return levels_; }
  // Group whose interval (level[g-1], level[g]] contains the clamped score.
  std::size_t group_of(double score) const;
  // Group whose level is closest to a stored (possibly rounded) label.
  std::size_t nearest_group(double label) const;
  // Representative of the group; empty cells borrow the nearest non-empty
  // group of the same stratum (the lower one on ties).
  double representative(std::size_t group, std::size_t stratum) const;

 private:
  std::vector<double> levels_;
  std::size_t strata_ = 0;
  std::vector<std::optional<double>> cells_;  // stratum * groups + group
};

double predict_watch_time(const ModelParams& model, const Features& features,
                          std::size_t task_index, const TaskConfig& task,
                          const WprInverse* inverse, std::size_t stratum,
                          double duration_s);

// Serving score per task: probabilities for logistic tasks, the expected
// exceeded thresholds / (N-1) for ordinal ones, the raw score otherwise.
double ranking_score(const ForwardResult& result, std::size_t task_index,
                     const TaskConfig& task);

// Convex combination of ranking scores; empty weights mean equal weights.
double fused_score(const ForwardResult& result, std::span<const TaskConfig> tasks,
                   std::span<const double> weights = {});

// Trained model plus everything needed to score new rows.
struct Checkpoint {
  ModelParams model;
  std::vector<TaskConfig> tasks;
  std::vector<std::string> user_vocab;
  std::vector<std::string> video_vocab;
  DurationBins bins;
  std::unordered_map<std::string, std::size_t> user_index;
  std::unordered_map<std::string, std::size_t> video_index;

  // Fills user_index / video_index from the vocabularies.
  void build_index();
  Features features_of(const Interaction& record) const;
  void save(std::ostream& out) const;
  static Checkpoint load(std::istream& in);
};

}  // namespace watchlabel

#endif  // WATCHLABEL_LEARNER_HPP_
