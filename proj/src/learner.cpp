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

#include "watchlabel/learner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include <fmt/format.h>

#include "watchlabel/error.hpp"
#include "watchlabel/parallel.hpp"
#include "watchlabel/random.hpp"

namespace watchlabel {
namespace {

constexpr std::array<char, 4> kMagic = {'W', 'L', 'M', 'D'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr double kFiniteDifferenceStep = 1e-5;
constexpr double kBoundarySlack = 1e-12;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Binary cross-entropy of sigmoid(s) against y in {0, 1}.
double logistic_loss(double s, double y) { return softplus(s) - y * s; }

struct Activations {
  std::vector<double> x, pre, hid, expert, gate, mix, out;
};

struct Normalizers {
  double batch = 1.0;
  std::vector<double> weight_sum;  // per task, weighted logistic only
};

std::size_t user_row(const ModelParams& m, const Features& f) {
  return std::min(f.user, m.arch.n_users);
}
std::size_t video_row(const ModelParams& m, const Features& f) {
  return std::min(f.video, m.arch.n_videos);
}
std::size_t bin_row(const ModelParams& m, const Features& f) {
  return std::min(f.bin, m.arch.n_bins);
}

void run_forward(const ModelParams& model, const Features& f, Activations& a) {
  const auto& arch = model.arch;
  const auto& L = model.layout;
  const double* p = model.values.data();
  const std::size_t de = arch.embed_dim, d = arch.input_dim(), h = arch.hidden,
                    experts = arch.experts, tasks = arch.tasks();
  a.x.resize(d);
  std::copy_n(p + L.user_table + user_row(model, f) * de, de, a.x.begin());
  std::copy_n(p + L.video_table + video_row(model, f) * de, de, a.x.begin() + de);
  std::copy_n(p + L.bin_table + bin_row(model, f) * de, de, a.x.begin() + 2 * de);

  a.pre.resize(experts * h);
  a.hid.resize(experts * h);
  a.expert.resize(experts * h);
  for (std::size_t e = 0; e < experts; ++e) {
    const double* w1 = p + L.expert_w1[e];
    const double* b1 = p + L.expert_b1[e];
    for (std::size_t i = 0; i < h; ++i) {
      double acc = b1[i];
      for (std::size_t j = 0; j < d; ++j) acc += w1[i * d + j] * a.x[j];
      a.pre[e * h + i] = acc;
      a.hid[e * h + i] = softplus(acc);
    }
    const double* w2 = p + L.expert_w2[e];
    const double* b2 = p + L.expert_b2[e];
    for (std::size_t i = 0; i < h; ++i) {
      double acc = b2[i];
      for (std::size_t j = 0; j < h; ++j) acc += w2[i * h + j] * a.hid[e * h + j];
      a.expert[e * h + i] = acc;
    }
  }

  a.gate.resize(tasks * experts);
  a.mix.assign(tasks * h, 0.0);
  std::size_t total_out = 0;
  for (auto o : arch.task_outputs) total_out += o;
  a.out.resize(total_out);
  std::size_t out_offset = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    const double* gw = p + L.gate_w[t];
    const double* gb = p + L.gate_b[t];
    double* gate = a.gate.data() + t * experts;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < experts; ++e) {
      double acc = gb[e];
      for (std::size_t j = 0; j < d; ++j) acc += gw[e * d + j] * a.x[j];
      gate[e] = acc;
      max_logit = std::max(max_logit, acc);
    }
    double norm = 0.0;
    for (std::size_t e = 0; e < experts; ++e) {
      gate[e] = std::exp(gate[e] - max_logit);
      norm += gate[e];
    }
    for (std::size_t e = 0; e < experts; ++e) gate[e] /= norm;

    double* mix = a.mix.data() + t * h;
    for (std::size_t e = 0; e < experts; ++e) {
      for (std::size_t i = 0; i < h; ++i) mix[i] += gate[e] * a.expert[e * h + i];
    }
    const double* hw = p + L.head_w[t];
    const double* hb = p + L.head_b[t];
    for (std::size_t k = 0; k < arch.task_outputs[t]; ++k) {
      double acc = hb[k];
      for (std::size_t i = 0; i < h; ++i) acc += hw[k * h + i] * mix[i];
      a.out[out_offset + k] = acc;
    }
    out_offset += arch.task_outputs[t];
  }
}

// Adds d(loss)/d(params) to grad given d(loss)/d(outputs).
void run_backward(const ModelParams& model, const Features& f, const Activations& a,
                  std::span<const double> d_out, std::span<double> grad) {
  const auto& arch = model.arch;
  const auto& L = model.layout;
  const double* p = model.values.data();
  double* g = grad.data();
  const std::size_t de = arch.embed_dim, d = arch.input_dim(), h = arch.hidden,
                    experts = arch.experts, tasks = arch.tasks();

  std::vector<double> d_x(d, 0.0);
  std::vector<double> d_expert(experts * h, 0.0);
  std::vector<double> d_mix(h);
  std::vector<double> d_gate(experts);
  std::size_t out_offset = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    const double* hw = p + L.head_w[t];
    double* g_hw = g + L.head_w[t];
    double* g_hb = g + L.head_b[t];
    const double* mix = a.mix.data() + t * h;
    std::fill(d_mix.begin(), d_mix.end(), 0.0);
    for (std::size_t k = 0; k < arch.task_outputs[t]; ++k) {
      const double dk = d_out[out_offset + k];
      if (dk == 0.0) continue;
      g_hb[k] += dk;
      for (std::size_t i = 0; i < h; ++i) {
        g_hw[k * h + i] += dk * mix[i];
        d_mix[i] += dk * hw[k * h + i];
      }
    }
    out_offset += arch.task_outputs[t];

    const double* gate = a.gate.data() + t * experts;
    double weighted = 0.0;
    for (std::size_t e = 0; e < experts; ++e) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        acc += d_mix[i] * a.expert[e * h + i];
        d_expert[e * h + i] += gate[e] * d_mix[i];
      }
      d_gate[e] = acc;
      weighted += gate[e] * acc;
    }
    const double* gw = p + L.gate_w[t];
    double* g_gw = g + L.gate_w[t];
    double* g_gb = g + L.gate_b[t];
    for (std::size_t e = 0; e < experts; ++e) {
      const double d_logit = gate[e] * (d_gate[e] - weighted);
      if (d_logit == 0.0) continue;
      g_gb[e] += d_logit;
      for (std::size_t j = 0; j < d; ++j) {
        g_gw[e * d + j] += d_logit * a.x[j];
        d_x[j] += d_logit * gw[e * d + j];
      }
    }
  }

  std::vector<double> d_pre(h);
  for (std::size_t e = 0; e < experts; ++e) {
    const double* w2 = p + L.expert_w2[e];
    double* g_w2 = g + L.expert_w2[e];
    double* g_b2 = g + L.expert_b2[e];
    std::fill(d_pre.begin(), d_pre.end(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const double di = d_expert[e * h + i];
      if (di == 0.0) continue;
      g_b2[i] += di;
      for (std::size_t j = 0; j < h; ++j) {
        g_w2[i * h + j] += di * a.hid[e * h + j];
        d_pre[j] += di * w2[i * h + j];
      }
    }
    const double* w1 = p + L.expert_w1[e];
    double* g_w1 = g + L.expert_w1[e];
    double* g_b1 = g + L.expert_b1[e];
    for (std::size_t i = 0; i < h; ++i) {
      const double di = d_pre[i] * sigmoid(a.pre[e * h + i]);
      if (di == 0.0) continue;
      g_b1[i] += di;
      for (std::size_t j = 0; j < d; ++j) {
        g_w1[i * d + j] += di * a.x[j];
        d_x[j] += di * w1[i * d + j];
      }
    }
  }

  double* g_user = g + L.user_table + user_row(model, f) * de;
  double* g_video = g + L.video_table + video_row(model, f) * de;
  double* g_bin = g + L.bin_table + bin_row(model, f) * de;
  for (std::size_t j = 0; j < de; ++j) {
    g_user[j] += d_x[j];
    g_video[j] += d_x[de + j];
    g_bin[j] += d_x[2 * de + j];
  }
}

double example_weight(const TaskConfig& task, double target, double watch_time_s) {
  if (task.loss != LossKind::kWeightedLogistic) return 1.0;
  return target > 0.5 ? watch_time_s : 1.0;
}

Normalizers normalizers_for(const TrainingData& data, std::span<const std::size_t> rows,
                            std::span<const TaskConfig> tasks,
                            const std::vector<std::span<const double>>& targets) {
  Normalizers n;
  n.batch = static_cast<double>(rows.size());
  n.weight_sum.assign(tasks.size(), 0.0);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].loss != LossKind::kWeightedLogistic) continue;
    for (std::size_t r : rows) {
      n.weight_sum[t] += example_weight(tasks[t], targets[t][r], data.watch_time_s[r]);
    }
  }
  return n;
}

// Adds the weighted losses (and gradients, if grad is non-empty) of `rows`.
void accumulate(const ModelParams& model, const TrainingData& data,
                std::span<const std::size_t> rows, std::span<const TaskConfig> tasks,
                const std::vector<std::span<const double>>& targets,
                const Normalizers& norm, std::span<double> grad,
                std::vector<double>& task_loss) {
  Activations a;
  std::vector<double> d_out;
  for (std::size_t r : rows) {
    run_forward(model, data.features[r], a);
    d_out.assign(a.out.size(), 0.0);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const TaskConfig& task = tasks[t];
      const double y = targets[t][r];
      switch (task.loss) {
        case LossKind::kSquaredError: {
          const double diff = a.out[offset] - y / task.target_scale;
          task_loss[t] += diff * diff / norm.batch;
          d_out[offset] = task.weight * 2.0 * diff / norm.batch;
          break;
        }
        case LossKind::kLogistic: {
          const double s = a.out[offset];
          task_loss[t] += logistic_loss(s, y) / norm.batch;
          d_out[offset] = task.weight * (sigmoid(s) - y) / norm.batch;
          break;
        }
        case LossKind::kWeightedLogistic: {
          const double s = a.out[offset];
          const double w = example_weight(task, y, data.watch_time_s[r]);
          const double denom = norm.weight_sum[t] > 0.0 ? norm.weight_sum[t] : 1.0;
          task_loss[t] += w * logistic_loss(s, y) / denom;
          d_out[offset] = task.weight * w * (sigmoid(s) - y) / denom;
          break;
        }
        case LossKind::kOrdinalCumulative: {
          for (std::size_t k = 0; k < task.outputs(); ++k) {
            const double s = a.out[offset + k];
            const double exceeds = y > static_cast<double>(k + 1) + 0.5 ? 1.0 : 0.0;
            task_loss[t] += logistic_loss(s, exceeds) / norm.batch;
            d_out[offset + k] = task.weight * (sigmoid(s) - exceeds) / norm.batch;
          }
          break;
        }
      }
      offset += task.outputs();
    }
    if (!grad.empty()) run_backward(model, data.features[r], a, d_out, grad);
  }
}

std::vector<std::span<const double>> targets_of(const TrainingData& data,
                                                std::span<const TaskConfig> tasks) {
  std::vector<std::span<const double>> out;
  for (const auto& task : tasks) out.push_back(data.target(task));
  return out;
}

void check_tasks_match(const ModelParams& model, std::span<const TaskConfig> tasks) {
  if (tasks.size() != model.arch.tasks()) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("model has {} task heads but {} tasks were given",
                            model.arch.tasks(), tasks.size()));
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].outputs() != model.arch.task_outputs[t]) {
      throw Error(ErrorCode::kConfigInvalid,
                  fmt::format("task '{}' needs {} outputs, head has {}", tasks[t].name,
                              tasks[t].outputs(), model.arch.task_outputs[t]));
    }
  }
}

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::kFormat, "truncated model checkpoint");
  return v;
}
std::string read_str(std::istream& in) {
  const auto n = read_raw<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error(ErrorCode::kFormat, "truncated model checkpoint");
  return s;
}

}  // namespace

std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kSquaredError: return "squared_error";
    case LossKind::kLogistic: return "logistic";
    case LossKind::kOrdinalCumulative: return "ordinal_cumulative";
    case LossKind::kWeightedLogistic: return "weighted_logistic";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (auto kind : {LossKind::kSquaredError, LossKind::kLogistic,
                    LossKind::kOrdinalCumulative, LossKind::kWeightedLogistic}) {
    if (loss_kind_name(kind) == name) return kind;
  }
  throw Error(ErrorCode::kConfigInvalid, fmt::format("unknown loss '{}'", name));
}

void TaskConfig::validate() const {
  if (name.empty() || target.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "task needs a name and a target column");
  }
  if (!(weight > 0.0)) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("task '{}' loss weight must be > 0", name));
  }
  if (loss == LossKind::kOrdinalCumulative && ordinal_groups < 2) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("ordinal task '{}' needs >= 2 groups", name));
  }
  if (!(target_scale > 0.0)) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("task '{}' target scale must be > 0", name));
  }
}

void ArchConfig::validate() const {
  if (embed_dim < 1 || experts < 1 || hidden < 1) {
    throw Error(ErrorCode::kConfigInvalid,
                "embed_dim, experts and hidden must all be >= 1");
  }
  if (task_outputs.empty()) throw Error(ErrorCode::kConfigInvalid, "model needs a task");
  for (auto o : task_outputs) {
    if (o < 1) throw Error(ErrorCode::kConfigInvalid, "task heads need >= 1 output");
  }
}

ParamLayout ParamLayout::of(const ArchConfig& arch) {
  ParamLayout L;
  std::size_t at = 0;
  auto take = [&at](std::size_t n) {
    const std::size_t start = at;
    at += n;
    return start;
  };
  const std::size_t de = arch.embed_dim, d = arch.input_dim(), h = arch.hidden;
  L.user_table = take((arch.n_users + 1) * de);
  L.video_table = take((arch.n_videos + 1) * de);
  L.bin_table = take((arch.n_bins + 1) * de);
  L.dense_begin = at;
  for (std::size_t e = 0; e < arch.experts; ++e) {
    L.expert_w1.push_back(take(h * d));
    L.expert_b1.push_back(take(h));
    L.expert_w2.push_back(take(h * h));
    L.expert_b2.push_back(take(h));
  }
  for (std::size_t t = 0; t < arch.tasks(); ++t) {
    L.gate_w.push_back(take(arch.experts * d));
    L.gate_b.push_back(take(arch.experts));
  }
  for (std::size_t t = 0; t < arch.tasks(); ++t) {
    L.head_w.push_back(take(arch.task_outputs[t] * h));
    L.head_b.push_back(take(arch.task_outputs[t]));
  }
  L.total = at;
  return L;
}

ModelParams zero_model(const ArchConfig& arch) {
  arch.validate();
  ModelParams m;
  m.arch = arch;
  m.layout = ParamLayout::of(arch);
  m.values.assign(m.layout.total, 0.0);
  return m;
}

ModelParams init_model(const ArchConfig& arch, std::uint64_t seed) {
  ModelParams m = zero_model(arch);
  Rng rng(seed);
  auto& v = m.values;
  const auto& L = m.layout;
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) v[offset + i] = rng.uniform(-limit, limit);
  };
  const std::size_t d = arch.input_dim(), h = arch.hidden;
  // An embedding row is a linear layer over a one-hot input: fan-in 1.
  fill(L.user_table, L.dense_begin, 1);
  for (std::size_t e = 0; e < arch.experts; ++e) {
    fill(L.expert_w1[e], h * d, d);
    fill(L.expert_w2[e], h * h, h);
  }
  for (std::size_t t = 0; t < arch.tasks(); ++t) {
    fill(L.gate_w[t], arch.experts * d, d);
    fill(L.head_w[t], arch.task_outputs[t] * h, h);
  }
  return m;
}

std::span<const double> ForwardResult::outputs(std::size_t task) const {
  const std::size_t end =
      task + 1 < task_offset.size() ? task_offset[task + 1] : scores.size();
  return std::span<const double>(scores).subspan(task_offset[task],
                                                 end - task_offset[task]);
}

double ForwardResult::probability(std::size_t task) const { return sigmoid(score(task)); }

ForwardResult forward(const ModelParams& model, const Features& features) {
  Activations a;
  run_forward(model, features, a);
  ForwardResult out;
  out.scores = std::move(a.out);
  out.gates = std::move(a.gate);
  std::size_t offset = 0;
  for (auto o : model.arch.task_outputs) {
    out.task_offset.push_back(offset);
    offset += o;
  }
  return out;
}

std::span<const double> TrainingData::target(const TaskConfig& task) const {
  auto it = columns.find(task.target);
  if (it == columns.end()) {
    throw Error(ErrorCode::kMissingLabelColumn,
                fmt::format("task '{}' needs label column '{}'", task.name, task.target));
  }
  if (it->second.size() != size()) {
    throw Error(ErrorCode::kMissingLabelColumn,
                fmt::format("label column '{}' has {} values for {} rows", task.target,
                            it->second.size(), size()));
  }
  return it->second;
}

double total_loss(const ModelParams& model, const TrainingData& data,
                  std::span<const std::size_t> rows, std::span<const TaskConfig> tasks,
                  std::span<double> grad, std::vector<double>* per_task_loss) {
  check_tasks_match(model, tasks);
  const auto targets = targets_of(data, tasks);
  const Normalizers norm = normalizers_for(data, rows, tasks, targets);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> task_loss(tasks.size(), 0.0);
  accumulate(model, data, rows, tasks, targets, norm, grad, task_loss);
  double total = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) total += tasks[t].weight * task_loss[t];
  if (per_task_loss != nullptr) *per_task_loss = std::move(task_loss);
  return total;
}

void OptimizerConfig::validate() const {
  if (!(lr_embed >= 0.0) || !(lr_dense >= 0.0) || batch_size < 1 || epochs < 0 ||
      threads < 1) {
    throw Error(ErrorCode::kConfigInvalid, "invalid optimizer configuration");
  }
}

TrainResult train(ModelParams& model, const TrainingData& data,
                  std::span<const std::size_t> train_rows,
                  std::span<const TaskConfig> tasks, const OptimizerConfig& optimizer) {
  optimizer.validate();
  check_tasks_match(model, tasks);
  for (const auto& task : tasks) task.validate();
  if (train_rows.empty()) throw Error(ErrorCode::kEmptyDataset, "no training rows");
  const auto targets = targets_of(data, tasks);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t r : train_rows) {
      if (std::isnan(targets[t][r])) {
        throw Error(ErrorCode::kMissingLabelColumn,
                    fmt::format("label '{}' is absent for training row {}",
                                tasks[t].target, r));
      }
    }
  }

  std::vector<std::size_t> order(train_rows.begin(), train_rows.end());
  Rng rng(mix64(optimizer.seed ^ 0x5eedULL));
  const std::size_t shards = static_cast<std::size_t>(optimizer.threads);
  std::vector<std::vector<double>> shard_grad(shards,
                                              std::vector<double>(model.values.size()));
  std::vector<std::vector<double>> shard_loss(shards);
  std::vector<double>& grad = shard_grad[0];
  // Every batch touches the B+1 duration-bin rows, so they train at the
  // dense rate; only the sparse user and video tables use lr_embed.
  const std::size_t sparse_end = model.layout.bin_table;

  TrainResult result;
  for (int epoch = 1; epoch <= optimizer.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::vector<double> epoch_loss(tasks.size(), 0.0);
    for (std::size_t begin = 0; begin < order.size(); begin += optimizer.batch_size) {
      const std::size_t end = std::min(order.size(), begin + optimizer.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const Normalizers norm = normalizers_for(data, batch, tasks, targets);

      const std::size_t per_shard = (batch.size() + shards - 1) / shards;
      parallel_for(shards, optimizer.threads, [&](std::size_t s) {
        std::fill(shard_grad[s].begin(), shard_grad[s].end(), 0.0);
        shard_loss[s].assign(tasks.size(), 0.0);
        const std::size_t lo = std::min(batch.size(), s * per_shard);
        const std::size_t hi = std::min(batch.size(), lo + per_shard);
        accumulate(model, data, batch.subspan(lo, hi - lo), tasks, targets, norm,
                   shard_grad[s], shard_loss[s]);
      });
      for (std::size_t s = 1; s < shards; ++s) {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += shard_grad[s][i];
        for (std::size_t t = 0; t < tasks.size(); ++t) shard_loss[0][t] += shard_loss[s][t];
      }
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (!std::isfinite(shard_loss[0][t])) {
          throw Error(ErrorCode::kNonFiniteLoss,
                      fmt::format("task '{}' loss became {} in epoch {} at batch "
                                  "starting {}",
                                  tasks[t].name, shard_loss[0][t], epoch, begin));
        }
        epoch_loss[t] += shard_loss[0][t] * static_cast<double>(batch.size());
      }
      for (std::size_t i = 0; i < sparse_end; ++i) {
        model.values[i] -= optimizer.lr_embed * grad[i];
      }
      for (std::size_t i = sparse_end; i < grad.size(); ++i) {
        model.values[i] -= optimizer.lr_dense * grad[i];
      }
    }
    double total = 0.0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const double mean = epoch_loss[t] / static_cast<double>(order.size());
      result.trace.push_back({epoch, tasks[t].name, mean});
      total += tasks[t].weight * mean;
    }
    result.trace.push_back({epoch, "total", total});
  }
  return result;
}

std::string loss_trace_csv(const TrainResult& result) {
  std::string out = "epoch,task,loss\n";
  for (const auto& point : result.trace) {
    out += fmt::format("{},{},{:.9f}\n", point.epoch, point.task, point.loss);
  }
  return out;
}

double gradient_check(const ModelParams& model, const TrainingData& data,
                      std::span<const std::size_t> rows, std::span<const TaskConfig> tasks,
                      std::size_t n_params, std::uint64_t seed,
                      const GradientMutator& mutate) {
  std::vector<double> analytic(model.values.size());
  total_loss(model, data, rows, tasks, analytic);
  if (mutate) mutate(analytic);

  // Candidates: every dense parameter plus the embedding rows in the batch.
  std::vector<std::size_t> candidates;
  for (std::size_t i = model.layout.dense_begin; i < model.values.size(); ++i) {
    candidates.push_back(i);
  }
  std::unordered_set<std::size_t> rows_seen;
  const std::size_t de = model.arch.embed_dim;
  for (std::size_t r : rows) {
    const Features& f = data.features[r];
    for (std::size_t start : {model.layout.user_table + user_row(model, f) * de,
                              model.layout.video_table + video_row(model, f) * de,
                              model.layout.bin_table + bin_row(model, f) * de}) {
      if (!rows_seen.insert(start).second) continue;
      for (std::size_t j = 0; j < de; ++j) candidates.push_back(start + j);
    }
  }
  Rng rng(seed);
  const std::size_t picks = std::min(n_params, candidates.size());
  for (std::size_t i = 0; i < picks; ++i) {
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
  }

  ModelParams probe = model;
  double worst = 0.0;
  for (std::size_t i = 0; i < picks; ++i) {
    const std::size_t k = candidates[i];
    const double original = probe.values[k];
    probe.values[k] = original + kFiniteDifferenceStep;
    const double up = total_loss(probe, data, rows, tasks);
    probe.values[k] = original - kFiniteDifferenceStep;
    const double down = total_loss(probe, data, rows, tasks);
    probe.values[k] = original;
    const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / scale);
  }
  return worst;
}

Readout readout_of(const TaskConfig& task) {
  switch (task.loss) {
    case LossKind::kWeightedLogistic: return Readout::kOdds;
    case LossKind::kOrdinalCumulative: return Readout::kOrdinal;
    case LossKind::kLogistic: return Readout::kProbability;
    case LossKind::kSquaredError:
      if (task.target == kWatchTimeColumn) return Readout::kSeconds;
      if (task.target == "playing_rate") return Readout::kPlayingRate;
      return Readout::kQuantile;
  }
  return Readout::kQuantile;
}

WprInverse WprInverse::build(std::vector<double> levels, std::span<const double> labels,
                             std::span<const double> watch_time_s,
                             std::span<const std::size_t> strata, std::size_t n_strata) {
  if (levels.empty() || n_strata == 0) {
    throw Error(ErrorCode::kMissingInverseMap, "inverse map needs levels and strata");
  }
  WprInverse inv;
  inv.levels_ = std::move(levels);
  inv.strata_ = n_strata;
  const std::size_t groups = inv.levels_.size();
  std::vector<std::vector<double>> cells(n_strata * groups);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::isnan(labels[i]) || strata[i] >= n_strata) continue;
    cells[strata[i] * groups + inv.nearest_group(labels[i])].push_back(watch_time_s[i]);
  }
  inv.cells_.resize(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& values = cells[c];
    if (values.empty()) continue;
    const std::size_t k = (values.size() + 1) / 2;  // nearest-rank median
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     values.end());
    inv.cells_[c] = values[k - 1];
  }
  return inv;
}

std::size_t WprInverse::group_of(double score) const {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), score,
                             [](double level, double s) { return level + kBoundarySlack < s; });
  if (it == levels_.end()) return levels_.size() - 1;
  return static_cast<std::size_t>(it - levels_.begin());
}

std::size_t WprInverse::nearest_group(double label) const {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), label);
  if (it == levels_.end()) return levels_.size() - 1;
  if (it != levels_.begin() && label - *(it - 1) < *it - label) --it;
  return static_cast<std::size_t>(it - levels_.begin());
}

double WprInverse::representative(std::size_t group, std::size_t stratum) const {
  if (levels_.empty() || stratum >= strata_) {
    throw Error(ErrorCode::kMissingInverseMap,
                fmt::format("no inverse map for stratum {}", stratum));
  }
  const std::size_t groups = levels_.size();
  group = std::min(group, groups - 1);
  const auto* row = cells_.data() + stratum * groups;
  for (std::size_t step = 0; step < groups; ++step) {
    if (group >= step && row[group - step]) return *row[group - step];
    if (group + step < groups && row[group + step]) return *row[group + step];
  }
  throw Error(ErrorCode::kMissingInverseMap,
              fmt::format("stratum {} has no training records", stratum));
}

double predict_watch_time(const ModelParams& model, const Features& features,
                          std::size_t task_index, const TaskConfig& task,
                          const WprInverse* inverse, std::size_t stratum,
                          double duration_s) {
  const ForwardResult result = forward(model, features);
  const double score = result.score(task_index);
  const Readout readout = readout_of(task);
  if ((readout == Readout::kQuantile || readout == Readout::kOrdinal) &&
      (inverse == nullptr || inverse->empty())) {
    throw Error(ErrorCode::kMissingInverseMap,
                fmt::format("task '{}' needs an inverse map", task.name));
  }
  switch (readout) {
    case Readout::kSeconds: return std::max(0.0, score * task.target_scale);
    case Readout::kOdds: return std::exp(score);
    case Readout::kPlayingRate: return std::clamp(score, 0.0, 1.0) * duration_s;
    case Readout::kQuantile: return inverse->representative(inverse->group_of(score), stratum);
    case Readout::kOrdinal: {
      double exceeded = 0.0;
      for (double s : result.outputs(task_index)) exceeded += sigmoid(s);
      const auto group = static_cast<std::size_t>(std::lround(exceeded));
      return inverse->representative(group, stratum);
    }
    case Readout::kProbability: break;
  }
  throw Error(ErrorCode::kConfigInvalid,
              fmt::format("task '{}' has no watch-time readout", task.name));
}

double ranking_score(const ForwardResult& result, std::size_t task_index,
                     const TaskConfig& task) {
  switch (task.loss) {
    case LossKind::kLogistic: return result.probability(task_index);
    case LossKind::kOrdinalCumulative: {
      double exceeded = 0.0;
      for (double s : result.outputs(task_index)) exceeded += sigmoid(s);
      return exceeded / static_cast<double>(task.outputs());
    }
    default: return result.score(task_index);
  }
}

double fused_score(const ForwardResult& result, std::span<const TaskConfig> tasks,
                   std::span<const double> weights) {
  double total = 0.0;
  double norm = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double w = weights.empty() ? 1.0 : weights[t];
    total += w * ranking_score(result, t, tasks[t]);
    norm += w;
  }
  return norm > 0.0 ? total / norm : 0.0;
}

void Checkpoint::build_index() {
  user_index.clear();
  video_index.clear();
  for (std::size_t i = 0; i < user_vocab.size(); ++i) user_index.emplace(user_vocab[i], i);
  for (std::size_t i = 0; i < video_vocab.size(); ++i) video_index.emplace(video_vocab[i], i);
}

Features Checkpoint::features_of(const Interaction& record) const {
  Features f;
  auto u = user_index.find(record.user_id);
  f.user = u == user_index.end() ? model.arch.n_users : u->second;
  auto v = video_index.find(record.video_id);
  f.video = v == video_index.end() ? model.arch.n_videos : v->second;
  f.bin = bins.bin_of(record.duration_s);
  return f;
}

void Checkpoint::save(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, kFormatVersion);
  const auto& a = model.arch;
  for (std::size_t v : {a.n_users, a.n_videos, a.n_bins, a.embed_dim, a.experts, a.hidden}) {
    write_u64(out, v);
  }
  write_u32(out, static_cast<std::uint32_t>(tasks.size()));
  for (const auto& task : tasks) {
    write_str(out, task.name);
    write_str(out, task.target);
    write_u32(out, static_cast<std::uint32_t>(task.loss));
    write_f64(out, task.weight);
    write_u32(out, static_cast<std::uint32_t>(task.ordinal_groups));
    write_f64(out, task.target_scale);
  }
  write_u64(out, user_vocab.size());
  for (const auto& id : user_vocab) write_str(out, id);
  write_u64(out, video_vocab.size());
  for (const auto& id : video_vocab) write_str(out, id);
  write_u64(out, bins.upper_edges().size());
  for (double e : bins.upper_edges()) write_f64(out, e);
  write_u64(out, model.values.size());
  for (double v : model.values) write_f64(out, v);
}

Checkpoint Checkpoint::load(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::kFormat, "not a model checkpoint");
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kFormat, fmt::format("unsupported checkpoint version {}", version));
  }
  ArchConfig arch;
  arch.n_users = read_raw<std::uint64_t>(in);
  arch.n_videos = read_raw<std::uint64_t>(in);
  arch.n_bins = read_raw<std::uint64_t>(in);
  arch.embed_dim = read_raw<std::uint64_t>(in);
  arch.experts = read_raw<std::uint64_t>(in);
  arch.hidden = read_raw<std::uint64_t>(in);
  Checkpoint ck;
  const auto n_tasks = read_raw<std::uint32_t>(in);
  for (std::uint32_t t = 0; t < n_tasks; ++t) {
    TaskConfig task;
    task.name = read_str(in);
    task.target = read_str(in);
    const auto loss = read_raw<std::uint32_t>(in);
    if (loss > 3) throw Error(ErrorCode::kFormat, "bad loss kind in checkpoint");
    task.loss = static_cast<LossKind>(loss);
    task.weight = read_raw<double>(in);
    task.ordinal_groups = static_cast<int>(read_raw<std::uint32_t>(in));
    task.target_scale = read_raw<double>(in);
    arch.task_outputs.push_back(task.outputs());
    ck.tasks.push_back(std::move(task));
  }
  ck.user_vocab.resize(read_raw<std::uint64_t>(in));
  for (auto& id : ck.user_vocab) id = read_str(in);
  ck.video_vocab.resize(read_raw<std::uint64_t>(in));
  for (auto& id : ck.video_vocab) id = read_str(in);
  std::vector<double> edges(read_raw<std::uint64_t>(in));
  for (double& e : edges) e = read_raw<double>(in);
  ck.bins = DurationBins(std::move(edges));
  ck.model = zero_model(arch);
  const auto n_values = read_raw<std::uint64_t>(in);
  if (n_values != ck.model.values.size()) {
    throw Error(ErrorCode::kFormat, "checkpoint parameter count does not match its architecture");
  }
  for (double& v : ck.model.values) v = read_raw<double>(in);
  ck.build_index();
  return ck;
}

}  // namespace watchlabel
