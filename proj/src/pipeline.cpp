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

#include "watchlabel/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "watchlabel/error.hpp"
#include "watchlabel/random.hpp"

namespace watchlabel {
namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            std::string_view expected) {
  throw Error(ErrorCode::kConfigInvalid,
              fmt::format("'{}' = '{}' is not {}", key, value, expected));
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "an integer in range");
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string_view> split_list(std::string_view list) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = std::min(list.find(',', start), list.size());
    const auto item = trim(list.substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::string join_doubles(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt::format("{}", values[i]);
  }
  return out;
}

struct Key {
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

// Builders for the key table; `k` is the key name used in diagnostics.
template <typename Get>
Key make_int_key(std::string_view k, Get get) {
  using T = std::remove_reference_t<decltype(get(std::declval<PipelineConfig&>()))>;
  return {[k, get](PipelineConfig& c, std::string_view v) { get(c) = parse_integer<T>(k, v); },
          [get](const PipelineConfig& c) {
            return fmt::format("{}", get(const_cast<PipelineConfig&>(c)));
          }};
}

template <typename Get>
Key make_real_key(std::string_view k, Get get) {
  return {[k, get](PipelineConfig& c, std::string_view v) { get(c) = parse_double(k, v); },
          [get](const PipelineConfig& c) {
            return fmt::format("{}", get(const_cast<PipelineConfig&>(c)));
          }};
}

template <typename Get>
Key make_bool_key(std::string_view k, Get get) {
  return {[k, get](PipelineConfig& c, std::string_view v) { get(c) = parse_bool(k, v); },
          [get](const PipelineConfig& c) {
            return std::string(get(const_cast<PipelineConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Get>
Key make_string_key(Get get) {
  return {[get](PipelineConfig& c, std::string_view v) { get(c) = std::string(v); },
          [get](const PipelineConfig& c) { return get(const_cast<PipelineConfig&>(c)); }};
}

const std::map<std::string, Key, std::less<>>& key_table() {
  static const auto* table = [] {
    auto* t = new std::map<std::string, Key, std::less<>>();
    auto& m = *t;
    using C = PipelineConfig;
    m["output_dir"] = make_string_key([](C& c) -> std::string& { return c.output_dir; });
    m["input"] = make_string_key([](C& c) -> std::string& { return c.input; });
    m["truth"] = make_string_key([](C& c) -> std::string& { return c.truth; });
    m["labeled"] = make_string_key([](C& c) -> std::string& { return c.labeled; });
    m["model"] = make_string_key([](C& c) -> std::string& { return c.model; });
    m["seed"] = make_int_key("seed", [](C& c) -> std::uint64_t& { return c.seed; });
    m["threads"] = make_int_key("threads", [](C& c) -> int& { return c.threads; });

    m["gen.n_users"] =
        make_int_key("gen.n_users", [](C& c) -> std::size_t& { return c.gen.n_users; });
    m["gen.n_videos"] =
        make_int_key("gen.n_videos", [](C& c) -> std::size_t& { return c.gen.n_videos; });
    m["gen.interactions_per_user"] = make_int_key(
        "gen.interactions_per_user",
        [](C& c) -> std::size_t& { return c.gen.interactions_per_user; });
    m["gen.records"] = {
        [](C& c, std::string_view v) {
          if (v == "auto") {
            c.gen.n_records.reset();
          } else {
            c.gen.n_records = parse_integer<std::size_t>("gen.records", v);
          }
        },
        [](const C& c) {
          return c.gen.n_records ? fmt::format("{}", *c.gen.n_records) : std::string("auto");
        }};
    m["gen.latent_dim"] =
        make_int_key("gen.latent_dim", [](C& c) -> int& { return c.gen.latent_dim; });
    m["gen.mu_d"] = make_real_key("gen.mu_d", [](C& c) -> double& { return c.gen.mu_d; });
    m["gen.s_d"] = make_real_key("gen.s_d", [](C& c) -> double& { return c.gen.s_d; });
    m["gen.sigma_d"] =
        make_real_key("gen.sigma_d", [](C& c) -> double& { return c.gen.sigma_d; });
    m["gen.d_min"] = make_real_key("gen.d_min", [](C& c) -> double& { return c.gen.d_min; });
    m["gen.d_max"] = make_real_key("gen.d_max", [](C& c) -> double& { return c.gen.d_max; });
    m["gen.alpha"] = make_real_key("gen.alpha", [](C& c) -> double& { return c.gen.alpha; });
    m["gen.beta"] = make_real_key("gen.beta", [](C& c) -> double& { return c.gen.beta; });
    m["gen.sigma_y"] =
        make_real_key("gen.sigma_y", [](C& c) -> double& { return c.gen.sigma_y; });
    m["gen.confounding_sign"] = make_int_key(
        "gen.confounding_sign", [](C& c) -> int& { return c.gen.confounding_sign; });

    m["partition.kind"] = {
        [](C& c, std::string_view v) { c.partition_kind = parse_partition_kind(v); },
        [](const C& c) { return std::string(partition_kind_name(c.partition_kind)); }};
    m["partition.groups"] =
        make_int_key("partition.groups", [](C& c) -> int& { return c.partition_groups; });
    m["partition.gamma"] =
        make_real_key("partition.gamma", [](C& c) -> double& { return c.partition.gamma; });
    m["partition.a"] =
        make_real_key("partition.a", [](C& c) -> double& { return c.partition.curve.a; });
    m["partition.b"] =
        make_real_key("partition.b", [](C& c) -> double& { return c.partition.curve.b; });
    m["partition.c"] =
        make_real_key("partition.c", [](C& c) -> double& { return c.partition.curve.c; });
    m["partition.min_watch_s"] = make_real_key(
        "partition.min_watch_s", [](C& c) -> double& { return c.partition.curve.min_watch_s; });
    m["partition.max_watch_s"] = make_real_key(
        "partition.max_watch_s", [](C& c) -> double& { return c.partition.curve.max_watch_s; });
    m["partition.ratios"] = {
        [](C& c, std::string_view v) {
          c.partition.ratios.clear();
          for (auto item : split_list(v)) {
            c.partition.ratios.push_back(parse_double("partition.ratios", item));
          }
        },
        [](const C& c) { return join_doubles(c.partition.ratios); }};
    m["partition.progressive"] = make_bool_key(
        "partition.progressive", [](C& c) -> bool& { return c.partition.progressive; });
    m["partition.strict_decrease"] = make_bool_key(
        "partition.strict_decrease", [](C& c) -> bool& { return c.partition.strict_decrease; });

    m["bins.max"] = make_int_key("bins.max", [](C& c) -> int& { return c.max_bins; });
    m["bins.min_size"] =
        make_int_key("bins.min_size", [](C& c) -> std::size_t& { return c.min_bin_size; });
    m["bins.debias"] = make_bool_key("bins.debias", [](C& c) -> bool& { return c.debias; });

    m["labels.enabled"] = make_string_key([](C& c) -> std::string& { return c.labels; });
    m["labels.min_group_size"] = make_int_key(
        "labels.min_group_size", [](C& c) -> std::size_t& { return c.min_group_size; });
    m["labels.tie_mode"] = {
        [](C& c, std::string_view v) { c.tie_mode = parse_tie_mode(v); },
        [](const C& c) { return std::string(tie_mode_name(c.tie_mode)); }};
    m["labels.ef_groups"] =
        make_int_key("labels.ef_groups", [](C& c) -> int& { return c.ef_groups; });
    m["labels.ew_groups"] =
        make_int_key("labels.ew_groups", [](C& c) -> int& { return c.ew_groups; });
    m["labels.ew_cap_percentile"] = make_real_key(
        "labels.ew_cap_percentile", [](C& c) -> double& { return c.ew_cap_percentile; });

    m["summary.mode"] = {
        [](C& c, std::string_view v) { c.summary_mode = parse_summary_mode(v); },
        [](const C& c) { return std::string(summary_mode_name(c.summary_mode)); }};
    m["summary.eps"] =
        make_real_key("summary.eps", [](C& c) -> double& { return c.summary_eps; });

    m["model.embed_dim"] =
        make_int_key("model.embed_dim", [](C& c) -> std::size_t& { return c.embed_dim; });
    m["model.experts"] =
        make_int_key("model.experts", [](C& c) -> std::size_t& { return c.experts; });
    m["model.hidden"] =
        make_int_key("model.hidden", [](C& c) -> std::size_t& { return c.hidden; });

    m["train.tasks"] = make_string_key([](C& c) -> std::string& { return c.tasks; });
    m["train.ordinal_groups"] =
        make_int_key("train.ordinal_groups", [](C& c) -> int& { return c.ordinal_groups; });
    m["train.lr_embed"] = make_real_key(
        "train.lr_embed", [](C& c) -> double& { return c.optimizer.lr_embed; });
    m["train.lr_dense"] = make_real_key(
        "train.lr_dense", [](C& c) -> double& { return c.optimizer.lr_dense; });
    m["train.batch_size"] = make_int_key(
        "train.batch_size", [](C& c) -> std::size_t& { return c.optimizer.batch_size; });
    m["train.epochs"] =
        make_int_key("train.epochs", [](C& c) -> int& { return c.optimizer.epochs; });
    m["train.seed"] = {
        [](C& c, std::string_view v) {
          if (v == "auto") {
            c.train_seed.reset();
          } else {
            c.train_seed = parse_integer<std::uint64_t>("train.seed", v);
          }
        },
        [](const C& c) {
          return c.train_seed ? fmt::format("{}", *c.train_seed) : std::string("auto");
        }};

    m["split.train_fraction"] = make_real_key(
        "split.train_fraction", [](C& c) -> double& { return c.train_fraction; });
    m["split.seed"] =
        make_int_key("split.seed", [](C& c) -> std::uint64_t& { return c.split_seed; });

    m["ablate.seeds"] =
        make_int_key("ablate.seeds", [](C& c) -> int& { return c.ablate_seeds; });
    m["ablate.variants"] =
        make_string_key([](C& c) -> std::string& { return c.ablate_variants; });
    return t;
  }();
  return *table;
}

LabelToggles toggles_of(std::string_view list) {
  if (list == "default") return LabelToggles{};
  return LabelToggles::parse(list);
}

std::size_t stratum_of(const TaskConfig& task, const Checkpoint& checkpoint,
                       const Interaction& record) {
  return inverse_is_per_bin(task) ? checkpoint.bins.bin_of(record.duration_s) : 0;
}

std::vector<std::uint8_t> binary_column(const LabeledData& data, std::string_view name,
                                        std::span<const std::size_t> rows) {
  auto it = data.columns.find(name);
  if (it == data.columns.end()) {
    throw Error(ErrorCode::kMissingLabelColumn,
                fmt::format("evaluation needs label column '{}'", name));
  }
  std::vector<std::uint8_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const double v = it->second[r];
    if (std::isnan(v)) {
      throw Error(ErrorCode::kMissingLabelColumn,
                  fmt::format("label '{}' is absent for row {}", name, r));
    }
    out.push_back(v > 0.5 ? 1 : 0);
  }
  return out;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, key] : key_table()) out.push_back(name);
  return out;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  const auto& table = key_table();
  auto it = table.find(trim(key));
  if (it == table.end()) {
    throw Error(ErrorCode::kConfigInvalid, fmt::format("unknown config key '{}'", key));
  }
  it->second.set(*this, trim(value));
}

void PipelineConfig::load_text(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfigInvalid,
                  fmt::format("config line {} is not 'key = value'", line_no));
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void PipelineConfig::load_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::kConfigInvalid,
                fmt::format("cannot read config file '{}'", path.string()));
  }
  load_text(text);
}

std::string PipelineConfig::resolved() const {
  std::string out;
  for (const auto& [name, key] : key_table()) {
    out += fmt::format("{} = {}\n", name, key.get(*this));
  }
  return out;
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, std::string_view what) {
    if (!ok) throw Error(ErrorCode::kConfigInvalid, std::string(what));
  };
  synthetic().validate();
  check(threads >= 1, "threads must be >= 1");
  check(partition_groups >= 2 || partition_kind == PartitionKind::kExplicit,
        "partition.groups must be >= 2");
  check(max_bins >= 1, "bins.max must be >= 1");
  check(min_bin_size >= 1, "bins.min_size must be >= 1");
  check(min_group_size >= 1, "labels.min_group_size must be >= 1");
  check(summary_eps > 0.0 && summary_eps < 1.0, "summary.eps must lie in (0, 1)");
  check(ef_groups >= 2 && ew_groups >= 1, "labels.ef_groups / ew_groups out of range");
  check(ew_cap_percentile > 0.0 && ew_cap_percentile <= 100.0,
        "labels.ew_cap_percentile must lie in (0, 100]");
  check(ordinal_groups >= 2, "train.ordinal_groups must be >= 2");
  check(train_fraction > 0.0 && train_fraction < 1.0,
        "split.train_fraction must lie in (0, 1)");
  check(ablate_seeds >= 1, "ablate.seeds must be >= 1");
  optimizer.validate();
  for (const auto& t : task_configs()) t.validate();
  toggles_of(labels);
  partition_scheme();
}

std::filesystem::path PipelineConfig::input_path() const {
  return input.empty() ? std::filesystem::path(output_dir) / "interactions.csv" : std::filesystem::path(input);
}
std::filesystem::path PipelineConfig::truth_path() const {
  return truth.empty() ? std::filesystem::path(output_dir) / "truth.csv" : std::filesystem::path(truth);
}
std::filesystem::path PipelineConfig::labeled_path() const {
  return labeled.empty() ? std::filesystem::path(output_dir) / "labeled.csv" : std::filesystem::path(labeled);
}
std::filesystem::path PipelineConfig::model_path() const {
  return model.empty() ? std::filesystem::path(output_dir) / "model.wlmd" : std::filesystem::path(model);
}

SyntheticConfig PipelineConfig::synthetic() const {
  SyntheticConfig out = gen;
  out.seed = seed;
  return out;
}

PartitionScheme PipelineConfig::partition_scheme() const {
  return make_partition(partition_kind, partition_groups, partition);
}

LabelConfig PipelineConfig::label_config() const {
  LabelConfig out;
  out.partition = partition_scheme();
  out.max_bins = debias ? max_bins : 1;
  out.min_bin_size = min_bin_size;
  out.min_group_size = min_group_size;
  out.summary.mode = summary_mode;
  out.summary.eps = summary_eps;
  out.summary.tie_mode = tie_mode;
  out.summary.threads = threads;
  out.ef_groups = ef_groups;
  out.ew_groups = ew_groups;
  out.ew_cap_percentile = ew_cap_percentile;
  out.enabled = toggles_of(labels);
  return out;
}

std::vector<TaskConfig> PipelineConfig::task_configs() const {
  std::vector<TaskConfig> out;
  for (auto item : split_list(tasks)) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      const auto colon = item.find(':', start);
      parts.push_back(trim(item.substr(start, colon - start)));
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    if (parts.size() < 2 || parts.size() > 3) {
      throw Error(ErrorCode::kConfigInvalid,
                  fmt::format("task '{}' is not 'target:loss[:weight]'", item));
    }
    TaskConfig task;
    task.name = std::string(parts[0]);
    task.target = std::string(parts[0]);
    task.loss = parse_loss_kind(parts[1]);
    if (parts.size() == 3) task.weight = parse_double("train.tasks", parts[2]);
    if (task.loss == LossKind::kOrdinalCumulative) task.ordinal_groups = ordinal_groups;
    task.validate();
    out.push_back(std::move(task));
  }
  if (out.empty()) throw Error(ErrorCode::kConfigInvalid, "train.tasks is empty");
  return out;
}

Split split_rows(std::span<const Interaction> records, double train_fraction,
                 std::uint64_t seed) {
  const auto cut = static_cast<std::uint64_t>(
      train_fraction * static_cast<double>(std::numeric_limits<std::uint64_t>::max()));
  Split out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (mix64(records[i].row_index ^ mix64(seed)) < cut ? out.train : out.eval).push_back(i);
  }
  return out;
}

LabelOutput label_records(std::span<const Interaction> records,
                          const PipelineConfig& config) {
  return label_all(records, config.label_config());
}

void add_derived_columns(LabeledData& data, const PipelineConfig& config) {
  auto& watch = data.columns[std::string(kWatchTimeColumn)];
  watch.resize(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    watch[i] = data.records[i].watch_time_s;
  }
  const auto equal =
      make_partition(PartitionKind::kEqualFrequency, config.ordinal_groups);
  const auto levels = label_wpr_global(data.records, equal);
  auto& groups = data.columns[std::string(kOrdinalGroupColumn)];
  groups.resize(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    groups[i] = static_cast<double>(equal.group_of(levels[i]) + 1);
  }
}

TrainOutcome train_pipeline(const LabeledData& labeled, const PipelineConfig& config) {
  config.validate();
  const auto& records = labeled.records;
  if (records.empty()) throw Error(ErrorCode::kEmptyDataset, "no records to train on");
  LabeledData data = labeled;
  add_derived_columns(data, config);

  TrainOutcome out;
  out.split = split_rows(records, config.train_fraction, config.split_seed);
  if (out.split.train.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "the split left no training rows");
  }
  auto& ck = out.checkpoint;
  {
    std::map<std::string_view, int> users, videos;
    for (std::size_t r : out.split.train) {
      users.emplace(records[r].user_id, 0);
      videos.emplace(records[r].video_id, 0);
    }
    for (const auto& [id, unused] : users) ck.user_vocab.emplace_back(id);
    for (const auto& [id, unused] : videos) ck.video_vocab.emplace_back(id);
  }
  ck.bins = make_duration_bins(records, config.debias ? config.max_bins : 1,
                               config.min_bin_size);
  ck.tasks = config.task_configs();
  for (auto& task : ck.tasks) {
    if (task.target == kWatchTimeColumn && task.loss == LossKind::kSquaredError) {
      double sum = 0.0;
      for (std::size_t r : out.split.train) sum += records[r].watch_time_s;
      const double mean = sum / static_cast<double>(out.split.train.size());
      task.target_scale = mean > 0.0 ? mean : 1.0;
    }
  }
  ck.build_index();

  ArchConfig arch;
  arch.n_users = ck.user_vocab.size();
  arch.n_videos = ck.video_vocab.size();
  arch.n_bins = ck.bins.size();
  arch.embed_dim = config.embed_dim;
  arch.experts = config.experts;
  arch.hidden = config.hidden;
  for (const auto& task : ck.tasks) arch.task_outputs.push_back(task.outputs());
  ck.model = init_model(arch, config.effective_train_seed());

  TrainingData training;
  training.features.reserve(records.size());
  for (const auto& r : records) {
    training.features.push_back(ck.features_of(r));
    training.watch_time_s.push_back(r.watch_time_s);
    training.duration_s.push_back(r.duration_s);
  }
  for (const auto& task : ck.tasks) {
    auto it = data.columns.find(task.target);
    if (it == data.columns.end()) {
      throw Error(ErrorCode::kMissingLabelColumn,
                  fmt::format("task '{}' needs label column '{}'", task.name, task.target));
    }
    training.columns.emplace(it->first, it->second);
  }
  OptimizerConfig optimizer = config.optimizer;
  optimizer.seed = config.effective_train_seed();
  optimizer.threads = config.threads;
  out.result = train(ck.model, training, out.split.train, ck.tasks, optimizer);
  return out;
}

bool inverse_is_per_bin(const TaskConfig& task) {
  return task.target == "wpr_d" || task.target == "ef_wpr" || task.target == "ew_wpr";
}

std::optional<WprInverse> build_inverse(const TaskConfig& task, const LabeledData& data,
                                        const Checkpoint& checkpoint,
                                        std::span<const std::size_t> train_rows,
                                        const PipelineConfig& config) {
  const Readout readout = readout_of(task);
  if (readout != Readout::kQuantile && readout != Readout::kOrdinal) return std::nullopt;
  std::vector<double> levels;
  if (task.target == "wpr" || task.target == "wpr_d") {
    const auto scheme = config.partition_scheme();
    levels.assign(scheme.prefix().begin(), scheme.prefix().end());
  } else if (task.target == "ef_wpr") {
    const auto scheme = make_partition(PartitionKind::kEqualFrequency, config.ef_groups);
    levels.assign(scheme.prefix().begin(), scheme.prefix().end());
  } else if (task.target == "ew_wpr") {
    for (int n = 1; n <= config.ew_groups; ++n) {
      levels.push_back(static_cast<double>(n) / config.ew_groups);
    }
  } else if (readout == Readout::kOrdinal) {
    for (int n = 1; n <= task.ordinal_groups; ++n) levels.push_back(n);
  } else {
    return std::nullopt;
  }
  auto it = data.columns.find(task.target);
  if (it == data.columns.end()) {
    throw Error(ErrorCode::kMissingLabelColumn,
                fmt::format("task '{}' needs label column '{}'", task.name, task.target));
  }
  std::vector<double> labels, watch;
  std::vector<std::size_t> strata;
  for (std::size_t r : train_rows) {
    labels.push_back(it->second[r]);
    watch.push_back(data.records[r].watch_time_s);
    strata.push_back(stratum_of(task, checkpoint, data.records[r]));
  }
  const std::size_t n_strata = inverse_is_per_bin(task) ? checkpoint.bins.size() : 1;
  return WprInverse::build(std::move(levels), labels, watch, strata, n_strata);
}

EvalReport evaluate_pipeline(const Checkpoint& checkpoint, const LabeledData& labeled,
                             const PipelineConfig& config, const SyntheticTruth* truth) {
  LabeledData data = labeled;
  add_derived_columns(data, config);
  const auto& records = data.records;
  const Split split = split_rows(records, config.train_fraction, config.split_seed);
  if (split.eval.empty()) throw Error(ErrorCode::kEmptyDataset, "the split left no eval rows");
  const auto& tasks = checkpoint.tasks;
  for (const auto& task : tasks) {
    if (!data.columns.contains(task.target)) {
      throw Error(ErrorCode::kMissingLabelColumn,
                  fmt::format("checkpoint task '{}' needs label column '{}'", task.name,
                              task.target));
    }
  }

  std::optional<std::size_t> regression_task;
  for (std::size_t t = 0; t < tasks.size() && !regression_task; ++t) {
    if (readout_of(tasks[t]) != Readout::kProbability) regression_task = t;
  }
  std::optional<WprInverse> inverse;
  if (regression_task) {
    inverse = build_inverse(tasks[*regression_task], data, checkpoint, split.train, config);
  }

  std::vector<double> fused, predicted, actual;
  std::vector<Interaction> eval_records;
  for (std::size_t r : split.eval) {
    const Features f = checkpoint.features_of(records[r]);
    const ForwardResult result = forward(checkpoint.model, f);
    fused.push_back(fused_score(result, tasks));
    eval_records.push_back(records[r]);
    if (regression_task) {
      const auto& task = tasks[*regression_task];
      predicted.push_back(predict_watch_time(
          checkpoint.model, f, *regression_task, task, inverse ? &*inverse : nullptr,
          stratum_of(task, checkpoint, records[r]), records[r].duration_s));
      actual.push_back(records[r].watch_time_s);
    }
  }

  const auto users = user_group_ids(eval_records);
  const auto ev = binary_column(data, "ev", split.eval);
  const auto lv = binary_column(data, "lv", split.eval);
  EvalReport report;
  report.auc = auc(fused, ev);
  const GaucResult g = gauc(fused, ev, users);
  report.gauc = g.gauc;
  report.records_evaluated = g.records_evaluated;
  report.records_skipped = g.records_skipped;
  report.users_evaluated = g.users_evaluated;
  report.users_skipped = g.users_skipped;
  if (regression_task) {
    const RegressionMetrics reg = regression_metrics(predicted, actual);
    report.mae = reg.mae;
    report.rmse = reg.rmse;
    report.mape = reg.mape;
    report.mape_skipped = reg.mape_skipped;
  }
  const std::size_t n_eval = split.eval.size();
  report.extra.push_back({"auc_lv", auc(fused, lv), n_eval, 0});
  const GaucResult g_lv = gauc(fused, lv, users);
  report.extra.push_back(
      {"gauc_lv", g_lv.gauc, g_lv.records_evaluated, g_lv.records_skipped});
  if (truth != nullptr) {
    std::vector<double> m;
    for (std::size_t r : split.eval) m.push_back(truth->m.at(records[r].row_index));
    report.extra.push_back(
        {"gauc_truth", oracle_rank_quality(fused, m, std::span<const std::size_t>(users)),
         n_eval, 0});
  }
  report.extra.push_back({"train_rows", static_cast<double>(split.train.size()),
                          split.train.size(), 0});
  report.extra.push_back(
      {"eval_rows", static_cast<double>(n_eval), n_eval, 0});
  return report;
}

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> variants = {
      {"DML", "wpr_d:squared_error,ev_d:logistic,lv_d:logistic"},
      {"w/o DG", "wpr:squared_error,ev:logistic,lv:logistic"},
      {"w/o WPR", "playing_rate:squared_error,ev_d:logistic,lv_d:logistic"},
      {"EF-WPR", "ef_wpr:squared_error,ev_d:logistic,lv_d:logistic"},
      {"EW-WPR", "ew_wpr:squared_error,ev_d:logistic,lv_d:logistic"},
      {"TR", "watch_time_s:squared_error"},
      {"WLR", "ev:weighted_logistic"},
      {"OR", "or_group:ordinal_cumulative"},
      {"D2Q", "ef_wpr:squared_error"},
  };
  return variants;
}

double AblationRow::gauc_truth_spread() const {
  if (gauc_truth_by_seed.empty()) return 0.0;
  const auto [lo, hi] =
      std::minmax_element(gauc_truth_by_seed.begin(), gauc_truth_by_seed.end());
  return *hi - *lo;
}

std::vector<AblationRow> run_ablation(std::span<const Interaction> records,
                                      const SyntheticTruth& truth,
                                      const PipelineConfig& config) {
  config.validate();
  if (truth.m.size() != records.size()) {
    throw Error(ErrorCode::kMissingTruthFile, "ablation needs ground truth for every record");
  }
  std::vector<const AblationVariant*> selected;
  if (config.ablate_variants == "all") {
    for (const auto& v : ablation_variants()) selected.push_back(&v);
  } else {
    for (auto name : split_list(config.ablate_variants)) {
      auto it = std::find_if(ablation_variants().begin(), ablation_variants().end(),
                             [&](const AblationVariant& v) { return v.name == name; });
      if (it == ablation_variants().end()) {
        throw Error(ErrorCode::kConfigInvalid, fmt::format("unknown variant '{}'", name));
      }
      selected.push_back(&*it);
    }
  }

  LabelConfig label_config = config.label_config();
  label_config.enabled.ef_wpr = true;
  label_config.enabled.ew_wpr = true;
  Dataset copy(records.begin(), records.end());
  const LabelOutput labels = label_all(copy, label_config);
  const LabeledData data = to_labeled(std::move(copy), labels.labels);

  std::vector<AblationRow> rows;
  for (const AblationVariant* variant : selected) {
    AblationRow row;
    row.variant = variant->name;
    for (int s = 0; s < config.ablate_seeds; ++s) {
      PipelineConfig run = config;
      run.tasks = variant->tasks;
      run.train_seed = config.effective_train_seed() + static_cast<std::uint64_t>(s);
      const TrainOutcome trained = train_pipeline(data, run);
      const EvalReport report = evaluate_pipeline(trained.checkpoint, data, run, &truth);
      double gauc_truth = 0.0;
      for (const auto& extra : report.extra) {
        if (extra.metric == "gauc_truth") gauc_truth = extra.value;
      }
      row.gauc_truth_by_seed.push_back(gauc_truth);
      row.gauc_truth += gauc_truth;
      row.auc_ev += report.auc;
      row.gauc_ev += report.gauc;
      row.mae += report.mae;
      row.rmse += report.rmse;
      row.mape += report.mape;
    }
    const double n = config.ablate_seeds;
    for (double* v : {&row.gauc_truth, &row.auc_ev, &row.gauc_ev, &row.mae, &row.rmse,
                      &row.mape}) {
      *v /= n;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "variant,gauc_truth,auc_ev,gauc_ev,mae,rmse,mape,gauc_truth_spread\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.variant,
                       r.gauc_truth, r.auc_ev, r.gauc_ev, r.mae, r.rmse, r.mape,
                       r.gauc_truth_spread());
  }
  return out;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::string out = fmt::format("{:<8} {:>10} {:>8} {:>8} {:>9} {:>9} {:>8} {:>8}\n",
                                "variant", "gauc_truth", "auc_ev", "gauc_ev", "mae", "rmse",
                                "mape", "spread");
  for (const auto& r : rows) {
    out += fmt::format("{:<8} {:>10.4f} {:>8.4f} {:>8.4f} {:>9.3f} {:>9.3f} {:>8.4f} {:>8.4f}\n",
                       r.variant, r.gauc_truth, r.auc_ev, r.gauc_ev, r.mae, r.rmse, r.mape,
                       r.gauc_truth_spread());
  }
  return out;
}

}  // namespace watchlabel
