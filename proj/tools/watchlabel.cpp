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

// watchlabel: generate, label, train, evaluate and ablate from one config.
//
// Exit codes: 0 on success, 2 on configuration or input errors, 1 on
// internal errors (including a diverging training run).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "watchlabel/error.hpp"
#include "watchlabel/io.hpp"
#include "watchlabel/pipeline.hpp"

namespace {

using namespace watchlabel;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitInternal = 1;

void cmd_gen(const PipelineConfig& config) {
  const SyntheticData data = generate(config.synthetic());
  write_file_atomic(config.input_path(), interactions_csv(data.interactions));
  write_file_atomic(config.truth_path(), truth_csv(data.truth));
  fmt::print(stderr, "gen: {} records -> {}, {}\n", data.interactions.size(),
             config.input_path().string(), config.truth_path().string());
}

void cmd_label(const PipelineConfig& config) {
  const Dataset records = read_interactions(config.input_path());
  const LabelOutput out = label_records(records, config);
  write_file_atomic(config.labeled_path(), labeled_csv(records, out.labels));
  fmt::print(stderr, "label: {} records, {} duration bins -> {}\n", records.size(),
             out.bins.size(), config.labeled_path().string());
}

void cmd_train(const PipelineConfig& config) {
  const LabeledData data = read_labeled(config.labeled_path());
  const TrainOutcome out = train_pipeline(data, config);
  write_file_atomic(config.model_path(),
                    [&](std::ostream& os) { out.checkpoint.save(os); });
  const fs::path trace = fs::path(config.output_dir) / "loss_trace.csv";
  write_file_atomic(trace, loss_trace_csv(out.result));
  fmt::print(stderr, "train: {} train / {} eval rows, {} parameters -> {}\n",
             out.split.train.size(), out.split.eval.size(),
             out.checkpoint.model.parameter_count(), config.model_path().string());
}

void cmd_eval(const PipelineConfig& config) {
  const LabeledData data = read_labeled(config.labeled_path());
  std::ifstream in(config.model_path(), std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo,
                fmt::format("cannot open model '{}'", config.model_path().string()));
  }
  const Checkpoint checkpoint = Checkpoint::load(in);
  std::optional<SyntheticTruth> truth;
  if (!config.truth.empty() || fs::exists(config.truth_path())) {
    truth = read_truth(config.truth_path(), data.records.size());
  }
  const EvalReport report =
      evaluate_pipeline(checkpoint, data, config, truth ? &*truth : nullptr);
  write_file_atomic(fs::path(config.output_dir) / "eval.csv", report.to_csv());
  std::fputs(report.to_table().c_str(), stdout);
}

void cmd_ablate(const PipelineConfig& config) {
  const Dataset records = read_interactions(config.input_path());
  const SyntheticTruth truth = read_truth(config.truth_path(), records.size());
  const auto rows = run_ablation(records, truth, config);
  write_file_atomic(fs::path(config.output_dir) / "ablation.csv", ablation_csv(rows));
  std::fputs(ablation_table(rows).c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased watch-time labeling, training and evaluation"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool print_config = false;
  std::vector<std::string> overrides;
  std::string output_dir;
  app.add_option("--config", config_path, "Flat key = value config file");
  app.add_option("--seed", seed, "Base seed for generation and training");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--print-config", print_config, "Echo the resolved config");
  app.add_option("--set", overrides, "Override one config key (key=value)");
  app.add_option("--out", output_dir, "Output directory");

  auto* gen = app.add_subcommand("gen", "Write a synthetic log and its truth file");
  std::optional<std::size_t> records;
  gen->add_option("--records", records, "Number of records");

  auto* label = app.add_subcommand("label", "Write the labeled CSV");
  std::string input, summary_mode, label_list;
  std::optional<double> eps;
  bool no_debias = false;
  label->add_option("--input", input, "Interaction CSV");
  label->add_option("--summary", summary_mode, "exact or sketch");
  label->add_option("--eps", eps, "Sketch rank-error bound");
  label->add_flag("--no-debias", no_debias, "Use a single duration bin");
  label->add_option("--labels", label_list, "Label columns to emit, or all");

  auto* train = app.add_subcommand("train", "Train a model on the labeled CSV");
  std::string tasks;
  std::optional<int> epochs;
  train->add_option("--tasks", tasks, "target:loss[:weight],...");
  train->add_option("--epochs", epochs, "Training epochs");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the eval split");
  std::string model, truth;
  eval->add_option("--model", model, "Checkpoint path");
  eval->add_option("--truth", truth, "Truth CSV");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation matrix");
  std::optional<int> ablate_seeds;
  std::string variants;
  ablate->add_option("--seeds", ablate_seeds, "Training seeds per variant");
  ablate->add_option("--variants", variants, "Comma separated variant names, or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    PipelineConfig config;
    if (!config_path.empty()) config.load_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::kConfigInvalid,
                    fmt::format("--set expects key=value, got '{}'", kv));
      }
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (records) config.gen.n_records = *records;
    if (!input.empty()) config.input = input;
    if (!summary_mode.empty()) config.set("summary.mode", summary_mode);
    if (eps) config.summary_eps = *eps;
    if (no_debias) config.debias = false;
    if (!label_list.empty()) config.labels = label_list;
    if (!tasks.empty()) config.tasks = tasks;
    if (epochs) config.optimizer.epochs = *epochs;
    if (!model.empty()) config.model = model;
    if (!truth.empty()) config.truth = truth;
    if (ablate_seeds) config.ablate_seeds = *ablate_seeds;
    if (!variants.empty()) config.ablate_variants = variants;
    config.validate();

    if (print_config) std::fputs(config.resolved().c_str(), stdout);
    if (gen->parsed()) cmd_gen(config);
    if (label->parsed()) cmd_label(config);
    if (train->parsed()) cmd_train(config);
    if (eval->parsed()) cmd_eval(config);
    if (ablate->parsed()) cmd_ablate(config);
    if (app.get_subcommands().empty() && !print_config) {
      std::fputs(app.help().c_str(), stderr);
      return kExitConfig;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "watchlabel: %s\n", e.what());
    return e.code() == ErrorCode::kNonFiniteLoss ? kExitInternal : kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "watchlabel: internal error: %s\n", e.what());
    return kExitInternal;
  }
  return 0;
}
