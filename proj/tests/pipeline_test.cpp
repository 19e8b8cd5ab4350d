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

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "watchlabel/pipeline.hpp"

namespace watchlabel {
namespace {

PipelineConfig small_config(std::size_t records) {
  PipelineConfig c;
  c.gen.n_users = 100;
  c.gen.n_videos = 200;
  c.gen.interactions_per_user = 60;
  c.gen.n_records = records;
  c.partition_groups = 50;
  c.ef_groups = 50;
  c.ew_groups = 50;
  c.max_bins = 5;
  c.optimizer.epochs = 2;
  return c;
}

LabeledData labeled_synthetic(const PipelineConfig& c, SyntheticTruth* truth = nullptr) {
  auto data = generate(c.synthetic());
  const auto labels = label_records(data.interactions, c);
  if (truth) *truth = data.truth;
  return to_labeled(std::move(data.interactions), labels.labels);
}

TEST(PipelineConfig, RejectsUnknownKeysAndBadValues) {
  PipelineConfig c;
  EXPECT_ERROR_CODE(c.set("no_such_key", "1"), kConfigInvalid);
  EXPECT_ERROR_CODE(c.set("seed", "abc"), kConfigInvalid);
  EXPECT_ERROR_CODE(c.set("partition.kind", "spiral"), kConfigInvalid);
  EXPECT_ERROR_CODE(c.load_text("seed 5\n"), kConfigInvalid);
}

TEST(PipelineConfig, LoadTextWithComments) {
  PipelineConfig c;
  c.load_text("# reference run\nseed = 9   # trailing\n\n  train.epochs=3\nlabels.enabled = all\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.optimizer.epochs, 3);
  EXPECT_EQ(c.labels, "all");
}

TEST(PipelineConfig, ResolvedRoundTrip) {
  PipelineConfig c;
  c.set("partition.gamma", "0.75");
  c.set("train.tasks", "wpr:squared_error:2,ev:logistic");
  c.set("train.seed", "123");
  c.set("summary.mode", "sketch");
  const auto text = c.resolved();
  PipelineConfig back;
  back.load_text(text);
  EXPECT_EQ(back.resolved(), text);
  for (const auto& key : config_keys()) {
    EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
  }
}

TEST(PipelineConfig, ValidateAndTaskParsing) {
  PipelineConfig c;
  c.train_fraction = 1.5;
  EXPECT_ERROR_CODE(c.validate(), kConfigInvalid);
  c = PipelineConfig{};
  c.tasks = "wpr_d:squared_error:2.5,or_group:ordinal_cumulative";
  const auto tasks = c.task_configs();
  ASSERT_EQ(tasks.size(), 2u);
  EXPECT_EQ(tasks[0].target, "wpr_d");
  EXPECT_EQ(tasks[0].weight, 2.5);
  EXPECT_EQ(tasks[1].loss, LossKind::kOrdinalCumulative);
  EXPECT_EQ(tasks[1].ordinal_groups, c.ordinal_groups);
  c.tasks = "wpr_d:hinge";
  EXPECT_ERROR_CODE(c.task_configs(), kConfigInvalid);
  c.tasks = "wpr_d:squared_error:-1";
  EXPECT_ERROR_CODE(c.task_configs(), kConfigInvalid);
}

TEST(SplitRows, DisjointDeterministicAndKeyedByRowIndex) {
  auto records = testing::records_from(std::vector<double>(10'000, 1.0));
  const auto a = split_rows(records, 0.9, 7);
  EXPECT_EQ(a.train.size() + a.eval.size(), records.size());
  EXPECT_NEAR(static_cast<double>(a.train.size()) / 10'000.0, 0.9, 0.02);
  std::set<std::size_t> seen(a.train.begin(), a.train.end());
  for (auto r : a.eval) EXPECT_FALSE(seen.contains(r));
  const auto b = split_rows(records, 0.9, 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(split_rows(records, 0.9, 8).train, a.train);

  std::reverse(records.begin(), records.end());
  const auto reversed = split_rows(records, 0.9, 7);
  std::set<std::uint64_t> ids_a, ids_b;
  for (auto r : a.train) ids_a.insert(r);  // positions equal row_index before reversal
  for (auto r : reversed.train) ids_b.insert(records[r].row_index);
  EXPECT_EQ(ids_a, ids_b);
}

TEST(AddDerivedColumns, OrdinalGroupsAreEqualFrequency) {
  PipelineConfig c = small_config(4000);
  auto data = labeled_synthetic(c);
  add_derived_columns(data, c);
  const auto& g = data.columns.at(std::string(kOrdinalGroupColumn));
  std::vector<int> counts(c.ordinal_groups, 0);
  for (double v : g) {
    ASSERT_GE(v, 1.0);
    ASSERT_LE(v, c.ordinal_groups);
    ++counts[static_cast<int>(v) - 1];
  }
  for (int n : counts) EXPECT_NEAR(n, 4000.0 / c.ordinal_groups, 1.0);
  const auto& w = data.columns.at(std::string(kWatchTimeColumn));
  EXPECT_EQ(w[17], data.records[17].watch_time_s);
}

TEST(EvaluatePipeline, EndToEnd) {
  PipelineConfig c = small_config(5000);
  SyntheticTruth truth;
  const auto data = labeled_synthetic(c, &truth);
  const auto trained = train_pipeline(data, c);
  EXPECT_EQ(trained.split.train.size() + trained.split.eval.size(), 5000u);
  const auto report = evaluate_pipeline(trained.checkpoint, data, c, &truth);
  EXPECT_GE(report.auc, 0.0);
  EXPECT_LE(report.auc, 1.0);
  EXPECT_GE(report.rmse, report.mae);
  EXPECT_GT(report.mae, 0.0);
  std::set<std::string> extras;
  for (const auto& row : report.extra) extras.insert(row.metric);
  for (const char* name : {"auc_lv", "gauc_lv", "gauc_truth", "train_rows", "eval_rows"}) {
    EXPECT_TRUE(extras.contains(name)) << name;
  }
  // Same inputs give the same report.
  EXPECT_EQ(evaluate_pipeline(trained.checkpoint, data, c, &truth).to_csv(), report.to_csv());
}

TEST(EvaluatePipeline, MissingLabelColumn) {
  PipelineConfig c = small_config(3000);
  c.optimizer.epochs = 1;
  auto data = labeled_synthetic(c);
  const auto trained = train_pipeline(data, c);
  data.columns.erase("wpr_d");
  EXPECT_ERROR_CODE(evaluate_pipeline(trained.checkpoint, data, c), kMissingLabelColumn);
  EXPECT_ERROR_CODE(train_pipeline(data, c), kMissingLabelColumn);
}

TEST(RunAblation, NineVariantsWithPerSeedValues) {
  PipelineConfig c = small_config(3000);
  c.optimizer.epochs = 1;
  c.ablate_seeds = 2;
  const auto gen = generate(c.synthetic());
  const auto rows = run_ablation(gen.interactions, gen.truth, c);
  ASSERT_EQ(rows.size(), ablation_variants().size());
  ASSERT_EQ(rows.size(), 9u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].variant, ablation_variants()[i].name);
    ASSERT_EQ(rows[i].gauc_truth_by_seed.size(), 2u);
    EXPECT_NEAR(rows[i].gauc_truth,
                0.5 * (rows[i].gauc_truth_by_seed[0] + rows[i].gauc_truth_by_seed[1]), 1e-12);
    EXPECT_GE(rows[i].gauc_truth_spread(), 0.0);
  }
  const auto csv = ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "variant,gauc_truth,auc_ev,gauc_ev,mae,rmse,mape,gauc_truth_spread");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_NE(ablation_table(rows).find("w/o DG"), std::string::npos);
}

TEST(RunAblation, SingleBinMakesDebiasedAndGlobalRowsEqual) {
  PipelineConfig c = small_config(3000);
  c.optimizer.epochs = 1;
  c.debias = false;
  c.ablate_variants = "DML,w/o DG";
  const auto gen = generate(c.synthetic());
  const auto rows = run_ablation(gen.interactions, gen.truth, c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].gauc_truth, rows[1].gauc_truth);
  EXPECT_EQ(rows[0].mae, rows[1].mae);
  c.ablate_variants = "DML,NOPE";
  EXPECT_ERROR_CODE(run_ablation(gen.interactions, gen.truth, c), kConfigInvalid);
}

}  // namespace
}  // namespace watchlabel
