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
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "watchlabel/datagen.hpp"
#include "watchlabel/labeling.hpp"
#include "watchlabel/learner.hpp"
#include "watchlabel/pipeline.hpp"

namespace watchlabel {
namespace {

ArchConfig small_arch(std::vector<std::size_t> outputs = {1}) {
  ArchConfig a;
  a.n_users = 5;
  a.n_videos = 7;
  a.n_bins = 3;
  a.embed_dim = 3;
  a.experts = 2;
  a.hidden = 4;
  a.task_outputs = std::move(outputs);
  return a;
}

TaskConfig task(std::string target, LossKind loss, int groups = 0) {
  TaskConfig t;
  t.name = target;
  t.target = std::move(target);
  t.loss = loss;
  t.ordinal_groups = groups;
  return t;
}

// Random rows with a real column "y", a binary column "b" and ordinal
// groups 1..5 in "g".
TrainingData random_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TrainingData d;
  for (std::size_t i = 0; i < n; ++i) {
    d.features.push_back({rng() % 6, rng() % 8, rng() % 4});  // includes fallback rows
    d.watch_time_s.push_back(1.0 + 50.0 * u(rng));
    d.duration_s.push_back(60.0);
    d.columns["y"].push_back(u(rng));
    d.columns["b"].push_back(static_cast<double>(rng() % 2));
    d.columns["g"].push_back(static_cast<double>(1 + rng() % 5));
  }
  return d;
}

std::vector<std::size_t> first_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

// Straight-line forward pass written independently of the library.
std::vector<double> naive_forward(const ModelParams& m, const Features& f) {
  const auto& a = m.arch;
  const auto& L = m.layout;
  const auto& p = m.values;
  const std::size_t de = a.embed_dim, d = 3 * de, h = a.hidden;
  std::vector<double> x;
  for (std::size_t k = 0; k < de; ++k) x.push_back(p[L.user_table + f.user * de + k]);
  for (std::size_t k = 0; k < de; ++k) x.push_back(p[L.video_table + f.video * de + k]);
  for (std::size_t k = 0; k < de; ++k) x.push_back(p[L.bin_table + f.bin * de + k]);
  std::vector<std::vector<double>> experts;
  for (std::size_t e = 0; e < a.experts; ++e) {
    std::vector<double> hid(h), out(h);
    for (std::size_t i = 0; i < h; ++i) {
      double z = p[L.expert_b1[e] + i];
      for (std::size_t j = 0; j < d; ++j) z += p[L.expert_w1[e] + i * d + j] * x[j];
      hid[i] = std::log(1.0 + std::exp(z));
    }
    for (std::size_t i = 0; i < h; ++i) {
      double z = p[L.expert_b2[e] + i];
      for (std::size_t j = 0; j < h; ++j) z += p[L.expert_w2[e] + i * h + j] * hid[j];
      out[i] = z;
    }
    experts.push_back(out);
  }
  std::vector<double> scores;
  for (std::size_t t = 0; t < a.tasks(); ++t) {
    std::vector<double> g(a.experts);
    double z = 0;
    for (std::size_t e = 0; e < a.experts; ++e) {
      double l = p[L.gate_b[t] + e];
      for (std::size_t j = 0; j < d; ++j) l += p[L.gate_w[t] + e * d + j] * x[j];
      g[e] = std::exp(l);
      z += g[e];
    }
    for (std::size_t k = 0; k < a.task_outputs[t]; ++k) {
      double s = p[L.head_b[t] + k];
      for (std::size_t i = 0; i < h; ++i) {
        double mix = 0;
        for (std::size_t e = 0; e < a.experts; ++e) mix += g[e] / z * experts[e][i];
        s += p[L.head_w[t] + k * h + i] * mix;
      }
      scores.push_back(s);
    }
  }
  return scores;
}

TEST(InitModel, DeterministicPerSeed) {
  const auto arch = small_arch();
  EXPECT_EQ(init_model(arch, 7).values, init_model(arch, 7).values);
  EXPECT_NE(init_model(arch, 7).values, init_model(arch, 8).values);
}

TEST(InitModel, ParameterCountMatchesFormula) {
  ArchConfig a;
  a.n_users = 100;
  a.n_videos = 100;
  a.n_bins = 10;
  a.embed_dim = 4;
  a.experts = 2;
  a.hidden = 8;
  a.task_outputs = {1, 1, 1};
  const std::size_t d = 3 * 4;
  const std::size_t tables = (101 + 101 + 11) * 4;     // one fallback row each
  const std::size_t experts = 2 * (8 * d + 8 + 8 * 8 + 8);
  const std::size_t gates = 3 * (2 * d + 2);
  const std::size_t heads = 3 * (8 + 1);
  EXPECT_EQ(init_model(a, 1).parameter_count(), tables + experts + gates + heads);
  EXPECT_EQ(init_model(a, 1).parameter_count(), 1309u);
}

TEST(InitModel, RejectsEmptyArchitecture) {
  auto a = small_arch();
  a.hidden = 0;
  EXPECT_ERROR_CODE(init_model(a, 1), kConfigInvalid);
  a = small_arch();
  a.experts = 0;
  EXPECT_ERROR_CODE(init_model(a, 1), kConfigInvalid);
}

TEST(InitModel, SingleExpertGateIsOne) {
  auto a = small_arch({1, 1});
  a.experts = 1;
  const auto m = init_model(a, 3);
  const auto r = forward(m, {1, 2, 0});
  EXPECT_EQ(r.gates, (std::vector<double>{1.0, 1.0}));
}

TEST(Forward, ZeroModel) {
  const auto m = zero_model(small_arch({1, 1}));
  const auto r = forward(m, {0, 0, 0});
  EXPECT_EQ(r.score(0), 0.0);
  EXPECT_EQ(r.score(1), 0.0);
  EXPECT_EQ(r.probability(1), 0.5);
}

TEST(Forward, OneHotGateSelectsExpert) {
  auto m = init_model(small_arch(), 5);
  const auto& L = m.layout;
  const std::size_t d = m.arch.input_dim();
  for (std::size_t i = 0; i < 2 * d + 2; ++i) m.values[L.gate_w[0] + i] = 0.0;
  m.values[L.gate_b[0] + 1] = 800.0;  // exp(-800) underflows to 0
  auto solo = m;
  for (std::size_t i = 0; i < m.arch.hidden * d; ++i) solo.values[L.expert_w1[0] + i] = 1e3;
  const Features f{2, 3, 1};
  const auto r = forward(m, f);
  EXPECT_EQ(r.gates[0], 0.0);
  EXPECT_EQ(r.gates[1], 1.0);
  // Changing expert 0 does not move the output.
  EXPECT_EQ(forward(solo, f).score(0), r.score(0));
}

TEST(Forward, MatchesNaiveImplementation) {
  auto a = small_arch({1, 4, 1});
  a.experts = 3;
  auto m = init_model(a, 11);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : m.values) v += 0.3 * u(rng);  // biases nonzero too
  for (int k = 0; k < 50; ++k) {
    const Features f{rng() % 6, rng() % 8, rng() % 4};
    const auto expected = naive_forward(m, f);
    const auto got = forward(m, f).scores;
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
  }
}

TEST(Forward, UnseenIdsUseFallbackRow) {
  const auto m = init_model(small_arch(), 2);
  EXPECT_EQ(forward(m, {5, 7, 3}).scores, forward(m, {999, 1234, 77}).scores);
}

TEST(Train, ConstantTargetConverges) {
  auto data = random_data(200, 1);
  std::fill(data.columns["y"].begin(), data.columns["y"].end(), 3.0);
  const std::vector<TaskConfig> tasks = {task("y", LossKind::kSquaredError)};
  auto m = init_model(small_arch(), 1);
  const auto rows = first_rows(200);
  const double initial = total_loss(m, data, rows, tasks);
  OptimizerConfig opt;
  opt.lr_dense = 0.05;
  opt.batch_size = 20;
  opt.epochs = 60;
  const auto result = train(m, data, rows, tasks, opt);
  const double final_loss = total_loss(m, data, rows, tasks);
  EXPECT_LE(final_loss, initial);
  EXPECT_LE(result.trace.back().loss, result.trace.front().loss);
  double mean_score = 0;
  for (auto r : rows) mean_score += forward(m, data.features[r]).score(0) / 200.0;
  EXPECT_NEAR(mean_score, 3.0, 0.05);
}

TEST(Train, UnitWeightsMatchPlainLogistic) {
  auto data = random_data(300, 2);
  std::fill(data.watch_time_s.begin(), data.watch_time_s.end(), 1.0);
  OptimizerConfig opt;
  opt.batch_size = 32;
  opt.epochs = 4;
  auto a = init_model(small_arch(), 3);
  auto b = a;
  const std::vector<TaskConfig> plain = {task("b", LossKind::kLogistic)};
  const std::vector<TaskConfig> weighted = {task("b", LossKind::kWeightedLogistic)};
  const auto ra = train(a, data, first_rows(300), plain, opt);
  const auto rb = train(b, data, first_rows(300), weighted, opt);
  EXPECT_EQ(loss_trace_csv(ra), loss_trace_csv(rb));
  EXPECT_EQ(a.values, b.values);
}

TEST(Train, DefaultsOnSyntheticSetDecreaseLoss) {
  PipelineConfig config;
  config.gen.n_records = 100'000;
  const auto data = generate(config.synthetic());
  const auto labels = label_records(data.interactions, config);
  const auto labeled = to_labeled(data.interactions, labels.labels);
  const auto outcome = train_pipeline(labeled, config);
  std::vector<double> totals;
  for (const auto& p : outcome.result.trace) {
    if (p.task == "total") totals.push_back(p.loss);
  }
  ASSERT_GE(totals.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) {
    EXPECT_LE(totals[e], totals[e - 1] * 1.05) << "epoch " << e + 1;
  }
  EXPECT_LT(totals[4], totals[0]);
}

TEST(Train, DeterministicForFixedSeedAndShards) {
  const auto data = random_data(400, 4);
  const std::vector<TaskConfig> tasks = {task("y", LossKind::kSquaredError),
                                         task("b", LossKind::kLogistic)};
  OptimizerConfig opt;
  opt.epochs = 3;
  opt.batch_size = 37;
  for (int threads : {1, 3}) {
    opt.threads = threads;
    auto a = init_model(small_arch({1, 1}), 9);
    auto b = a;
    train(a, data, first_rows(400), tasks, opt);
    train(b, data, first_rows(400), tasks, opt);
    EXPECT_EQ(a.values, b.values) << threads << " threads";
  }
}

TEST(Train, NonFiniteLossAborts) {
  auto data = random_data(50, 5);
  std::fill(data.columns["y"].begin(), data.columns["y"].end(), 1e300);
  auto m = init_model(small_arch(), 1);
  const std::vector<TaskConfig> tasks = {task("y", LossKind::kSquaredError)};
  EXPECT_ERROR_CODE(train(m, data, first_rows(50), tasks, OptimizerConfig{}), kNonFiniteLoss);
}

TEST(Train, MissingLabelColumn) {
  auto data = random_data(50, 6);
  auto m = init_model(small_arch(), 1);
  const std::vector<TaskConfig> absent = {task("nope", LossKind::kSquaredError)};
  EXPECT_ERROR_CODE(train(m, data, first_rows(50), absent, OptimizerConfig{}),
                    kMissingLabelColumn);
  data.columns["y"][10] = std::nan("");
  const std::vector<TaskConfig> holes = {task("y", LossKind::kSquaredError)};
  EXPECT_ERROR_CODE(train(m, data, first_rows(50), holes, OptimizerConfig{}),
                    kMissingLabelColumn);
  // Rows outside the training set may lack labels.
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  EXPECT_NO_THROW(train(m, data, rows, holes, OptimizerConfig{}));
}

TEST(GradientCheck, ZeroModelSquaredError) {
  const auto data = random_data(8, 7);
  const auto m = zero_model(small_arch());
  const std::vector<TaskConfig> tasks = {task("y", LossKind::kSquaredError)};
  EXPECT_LE(gradient_check(m, data, first_rows(8), tasks, 100), 1e-6);
}

TEST(GradientCheck, RandomModelAllLosses) {
  const auto data = random_data(8, 8);
  const std::vector<TaskConfig> tasks = {
      task("y", LossKind::kSquaredError), task("b", LossKind::kLogistic),
      task("g", LossKind::kOrdinalCumulative, 5), task("b", LossKind::kWeightedLogistic)};
  auto m = init_model(small_arch({1, 1, 4, 1}), 9);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    auto single = init_model(small_arch({tasks[t].outputs()}), 10 + t);
    const std::vector<TaskConfig> one = {tasks[t]};
    EXPECT_LE(gradient_check(single, data, first_rows(8), one, 200, t), 1e-4)
        << loss_kind_name(tasks[t].loss);
  }
  EXPECT_LE(gradient_check(m, data, first_rows(8), tasks, 300), 1e-4);
}

TEST(GradientCheck, SignFlipIsCaught) {
  const auto data = random_data(8, 9);
  const auto m = init_model(small_arch(), 4);
  const std::vector<TaskConfig> tasks = {task("b", LossKind::kLogistic)};
  const double err = gradient_check(m, data, first_rows(8), tasks, 100, 1,
                                    [](std::span<double> g) {
                                      for (double& v : g) v = -v;
                                    });
  EXPECT_NEAR(err, 2.0, 1e-3);
}

TEST(PredictWatchTime, SecondsReadoutClamps) {
  auto m = zero_model(small_arch());
  m.values[m.layout.head_b[0]] = -3.2;
  const auto tr = task(std::string(kWatchTimeColumn), LossKind::kSquaredError);
  EXPECT_EQ(predict_watch_time(m, {}, 0, tr, nullptr, 0, 60.0), 0.0);
  m.values[m.layout.head_b[0]] = 2.0;
  auto scaled = tr;
  scaled.target_scale = 10.0;
  EXPECT_DOUBLE_EQ(predict_watch_time(m, {}, 0, scaled, nullptr, 0, 60.0), 20.0);
}

TEST(PredictWatchTime, OddsPlayingRateAndProbability) {
  auto m = zero_model(small_arch());
  m.values[m.layout.head_b[0]] = 1.5;
  EXPECT_DOUBLE_EQ(predict_watch_time(m, {}, 0, task("ev", LossKind::kWeightedLogistic), nullptr,
                                      0, 60.0),
                   std::exp(1.5));
  EXPECT_DOUBLE_EQ(predict_watch_time(m, {}, 0, task("playing_rate", LossKind::kSquaredError),
                                      nullptr, 0, 60.0),
                   60.0);
  EXPECT_ERROR_CODE(
      predict_watch_time(m, {}, 0, task("ev", LossKind::kLogistic), nullptr, 0, 60.0),
      kConfigInvalid);
}

TEST(PredictWatchTime, QuantileBoundaryBelongsToLowerGroup) {
  const std::vector<double> labels = {0.25, 0.5, 0.5, 0.75, 1.0};
  const std::vector<double> watch = {1, 2, 4, 8, 16};
  const std::vector<std::size_t> strata(5, 0);
  const auto inv = WprInverse::build({0.25, 0.5, 0.75, 1.0}, labels, watch, strata, 1);
  auto m = zero_model(small_arch());
  const auto q = task("wpr", LossKind::kSquaredError);
  m.values[m.layout.head_b[0]] = 0.5;
  EXPECT_EQ(predict_watch_time(m, {}, 0, q, &inv, 0, 60.0), 2.0);
  m.values[m.layout.head_b[0]] = 0.5000001;
  EXPECT_EQ(predict_watch_time(m, {}, 0, q, &inv, 0, 60.0), 8.0);
  m.values[m.layout.head_b[0]] = -4.0;  // clamped into the first group
  EXPECT_EQ(predict_watch_time(m, {}, 0, q, &inv, 0, 60.0), 1.0);
  EXPECT_ERROR_CODE(predict_watch_time(m, {}, 0, q, nullptr, 0, 60.0), kMissingInverseMap);
}

TEST(PredictWatchTime, RepresentativeIsFilteredMedian) {
  SyntheticConfig gen;
  gen.n_records = 100'000;
  const auto data = generate(gen);
  const auto out = label_all(data.interactions, LabelConfig{});
  const auto split = split_rows(data.interactions, 0.9, 7);
  const LabelConfig label_config;
  const auto levels = label_config.partition.prefix();
  std::vector<double> labels, watch, subset;
  std::vector<std::size_t> strata;
  for (auto r : split.train) {
    const auto& rec = data.interactions[r];
    const auto b = out.bins.bin_of(rec.duration_s);
    labels.push_back(*out.labels[r].wpr_d);
    watch.push_back(rec.watch_time_s);
    strata.push_back(b);
    if (b == 3 && *out.labels[r].wpr_d == levels[7]) subset.push_back(rec.watch_time_s);
  }
  ASSERT_FALSE(subset.empty());
  std::sort(subset.begin(), subset.end());
  const double median = subset[(subset.size() + 1) / 2 - 1];

  const auto inv = WprInverse::build(std::vector<double>(levels.begin(), levels.end()), labels,
                                     watch, strata, out.bins.size());
  auto m = zero_model(small_arch());
  m.values[m.layout.head_b[0]] = 0.5 * (levels[6] + levels[7]);
  EXPECT_EQ(predict_watch_time(m, {0, 0, 3}, 0, task("wpr_d", LossKind::kSquaredError), &inv, 3,
                               60.0),
            median);
}

TEST(WprInverse, EmptyCellsBorrowNearestGroup) {
  const std::vector<double> labels = {0.25, 1.0};
  const std::vector<double> watch = {3, 40};
  const std::vector<std::size_t> strata = {0, 0};
  const auto inv = WprInverse::build({0.25, 0.5, 0.75, 1.0}, labels, watch, strata, 2);
  EXPECT_EQ(inv.representative(1, 0), 3.0);
  EXPECT_EQ(inv.representative(2, 0), 40.0);
  EXPECT_ERROR_CODE(inv.representative(0, 1), kMissingInverseMap);
  EXPECT_EQ(inv.nearest_group(0.499999), 1u);
}

TEST(RankingScore, FusedIsMeanOfTaskScores) {
  auto m = zero_model(small_arch({1, 1, 4}));
  m.values[m.layout.head_b[0]] = 0.3;
  m.values[m.layout.head_b[1]] = 2.0;
  const std::vector<TaskConfig> tasks = {task("wpr_d", LossKind::kSquaredError),
                                         task("ev_d", LossKind::kLogistic),
                                         task("or_group", LossKind::kOrdinalCumulative, 5)};
  const auto r = forward(m, {});
  const double sig = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_DOUBLE_EQ(ranking_score(r, 0, tasks[0]), 0.3);
  EXPECT_DOUBLE_EQ(ranking_score(r, 1, tasks[1]), sig);
  EXPECT_DOUBLE_EQ(ranking_score(r, 2, tasks[2]), 0.5);
  EXPECT_DOUBLE_EQ(fused_score(r, tasks), (0.3 + sig + 0.5) / 3.0);
}

TEST(LearnerInvariants, GatesSumToOne) {
  auto a = small_arch({1, 1, 1});
  a.experts = 4;
  auto m = init_model(a, 13);
  for (double& v : m.values) v *= 5.0;
  std::mt19937_64 rng(14);
  for (int k = 0; k < 200; ++k) {
    const auto r = forward(m, {rng() % 6, rng() % 8, rng() % 4});
    for (std::size_t t = 0; t < 3; ++t) {
      double sum = 0;
      for (std::size_t e = 0; e < 4; ++e) sum += r.gates[t * 4 + e];
      ASSERT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(LearnerInvariants, GradientScalesWithTaskWeight) {
  const auto data = random_data(8, 15);
  const auto m = init_model(small_arch(), 16);
  auto t = task("b", LossKind::kLogistic);
  std::vector<double> g1(m.parameter_count()), gc(m.parameter_count());
  total_loss(m, data, first_rows(8), std::span(&t, 1), g1);
  t.weight = 3.7;
  total_loss(m, data, first_rows(8), std::span(&t, 1), gc);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    ASSERT_NEAR(gc[i], 3.7 * g1[i], 1e-12 * std::max(1.0, std::abs(gc[i])));
  }
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint ck;
  ck.tasks = {task("wpr_d", LossKind::kSquaredError), task("g", LossKind::kOrdinalCumulative, 5)};
  ck.model = init_model(small_arch({1, 4}), 17);
  ck.user_vocab = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 7; ++i) ck.video_vocab.push_back("v" + std::to_string(i));
  ck.bins = DurationBins({10.0, 20.5});
  ck.build_index();
  std::stringstream buf;
  ck.save(buf);
  const auto back = Checkpoint::load(buf);
  EXPECT_EQ(back.model.values, ck.model.values);
  EXPECT_EQ(back.user_vocab, ck.user_vocab);
  EXPECT_EQ(back.video_vocab, ck.video_vocab);
  EXPECT_TRUE(std::ranges::equal(back.bins.upper_edges(), ck.bins.upper_edges()));
  ASSERT_EQ(back.tasks.size(), 2u);
  EXPECT_EQ(back.tasks[1].ordinal_groups, 5);
  EXPECT_EQ(back.tasks[1].loss, LossKind::kOrdinalCumulative);
  const Interaction probe{"c", "v4", 15.0, 3.0, 0};
  EXPECT_EQ(forward(back.model, back.features_of(probe)).scores,
            forward(ck.model, ck.features_of(probe)).scores);

  std::stringstream bad("NOPE and then some bytes");
  EXPECT_ERROR_CODE(Checkpoint::load(bad), kFormat);
}

}  // namespace
}  // namespace watchlabel
