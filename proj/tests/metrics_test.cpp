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
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "watchlabel/datagen.hpp"
#include "watchlabel/labeling.hpp"
#include "watchlabel/metrics.hpp"
#include "watchlabel/pipeline.hpp"

namespace watchlabel {
namespace {

double brute_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& l,
                 const std::vector<std::size_t>& rows) {
  double hits = 0, pairs = 0;
  for (auto i : rows) {
    if (!l[i]) continue;
    for (auto j : rows) {
      if (l[j]) continue;
      pairs += 1;
      hits += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return hits / pairs;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

double brute_gauc(const std::vector<double>& s, const std::vector<std::uint8_t>& l,
                  const std::vector<std::size_t>& users) {
  const auto n_users = *std::max_element(users.begin(), users.end()) + 1;
  double num = 0, den = 0;
  for (std::size_t u = 0; u < n_users; ++u) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (users[i] == u) rows.push_back(i);
    }
    const auto pos = std::count_if(rows.begin(), rows.end(), [&](std::size_t i) { return l[i]; });
    if (pos == 0 || pos == static_cast<long>(rows.size())) continue;
    num += static_cast<double>(rows.size()) * brute_auc(s, l, rows);
    den += static_cast<double>(rows.size());
  }
  return num / den;
}

struct RandomCase {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> users;
};

RandomCase random_case(std::mt19937_64& rng, std::size_t n, std::size_t users) {
  RandomCase c;
  for (std::size_t i = 0; i < n; ++i) {
    c.scores.push_back(static_cast<double>(rng() % 50) / 7.0);  // plenty of ties
    c.labels.push_back(static_cast<std::uint8_t>(rng() % 2));
    c.users.push_back(rng() % users);
  }
  c.labels[0] = 1;
  c.labels[1] = 0;
  return c;
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}), 0.5);
  EXPECT_ERROR_CODE(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}),
                    kDegenerateLabels);
}

TEST(Auc, MatchesPairwiseCount) {
  std::mt19937_64 rng(1);
  const auto c = random_case(rng, 1000, 1);
  EXPECT_NEAR(auc(c.scores, c.labels), brute_auc(c.scores, c.labels, all_rows(1000)), 1e-12);
}

TEST(Gauc, SingleUserEqualsAuc) {
  std::mt19937_64 rng(2);
  const auto c = random_case(rng, 300, 1);
  const auto g = gauc(c.scores, c.labels, c.users);
  EXPECT_NEAR(g.gauc, auc(c.scores, c.labels), 1e-12);
  EXPECT_EQ(g.users_evaluated, 1u);
}

TEST(Gauc, ImpressionWeighting) {
  const std::vector<double> s = {4, 3, 2, 1, 5, 5};
  const std::vector<std::uint8_t> l = {1, 1, 0, 0, 1, 0};
  const std::vector<std::size_t> u = {0, 0, 0, 0, 1, 1};
  EXPECT_NEAR(gauc(s, l, u).gauc, 5.0 / 6.0, 1e-15);
}

TEST(Gauc, SkipsSingleClassUsers) {
  const std::vector<double> s = {1, 2, 3, 4, 5};
  const std::vector<std::uint8_t> l = {0, 1, 1, 1, 0};
  const std::vector<std::size_t> u = {0, 0, 1, 1, 2};
  const auto g = gauc(s, l, u);
  EXPECT_DOUBLE_EQ(g.gauc, 1.0);
  EXPECT_EQ(g.users_evaluated, 1u);
  EXPECT_EQ(g.users_skipped, 2u);
  EXPECT_EQ(g.records_evaluated, 2u);
  EXPECT_EQ(g.records_skipped, 3u);
  EXPECT_ERROR_CODE(gauc(s, std::vector<std::uint8_t>(5, 1), u), kNoEligibleUsers);
}

TEST(Gauc, SyntheticEvalSplitMatchesPairwiseCount) {
  SyntheticConfig gen;
  gen.n_records = 100'000;
  const auto data = generate(gen);
  const auto split = split_rows(data.interactions, 0.9, 7);
  Dataset eval;
  for (auto i : split.eval) eval.push_back(data.interactions[i]);
  const auto bins = make_duration_bins(eval, 1, 1);
  const auto summaries = GroupedSummaries::build(eval, bins, {});
  const auto ev = label_binary(eval, 50.0, GroupKind::kGlobal, summaries, 1);
  std::vector<double> scores;
  for (auto i : split.eval) scores.push_back(data.truth.m[i]);
  const auto users = user_group_ids(eval);
  EXPECT_NEAR(gauc(scores, ev, users).gauc, brute_gauc(scores, ev, users), 1e-12);
}

TEST(RegressionMetrics, Examples) {
  const std::vector<double> y = {10, 20};
  const auto exact = regression_metrics(y, y);
  EXPECT_EQ(exact.mae, 0.0);
  EXPECT_EQ(exact.rmse, 0.0);
  EXPECT_EQ(exact.mape, 0.0);
  const auto m = regression_metrics(std::vector<double>{12, 16}, y);
  EXPECT_DOUBLE_EQ(m.mae, 3.0);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(10.0));
  EXPECT_DOUBLE_EQ(m.mape, 0.2);
  EXPECT_ERROR_CODE(regression_metrics(std::vector<double>{}, std::vector<double>{}), kEmptyInput);
}

TEST(RegressionMetrics, ZerosExcludedFromMapeOnly) {
  const auto m = regression_metrics(std::vector<double>{5, 12}, std::vector<double>{0, 10});
  EXPECT_DOUBLE_EQ(m.mae, 3.5);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt((25.0 + 4.0) / 2.0));
  EXPECT_DOUBLE_EQ(m.mape, 0.2);
  EXPECT_EQ(m.mape_skipped, 1u);
  EXPECT_EQ(m.evaluated, 2u);
}

TEST(KsDistance, Examples) {
  const std::vector<double> a = {0.1, 0.5, 0.5, 0.9};
  std::vector<double> shuffled = {0.5, 0.9, 0.1, 0.5};
  EXPECT_EQ(ks_distance(a, shuffled), 0.0);
  EXPECT_EQ(ks_distance(std::vector<double>(7, 0.25), std::vector<double>(3, 1.0)), 1.0);
  EXPECT_ERROR_CODE(ks_distance(a, std::vector<double>{}), kEmptyGroup);
}

TEST(KsDistance, DebiasedLabelsAcrossLargeBins) {
  // Two 5000-record duration bins with very different watch-time scales.
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> dist(2.0, 0.8);
  Dataset d;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 5000; ++i) {
      const double duration = b == 0 ? 30.0 : 500.0;
      const double watch = std::min(duration, std::round(dist(rng) * (b == 0 ? 1.0 : 8.0)));
      d.push_back({"u" + std::to_string(i % 50), "v", duration, watch, d.size()});
    }
  }
  const auto labels = label_wpr_debiased(d, LabelConfig{}.partition, DurationBins({30.0}));
  const std::vector<double> a(labels.begin(), labels.begin() + 5000);
  const std::vector<double> b(labels.begin() + 5000, labels.end());
  EXPECT_LE(ks_distance(a, b), 0.02);
}

TEST(MetricInvariants, RandomizedAgainstBruteForce) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 1999;
    auto c = random_case(rng, n, 1 + rng() % 40);
    const auto a = auc(c.scores, c.labels);
    EXPECT_NEAR(a, brute_auc(c.scores, c.labels, all_rows(n)), 1e-12);
    // Strictly increasing transform.
    std::vector<double> t(n);
    std::transform(c.scores.begin(), c.scores.end(), t.begin(),
                   [](double v) { return std::exp(3.0 * v) - 7.0; });
    EXPECT_NEAR(auc(t, c.labels), a, 1e-12);
    try {
      EXPECT_NEAR(gauc(c.scores, c.labels, c.users).gauc, brute_gauc(c.scores, c.labels, c.users),
                  1e-12);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNoEligibleUsers);
    }
    std::vector<double> truth(n);
    for (auto& v : truth) v = static_cast<double>(rng() % 100);
    const auto m = regression_metrics(c.scores, truth);
    EXPECT_GE(m.rmse + 1e-12, m.mae);
    double mae = 0, mse = 0, mape = 0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::abs(c.scores[i] - truth[i]);
      mae += e;
      mse += e * e;
      if (truth[i] > 0) {
        mape += e / truth[i];
        ++pos;
      }
    }
    EXPECT_NEAR(m.mae, mae / n, 1e-12);
    EXPECT_NEAR(m.rmse, std::sqrt(mse / n), 1e-12);
    if (pos > 0) EXPECT_NEAR(m.mape, mape / pos, 1e-12);
    // KS against a direct CDF sweep.
    const std::vector<double> x(c.scores.begin(), c.scores.begin() + n / 2 + 1);
    const std::vector<double> y(truth.begin(), truth.end());
    const auto cdf = [](const std::vector<double>& v, double probe) {
      return static_cast<double>(std::count_if(v.begin(), v.end(),
                                               [&](double z) { return z <= probe; })) /
             static_cast<double>(v.size());
    };
    double ks = 0;
    for (const auto* side : {&x, &y}) {
      for (double probe : *side) ks = std::max(ks, std::abs(cdf(x, probe) - cdf(y, probe)));
    }
    EXPECT_NEAR(ks_distance(x, y), ks, 1e-12);
  }
}

TEST(EvalReport, CsvRows) {
  EvalReport r;
  r.auc = 0.75;
  r.extra.push_back({"gauc_truth", 0.6, 10, 2});
  const auto csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,value,n_evaluated,n_skipped");
  EXPECT_NE(csv.find("gauc_truth,"), std::string::npos);
  EXPECT_NE(r.to_table().find("auc"), std::string::npos);
}

}  // namespace
}  // namespace watchlabel
