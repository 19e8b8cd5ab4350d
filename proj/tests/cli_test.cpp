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

// Drives the watchlabel binary through std::system.

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "watchlabel/io.hpp"

namespace watchlabel {
namespace {

namespace fs = std::filesystem;

const std::string kSmall =
    " --set gen.n_users=200 --set gen.n_videos=300 --set gen.interactions_per_user=50";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("watchlabel_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of `watchlabel <args>` with --out pointing at `sub`.
  int run(const std::string& args, const std::string& sub = "out") const {
    const std::string cmd = std::string(WATCHLABEL_CLI) + " --out " + (dir_ / sub).string() +
                            " " + args + " >" + (dir_ / "stdout.txt").string() + " 2>" +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string file(const std::string& relative) const { return read_file(dir_ / relative); }
  bool exists(const std::string& relative) const { return fs::exists(dir_ / relative); }

  fs::path dir_;
};

std::size_t lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

TEST_F(Cli, GenWritesMatchingFilesDeterministically) {
  ASSERT_EQ(run("--seed 42 gen --records 5000", "a"), 0);
  ASSERT_EQ(run("--seed 42 gen --records 5000", "b"), 0);
  EXPECT_EQ(lines(file("a/interactions.csv")), 5001u);
  EXPECT_EQ(lines(file("a/truth.csv")), 5001u);
  EXPECT_EQ(file("a/interactions.csv"), file("b/interactions.csv"));
  EXPECT_EQ(file("a/truth.csv"), file("b/truth.csv"));
  ASSERT_EQ(run("--seed 43 gen --records 5000", "c"), 0);
  EXPECT_NE(file("a/interactions.csv"), file("c/interactions.csv"));
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("gen --records 0"), 2);
  EXPECT_EQ(run("--set no.such.key=1 gen"), 2);
  EXPECT_EQ(run("--config " + (dir_ / "missing.conf").string() + " gen"), 2);
  EXPECT_EQ(run("label --input " + (dir_ / "missing.csv").string()), 2);
}

TEST_F(Cli, PrintConfigEchoesResolvedValues) {
  ASSERT_EQ(run("--seed 5 --set train.epochs=3 --print-config gen --records 10"), 0);
  const auto out = file("stdout.txt") + file("stderr.txt");
  EXPECT_NE(out.find("seed = 5"), std::string::npos);
  EXPECT_NE(out.find("train.epochs = 3"), std::string::npos);
}

TEST_F(Cli, LabelColumnsAndNoDebias) {
  ASSERT_EQ(run(kSmall + " gen"), 0);
  ASSERT_EQ(run(kSmall + " label"), 0);
  const auto labeled = read_labeled(dir_ / "out/labeled.csv");
  for (const char* column : {"wpr", "wpr_d", "ev", "ev_d", "lv", "lv_d", "playing_rate"}) {
    EXPECT_TRUE(labeled.columns.contains(column)) << column;
  }
  EXPECT_EQ(labeled.records.size(), 10'000u);

  ASSERT_EQ(run(kSmall + " label --no-debias --input " + (dir_ / "out/interactions.csv").string(),
                "flat"),
            0);
  const auto flat = read_labeled(dir_ / "flat/labeled.csv");
  EXPECT_EQ(flat.columns.at("wpr_d"), flat.columns.at("wpr"));
  EXPECT_EQ(flat.columns.at("ev_d"), flat.columns.at("ev"));
}

TEST_F(Cli, SketchLabelsStayCloseToExact) {
  ASSERT_EQ(run(kSmall + " gen"), 0);
  const std::string input = " --input " + (dir_ / "out/interactions.csv").string();
  ASSERT_EQ(run(kSmall + " label" + input, "exact"), 0);
  ASSERT_EQ(run(kSmall + " label --summary sketch --eps 0.005" + input, "sketch"), 0);
  const auto a = read_labeled(dir_ / "exact/labeled.csv");
  const auto b = read_labeled(dir_ / "sketch/labeled.csv");
  const auto& x = a.columns.at("wpr_d");
  const auto& y = b.columns.at("wpr_d");
  ASSERT_EQ(x.size(), y.size());
  std::size_t differ = 0;
  for (std::size_t i = 0; i < x.size(); ++i) differ += x[i] != y[i];
  EXPECT_LE(static_cast<double>(differ) / static_cast<double>(x.size()), 0.03);
}

TEST_F(Cli, EvalWithMismatchedCheckpointExitsTwo) {
  ASSERT_EQ(run(kSmall + " gen"), 0);
  ASSERT_EQ(run(kSmall + " label --labels all"), 0);
  ASSERT_EQ(run(kSmall + " --set train.epochs=1 train --tasks ef_wpr:squared_error"), 0);
  ASSERT_EQ(run(kSmall + " label"), 0);  // default columns only
  EXPECT_EQ(run(kSmall + " eval"), 2);
  EXPECT_NE(file("stderr.txt").find("ef_wpr"), std::string::npos);
}

TEST_F(Cli, FullChainIsDeterministic) {
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(run(kSmall + " gen", sub), 0);
    ASSERT_EQ(run(kSmall + " label", sub), 0);
    ASSERT_EQ(run(kSmall + " --set train.epochs=2 train", sub), 0);
    ASSERT_EQ(run(kSmall + " eval", sub), 0);
  }
  for (const char* name : {"interactions.csv", "truth.csv", "labeled.csv", "loss_trace.csv",
                           "model.wlmd", "eval.csv"}) {
    EXPECT_EQ(file(std::string("a/") + name), file(std::string("b/") + name)) << name;
  }
  const auto report = file("a/eval.csv");
  for (const char* metric : {"auc,", "gauc,", "mae,", "rmse,", "mape,", "gauc_truth,"}) {
    EXPECT_NE(report.find(std::string("\n") + metric), std::string::npos) << metric;
  }
  // A second eval on the same checkpoint gives the same report.
  ASSERT_EQ(run(kSmall + " eval", "a"), 0);
  EXPECT_EQ(file("a/eval.csv"), report);
}

TEST_F(Cli, AblateNeedsTruth) {
  ASSERT_EQ(run(kSmall + " gen"), 0);
  fs::remove(dir_ / "out/truth.csv");
  EXPECT_EQ(run(kSmall + " ablate --variants DML"), 2);
}

}  // namespace
}  // namespace watchlabel
