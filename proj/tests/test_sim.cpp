/*
 Copyright 2026 The safempc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "safempc/safempc.hpp"
#include "safempc/scenario.hpp"

namespace safempc {
namespace {

Scenario load(const std::string& name) { return load_scenario(std::filesystem::path(SAFEMPC_SOURCE_DIR) / "scenarios" / name); }

RunLog run(const Scenario& sc, MpcMode mode, std::optional<int> steps = std::nullopt) {
  RunOptions o;
  o.mode = mode;
  o.steps = steps;
  o.record_wall_time = false;
  return run_closed_loop(sc, o);
}

std::vector<double> xs(const RunLog& log) {
  std::vector<double> out;
  for (const auto& s : log.steps) out.push_back(s.x[0]);
  return out;
}

std::string jsonl(const RunLog& log) {
  std::ostringstream os;
  write_jsonl(log, os);
  return os.str();
}

TEST(ClosedLoop, ProposedLeavesTwoOnTheToy) {
  const auto log = run(load("counterexample.toy.yaml"), MpcMode::Proposed);
  ASSERT_FALSE(log.abort_reason);
  const auto x = xs(log);
  ASSERT_GE(x.size(), 4u);
  // Storage 3 covers one step at 2 (l = 2); afterwards staying is infeasible.
  EXPECT_EQ(x[0], 2.0);
  EXPECT_EQ(x[1], 2.0);
  const auto zero = std::find(x.begin(), x.end(), 0.0);
  ASSERT_NE(zero, x.end());
  EXPECT_LE(zero - x.begin(), 3);
  EXPECT_TRUE(std::all_of(zero, x.end(), [](double v) { return v == 0.0; }));
}

TEST(ClosedLoop, WithoutStorageTheToyNeverLeavesTwo) {
  auto sc = load("counterexample.toy.yaml");
  for (int N : {3, 4, 5, 6}) {
    sc.cfg.N = N;
    const auto log = run(sc, MpcMode::ProposedWithout9j, 20);
    ASSERT_FALSE(log.abort_reason) << *log.abort_reason;
    ASSERT_EQ(log.steps.size(), 20u) << "N " << N;
    for (double v : xs(log)) ASSERT_EQ(v, 2.0) << "N " << N;
  }
}

TEST(ClosedLoop, StorageHeaderFollowsTheMode) {
  const auto sc = load("counterexample.toy.yaml");
  EXPECT_EQ(run(sc, MpcMode::Proposed, 2).header.mode, "proposed");
  const auto log = run(sc, MpcMode::ProposedWithout9j, 2);
  EXPECT_EQ(log.header.mode, "no9j");
  EXPECT_EQ(log.header.N, 3);
}

TEST(ClosedLoop, GridScenarioStaysSafe) {
  const auto sc = load("gap_grid.yaml");
  const auto log = run(sc, MpcMode::Proposed);
  ASSERT_FALSE(log.abort_reason);
  const auto v = verify_run(log, sc.verify_context());
  EXPECT_TRUE(v.passed()) << v.format();
}

TEST(ClosedLoop, DeterministicWithoutWallTime) {
  const auto sc = load("counterexample.toy.yaml");
  EXPECT_EQ(jsonl(run(sc, MpcMode::Proposed)), jsonl(run(sc, MpcMode::Proposed)));
  const auto grid = load("gap_grid.yaml");
  EXPECT_EQ(jsonl(run(grid, MpcMode::Proposed)), jsonl(run(grid, MpcMode::Proposed)));
}

TEST(ClosedLoop, StepCallbackSeesEveryStep) {
  RunOptions o;
  o.record_wall_time = false;
  int calls = 0;
  o.on_step = [&](const StepLog&) { ++calls; };
  const auto log = run_closed_loop(load("counterexample.toy.yaml"), o);
  EXPECT_EQ(calls, static_cast<int>(log.steps.size()));
}

TEST(Replay, JsonlRoundTripGivesTheSameVerdict) {
  const auto sc = load("counterexample.toy.yaml");
  const auto log = run(sc, MpcMode::Proposed);
  std::istringstream is(jsonl(log));
  const auto back = read_jsonl(is);
  EXPECT_EQ(jsonl(back), jsonl(log));
  const auto ctx = sc.verify_context();
  EXPECT_EQ(verify_run(back, ctx).format(), verify_run(log, ctx).format());
}

TEST(Replay, MalformedLinesAreRejected) {
  std::istringstream is("{\"not\": \"a header\"}\n");
  EXPECT_THROW(read_jsonl(is), ParseError);
}

TEST(Compare, TableHasOneRowPerMode) {
  const auto sc = load("counterexample.toy.yaml");
  RunOptions o;
  o.record_wall_time = false;
  const auto rows = compare_modes(sc, {MpcMode::Proposed, MpcMode::ProposedWithout9j}, o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].final_output[0], 0.0);
  EXPECT_TRUE(rows[0].steps_to_convergence);
  EXPECT_DOUBLE_EQ(rows[1].final_output[0], 2.0);
  EXPECT_FALSE(rows[1].steps_to_convergence);
  const std::string table = format_comparison(rows);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_THROW(compare_modes(sc, {MpcMode::Proposed}, o), ContractViolation);
}

TEST(Export, CarFilesForPlotting) {
  const auto sc = load("car_partially_unknown.yaml");
  const auto log = run(sc, MpcMode::Proposed, 2);
  ASSERT_EQ(log.steps.size(), 2u);
  const auto dir = std::filesystem::temp_directory_path() / "safempc_export_test";
  std::filesystem::remove_all(dir);
  export_plot_data(log, *sc.env, dir);
  std::ifstream csv(dir / "trajectory.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "t,x1,x2,x3,x4,x5,u1,u2,y1,y2,S,F_hat,F_star");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 2);
  std::ifstream geo(dir / "geometry.json");
  const auto j = nlohmann::json::parse(geo);
  EXPECT_EQ(j.at("obstacles").size(), 4u);
  EXPECT_EQ(j.at("steps").size(), 2u);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(export_plot_data(RunLog{}, *sc.env, dir), ContractViolation);
}

}  // namespace
}  // namespace safempc
