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

#include <random>

#include "safempc/costs.hpp"
#include "safempc/knowledge.hpp"
#include "safempc/reachable.hpp"

namespace safempc {
namespace {

CostConfig car_costs() {
  CostConfig c;
  c.Q = make_vec({1, 1, 1e-5, 1e-5, 1e-5}).asDiagonal();
  c.R = Mat::Identity(2, 2);
  c.P = Mat::Identity(2, 2);
  c.y_desired = make_vec({12, 1});
  c.N = 50;
  return c;
}

RegionExpr car_truth() {
  const double deg = M_PI / 180.0;
  return RegionExpr::intersection({
      RegionExpr::box(make_vec({-kInf, -kInf, -kInf, -1, -37 * deg, -10, -10 * deg}),
                      make_vec({12, 2, kInf, 36, 37 * deg, 1, 10 * deg})),
      RegionExpr::disk(make_vec({4, 0.3}), 0.51, DiskSense::Outside),
      RegionExpr::disk(make_vec({4, -0.3}), 0.51, DiskSense::Outside),
      RegionExpr::disk(make_vec({10, 1}), 1.5, DiskSense::Outside),
      RegionExpr::disk(make_vec({7, -1}), 1.0, DiskSense::Outside),
  });
}

TEST(StageCost, HandValue) {
  const auto c = car_costs();
  const Setpoint r{make_vec({12, 1, 0, 0, 0}), make_vec({0, 0})};
  // 1*1 + 1*4 + 1e-5*(9 + 16 + 1) + 1 + 4
  const double l = stage_cost(c, make_vec({11, 3, 3, 4, 1}), make_vec({1, -2}), r);
  EXPECT_NEAR(l, 10.00026, 1e-12);
}

TEST(StageCost, ZeroExactlyAtTheSetpoint) {
  const auto c = car_costs();
  const Setpoint r{make_vec({2, -1, 0.3, 0, 0.1}), make_vec({0, 0})};
  EXPECT_EQ(stage_cost(c, r.x, r.u, r), 0.0);
}

TEST(OffsetCost, NotchOffsetValue) {
  // (12 - 3.5)^2 + (1 - 0)^2
  const auto c = car_costs();
  const Setpoint r{make_vec({3.5, 0, 0, 0, 0}), make_vec({0, 0})};
  EXPECT_DOUBLE_EQ(offset_cost(c, BicycleModel().as_system(), r), 73.25);
}

TEST(TrackingCost, SumsStagesAndChecksHorizon) {
  auto c = car_costs();
  c.N = 2;
  const Setpoint r{Vec::Zero(5), Vec::Zero(2)};
  Trajectory t{{make_vec({1, 0, 0, 0, 0}), make_vec({0, 1, 0, 0, 0}), Vec::Zero(5)}, {make_vec({1, 0}), Vec::Zero(2)}};
  EXPECT_DOUBLE_EQ(tracking_cost(c, t, r), 3.0);
  c.N = 3;
  EXPECT_THROW(tracking_cost(c, t, r), ContractViolation);
}

TEST(CostConfig, RejectsIndefiniteOrMisshapedWeights) {
  auto c = car_costs();
  EXPECT_NO_THROW(c.validate(5, 2, 2));
  c.Q(2, 2) = 0.0;
  EXPECT_THROW(c.validate(5, 2, 2), ContractViolation);
  c = car_costs();
  c.R(0, 1) = 0.5;
  EXPECT_THROW(c.validate(5, 2, 2), ContractViolation);
  c = car_costs();
  EXPECT_THROW(c.validate(4, 2, 2), ContractViolation);
}

TEST(LatticeCost, QuadraticIsExact) {
  const auto c = lattice_quadratic_cost({Rational(1), Rational(1, 3)}, {Rational(2), Rational(2)}, Rational(5),
                                        make_vec({6, 0}));
  const Setpoint r{make_vec({3, 0}), Vec::Zero(2)};
  EXPECT_EQ(c.stage(make_vec({1, 3}), make_vec({1, 0}), r), Rational(4) + Rational(3) + Rational(2));
  EXPECT_EQ(c.T(r), Rational(45));
}

TEST(LatticeCost, TableLookupAndMissingEntry) {
  TabularCost t;
  t.set(make_vec({2}), make_vec({1}), Rational(1));
  const auto c = t.as_cost();
  EXPECT_EQ(c.stage(make_vec({2}), make_vec({1}), Setpoint{make_vec({0}), make_vec({0})}), Rational(1));
  EXPECT_THROW(c.stage(make_vec({2}), make_vec({0}), Setpoint{make_vec({0}), make_vec({0})}), ContractViolation);
}

TEST(SteadySetpoints, ToyManifold) {
  const auto model = lattice_shift_model(1);
  const auto region = RegionExpr::points({{make_vec({2}), make_vec({2})},
                                          {make_vec({2}), make_vec({1})},
                                          {make_vec({2}), make_vec({0})},
                                          {make_vec({1}), make_vec({0})},
                                          {make_vec({0}), make_vec({0})}});
  const auto s = steady_setpoints(model, region, 0.0);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_TRUE(same_vec(s[0].x, make_vec({0})));
  EXPECT_TRUE(same_vec(s[1].x, make_vec({2})));
}

TEST(BestReachable, FiniteTieBreaksLexicographically) {
  const auto model = lattice_increment_model(2);
  std::vector<StateInput> pts;
  for (int c : {0, 2}) pts.push_back({make_vec({static_cast<double>(c), 0}), Vec::Zero(2)});
  CostConfig cc;
  cc.P = Mat::Identity(2, 2);
  cc.y_desired = make_vec({1, 0});
  const auto best = best_reachable_setpoint(model, RegionExpr::points(pts), cc, 0.0);
  EXPECT_TRUE(same_vec(best.setpoint.x, make_vec({0, 0})));
  EXPECT_DOUBLE_EQ(best.offset, 1.0);
}

TEST(BestReachable, ContinuousCarTargetAtTheBoxCorner) {
  // With margin 0.01 the closest admissible output to (12, 1) is (11.99, 1);
  // o3 is 1.99 away from there, well clear of 1.5 + 0.01.
  const BicycleModel model;
  ReachableSearch s;
  s.param_lo = make_vec({0, -3, -M_PI, -0.6});
  s.param_hi = make_vec({12, 2, M_PI, 0.6});
  s.samples = 5000;
  const auto best = best_reachable_setpoint(model, car_truth(), car_costs(), 0.01, s);
  EXPECT_NEAR(best.setpoint.x[0], 11.99, 1e-6);
  EXPECT_NEAR(best.setpoint.x[1], 1.0, 1e-6);
  EXPECT_NEAR(best.offset, 1e-4, 1e-8);
  EXPECT_LE(best.sampled_gap, 0.0);
}

TEST(BestReachable, ContinuousRespectsObstacles) {
  // Target inside o3: the best setpoint lies on the inflated circle.
  const BicycleModel model;
  auto c = car_costs();
  c.y_desired = make_vec({10, 1});
  ReachableSearch s;
  s.param_lo = make_vec({0, -3, -M_PI, -0.6});
  s.param_hi = make_vec({12, 2, M_PI, 0.6});
  s.samples = 5000;
  const auto best = best_reachable_setpoint(model, car_truth(), c, 0.01, s);
  const double d = (best.setpoint.x.head<2>() - make_vec({10, 1})).norm();
  EXPECT_NEAR(d, 1.51, 1e-6);
  EXPECT_NEAR(best.offset, 1.51 * 1.51, 1e-5);
}

TEST(AssumptionConstants, CarLowerConstantIsSmallestWeight) {
  const BicycleModel model;
  const auto k = estimate_assumption_constants(model, car_costs(), car_truth(), make_vec({0, -3, -M_PI, -0.6}),
                                               make_vec({12, 2, M_PI, 0.6}), 10000);
  EXPECT_EQ(k.samples_used, 10000);
  EXPECT_NEAR(k.a1, 1e-5, 1e-12);
  EXPECT_NEAR(k.a2, 1.0, 1e-12);
}

TEST(AssumptionConstants, PropertyBoundsSandwichTheStageCost) {
  const BicycleModel model;
  const auto c = car_costs();
  const auto k = estimate_assumption_constants(model, c, car_truth(), make_vec({0, -3, -M_PI, -0.6}),
                                               make_vec({12, 2, M_PI, 0.6}), 2000, 5);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Setpoint r = model.steady(make_vec({6 * (1 + d(rng)), d(rng), 3 * d(rng), 0.5 * d(rng)}));
    Vec dx(5);
    for (int j = 0; j < 5; ++j) dx[j] = d(rng);
    const double l = stage_cost(c, r.x + dx, r.u, r);
    ASSERT_GE(l, k.a1 * dx.squaredNorm() * (1 - 1e-12));
    ASSERT_LE(l, k.a2 * dx.squaredNorm() * (1 + 1e-12));
  }
}

TEST(AssumptionConstants, RejectsTooFewSamples) {
  EXPECT_THROW(estimate_assumption_constants(BicycleModel(), car_costs(), car_truth(), make_vec({0, 0, 0, 0}),
                                             make_vec({1, 1, 1, 0.1}), 10),
               ContractViolation);
}

}  // namespace
}  // namespace safempc
