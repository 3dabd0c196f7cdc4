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

#include <cmath>
#include <random>

#include "safempc/dynamics.hpp"

namespace safempc {
namespace {

TEST(BicycleStep, StraightLineAtFiveMetersPerSecond) {
  const Vec x = bicycle_step(make_vec({1.5, 0, 0, 5, 0}), make_vec({0, 0}), {});
  EXPECT_TRUE(same_vec(x, make_vec({2.5, 0, 0, 5, 0})));
}

TEST(BicycleStep, ZeroStateIsFixed) {
  const Vec x = bicycle_step(Vec::Zero(5), Vec::Zero(2), {});
  EXPECT_TRUE(same_vec(x, Vec::Zero(5)));
}

TEST(BicycleStep, MatchesHandEvaluation) {
  // x = [1.5, 0, 0, 5, 0.1], u = [1, 0.05], l_r = 1.7, h = 0.2.
  const double h = 0.2, lr = 1.7, v = 5.0, beta = 0.1;
  const double expect[5] = {1.5 + h * v * std::cos(0.0 + beta), 0.0 + h * v * std::sin(0.0 + beta),
                            0.0 + h * (v / lr) * std::sin(beta), 5.0 + h * 1.0, 0.1 + h * 0.05};
  const Vec x = bicycle_step(make_vec({1.5, 0, 0, 5, 0.1}), make_vec({1, 0.05}), {});
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(x[i], expect[i], 1e-12) << "coordinate " << i;
}

TEST(BicycleStep, DimensionMismatchThrows) {
  EXPECT_THROW(bicycle_step(Vec::Zero(4), Vec::Zero(2), {}), ContractViolation);
  EXPECT_THROW(bicycle_step(Vec::Zero(5), Vec::Zero(3), {}), ContractViolation);
}

TEST(BicycleParams, RejectsNonPositive) {
  EXPECT_THROW(BicycleModel(BicycleParams{0.0, 0.2}), ContractViolation);
  EXPECT_THROW(BicycleModel(BicycleParams{1.7, -1.0}), ContractViolation);
}

TEST(BicycleStep, EulerConsistentWithHalvedStep) {
  // One step of size h versus two of size h/2 differ by O(h^2).
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec x = make_vec({d(rng), d(rng), d(rng), 5 + d(rng), 0.3 * d(rng)});
    const Vec u = make_vec({d(rng), 0.1 * d(rng)});
    double prev = 0.0;
    for (double h : {0.2, 0.1, 0.05}) {
      const BicycleParams full{1.7, h}, half{1.7, h / 2};
      const Vec a = bicycle_step(x, u, full);
      const Vec b = bicycle_step(bicycle_step(x, u, half), u, half);
      const double err = (a - b).norm();
      EXPECT_LT(err, 10.0 * h * h);
      if (prev > 0.0) {
        EXPECT_NEAR(prev / err, 4.0, 0.5);
      }
      prev = err;
    }
  }
}

TEST(BicycleModel, JacobiansMatchFiniteDifferences) {
  BicycleModel m;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = make_vec({3 * d(rng), 3 * d(rng), d(rng), 10 * d(rng), 0.6 * d(rng)});
    const Vec u = make_vec({5 * d(rng), 0.2 * d(rng)});
    Mat A, B;
    m.jacobians(x, u, A, B);
    for (int j = 0; j < 7; ++j) {
      const double h = 1e-6 * std::max(1.0, j < 5 ? std::abs(x[j]) : std::abs(u[j - 5]));
      Vec xp = x, xm = x, up = u, um = u;
      if (j < 5) {
        xp[j] += h;
        xm[j] -= h;
      } else {
        up[j - 5] += h;
        um[j - 5] -= h;
      }
      const Vec fd = (m.step(xp, up) - m.step(xm, um)) / (2 * h);
      const Vec an = j < 5 ? Vec(A.col(j)) : Vec(B.col(j - 5));
      for (int i = 0; i < 5; ++i) {
        EXPECT_LE(std::abs(fd[i] - an[i]) / std::max(1.0, std::abs(an[i])), 1e-4);
      }
    }
  }
}

TEST(ToyStep, NextStateIsTheInput) {
  EXPECT_EQ(toy_step(2, 1), 1);
  EXPECT_EQ(toy_step(2, 2), 2);
  EXPECT_EQ(toy_step(0, 0), 0);
  static_assert(toy_step(2, 0) == 0);
}

TEST(Rollout, ToyPlans) {
  const auto toy = lattice_shift_model();
  const auto a = rollout(toy, make_vec({2}), {make_vec({2}), make_vec({1}), make_vec({0})});
  const auto b = rollout(toy, make_vec({2}), {make_vec({2}), make_vec({0}), make_vec({0})});
  const double sa[] = {2, 2, 1, 0}, sb[] = {2, 2, 0, 0};
  ASSERT_EQ(a.states.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(a.states[k][0], sa[k]);
    EXPECT_EQ(b.states[k][0], sb[k]);
  }
  EXPECT_EQ(dynamic_inconsistency(toy, a), 0.0);
}

TEST(Rollout, SteadyInputKeepsState) {
  const auto bike = BicycleModel().as_system();
  const Vec x0 = make_vec({1, 2, 0.3, 0, 0.1});
  const auto t = rollout(bike, x0, {Vec::Zero(2)});
  EXPECT_TRUE(same_vec(t.states[0], x0));
  EXPECT_TRUE(same_vec(t.states[1], x0));
}

TEST(Rollout, EmptyInputsAndBadDimensionsThrow) {
  const auto toy = lattice_shift_model();
  EXPECT_THROW(rollout(toy, make_vec({2}), {}), ContractViolation);
  EXPECT_THROW(rollout(toy, make_vec({2, 1}), {make_vec({0})}), ContractViolation);
}

TEST(Rollout, ReplayingExtractedInputsIsIdentity) {
  const BicycleModel m;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<Vec> us;
  for (int k = 0; k < 20; ++k) us.push_back(make_vec({d(rng), 0.1 * d(rng)}));
  const auto t = rollout(m, make_vec({0, 0, 0, 4, 0}), us);
  const auto again = rollout(m.as_system(), t.states[0], t.inputs);
  for (std::size_t k = 0; k < t.states.size(); ++k) EXPECT_TRUE(same_vec(t.states[k], again.states[k]));
  EXPECT_LE(dynamic_inconsistency(m.as_system(), t), 1e-12);
}

TEST(SteadyResidual, Examples) {
  const auto bike = BicycleModel().as_system();
  EXPECT_EQ(steady_residual(bike, {make_vec({4, -1, 0.7, 0, 0.2}), Vec::Zero(2)}), 0.0);
  EXPECT_NEAR(steady_residual(bike, {make_vec({0, 0, 0, 5, 0}), Vec::Zero(2)}), 5.0 * 0.2, 1e-15);
  EXPECT_EQ(steady_residual(lattice_shift_model(), {make_vec({0}), make_vec({0})}), 0.0);
}

TEST(SteadyResidual, BicycleSteadyStatesHaveZeroSpeedAndInput) {
  // Sample the steady parameterization and random perturbations of it:
  // any pair with zero residual has v = 0 and u = 0.
  const BicycleModel m;
  const auto sys = m.as_system();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Setpoint r = m.steady(make_vec({10 * d(rng), 10 * d(rng), 3 * d(rng), 0.6 * d(rng)}));
    EXPECT_EQ(steady_residual(sys, r), 0.0);
    EXPECT_EQ(r.x[3], 0.0);
    EXPECT_TRUE(r.u.isZero(0.0));
    Setpoint q = r;
    q.x[3] = 0.5 * d(rng);
    q.u = make_vec({d(rng), d(rng)});
    if (steady_residual(sys, q) == 0.0) {
      EXPECT_EQ(q.x[3], 0.0);
      EXPECT_TRUE(q.u.isZero(0.0));
    }
  }
}

}  // namespace
}  // namespace safempc
