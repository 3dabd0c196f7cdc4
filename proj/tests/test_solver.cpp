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

#include "safempc/safempc.hpp"
#include "fixtures.hpp"

namespace safempc {
namespace {

using fixtures::CarFixture;
using fixtures::PlanarFixture;

NlpSpec disk_projection() {
  // min (x-2)^2 + (y-1)^2  s.t.  x^2 + y^2 <= 1
  NlpSpec s;
  s.n = 2;
  s.blocks = {{"z", 0, 2}};
  s.lower = Vec::Constant(2, -5);
  s.upper = Vec::Constant(2, 5);
  s.num_ineq = 1;
  s.objective = [](const Vec& z, Vec* g) {
    if (g) *g = make_vec({2 * (z[0] - 2), 2 * (z[1] - 1)});
    return (z[0] - 2) * (z[0] - 2) + (z[1] - 1) * (z[1] - 1);
  };
  s.constraints = [](const Vec& z, Vec& eq, Vec& in) {
    eq.resize(0);
    in = make_vec({z.squaredNorm() - 1});
  };
  s.constraint_vjp = [](const Vec& z, const Vec&, const Vec& w, Vec& out) { out = 2 * w[0] * z; };
  return s;
}

TEST(Nlp, InequalityOptimumIsTheRadialProjection) {
  const auto rep = solve_nlp(disk_projection(), make_vec({0, 0}));
  ASSERT_NE(rep.status, SolveStatus::Failed);
  const Vec expect = make_vec({2, 1}) / std::sqrt(5.0);
  EXPECT_NEAR(rep.point[0], expect[0], 1e-5);
  EXPECT_NEAR(rep.point[1], expect[1], 1e-5);
  EXPECT_LE(rep.max_violation(), 1e-6);
}

TEST(Nlp, EqualityConstrainedMinimum) {
  // min x + y  s.t.  x^2 + y^2 = 2  ->  (-1, -1)
  NlpSpec s;
  s.n = 2;
  s.blocks = {{"z", 0, 2}};
  s.lower = Vec::Constant(2, -3);
  s.upper = Vec::Constant(2, 3);
  s.num_eq = 1;
  s.objective = [](const Vec& z, Vec* g) {
    if (g) *g = make_vec({1, 1});
    return z[0] + z[1];
  };
  s.constraints = [](const Vec& z, Vec& eq, Vec& in) {
    eq = make_vec({z.squaredNorm() - 2});
    in.resize(0);
  };
  s.constraint_vjp = [](const Vec& z, const Vec& w, const Vec&, Vec& out) { out = 2 * w[0] * z; };
  const auto rep = solve_nlp(s, make_vec({0.5, -0.2}));
  ASSERT_NE(rep.status, SolveStatus::Failed);
  EXPECT_NEAR(rep.point[0], -1, 1e-5);
  EXPECT_NEAR(rep.point[1], -1, 1e-5);
}

TEST(Nlp, ActiveBoundsAreRespectedExactly) {
  auto s = disk_projection();
  s.num_ineq = 0;
  s.constraints = nullptr;
  s.constraint_vjp = nullptr;
  s.upper = make_vec({1.5, 0.25});
  const auto rep = solve_nlp(s, make_vec({0, 0}));
  EXPECT_EQ(rep.point[0], 1.5);
  EXPECT_EQ(rep.point[1], 0.25);
}

TEST(Nlp, StartOutsideBoundsIsRejected) {
  EXPECT_THROW(solve_nlp(disk_projection(), make_vec({6, 0})), ContractViolation);
}

TEST(Nlp, GradientCheckFlagsAWrongGradient) {
  auto s = disk_projection();
  EXPECT_LT(check_gradients(s, make_vec({0.3, -0.7})).max_deviation(), 1e-6);
  s.constraint_vjp = [](const Vec& z, const Vec&, const Vec& w, Vec& out) { out = w[0] * z; };
  EXPECT_GT(check_gradients(s, make_vec({0.3, -0.7})).jacobian_deviation, 0.1);
}

// ─── Car transcription ──────────────────────────────────────────────────────

TEST(Transcription, CarGradientsMatchCentralDifferences) {
  CarFixture f(50);
  const auto hint = braking_plan(f.model, f.k.safe(), f.x0, f.cfg.N);
  const ContinuousTranscription<BicycleModel> tr(f.model, f.k, f.cfg, f.costs, f.x0, 80.0, hint);
  const Vec base = tr.pack(hint);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.2);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vec z = base;
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] += noise(rng);
    z = z.cwiseMax(tr.spec().lower).cwiseMin(tr.spec().upper);
    worst = std::max(worst, check_gradients(tr.spec(), z).max_deviation());
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Transcription, PackUnpackRoundTrip) {
  CarFixture f(10);
  const auto hint = braking_plan(f.model, f.k.safe(), f.x0, f.cfg.N);
  const ContinuousTranscription<BicycleModel> tr(f.model, f.k, f.cfg, f.costs, f.x0, std::nullopt, hint);
  const auto back = tr.unpack(tr.pack(hint));
  ASSERT_EQ(back.backup.inputs.size(), hint.backup.inputs.size());
  for (std::size_t i = 0; i < hint.backup.inputs.size(); ++i) {
    EXPECT_LT((back.backup.inputs[i] - hint.backup.inputs[i]).norm(), 1e-15);
    EXPECT_LT((back.backup.states[i + 1] - hint.backup.states[i + 1]).norm(), 1e-12);
  }
  EXPECT_TRUE(same_vec(back.backup_setpoint.x, hint.backup_setpoint.x));
}

TEST(Transcription, ObjectiveMatchesThePairObjective) {
  CarFixture f(10);
  const auto hint = braking_plan(f.model, f.k.safe(), f.x0, f.cfg.N);
  const ContinuousTranscription<BicycleModel> tr(f.model, f.k, f.cfg, f.costs, f.x0, std::nullopt, hint);
  const auto ce = make_evaluator(f.costs, f.model.as_system());
  EXPECT_NEAR(tr.spec().objective(tr.pack(hint), nullptr), pair_objective(ce, f.cfg, hint), 1e-9);
}

// ─── Single integrator: feasible-monotone solves and a grid oracle ──────────

TEST(Solver, FeasibleMonotoneFromRandomFeasibleStarts) {
  PlanarFixture f;
  const auto sys = f.model.as_system();
  const auto ce = make_evaluator(f.costs, sys);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(0.2, 5.8);
  int tested = 0;
  for (int attempt = 0; tested < 100 && attempt < 10000; ++attempt) {
    const Vec x = make_vec({pos(rng), pos(rng)});
    const Vec r = make_vec({pos(rng), pos(rng)});
    if ((r - x).lpNorm<Eigen::Infinity>() > 0.9 * (f.cfg.N - 1)) continue;
    if (!f.segment_clear(x, r, 0.05)) continue;
    const auto k = f.sensed_at(x);
    const auto pair = f.line_plan(x, r);
    const double bound = pair_F(ce, f.cfg, pair) + 0.5;
    if (!check_pair(sys, k, f.cfg, ce, x, pair, bound, 1e-9).ok) continue;
    const ContinuousTranscription<SingleIntegrator2D> tr(f.model, k, f.cfg, f.costs, x, bound, pair);
    const Vec z0 = tr.pack(pair);
    const double f0 = tr.spec().objective(z0, nullptr);
    const auto rep = solve_nlp(tr.spec(), z0, f.cfg.solver);
    ASSERT_NE(rep.status, SolveStatus::Failed) << "attempt " << attempt;
    ASSERT_LE(rep.max_violation(), f.cfg.solver.feas_tol) << "attempt " << attempt;
    ASSERT_LE(rep.objective, f0 + 1e-12) << "attempt " << attempt;
    ++tested;
  }
  EXPECT_EQ(tested, 100);
}

TEST(Solver, ReachableSetpointAgreesWithGridEnumeration) {
  // Target 0.2 inside the obstacle: the best admissible output lies on the
  // circle of radius 1 + lambda, at distance 0.81 from the target.
  PlanarFixture f;
  f.costs.y_desired = make_vec({3, 3.2});
  const auto sys = f.model.as_system();
  const double lambda = f.cfg.lambda;
  ReachableSearch s;
  s.param_lo = make_vec({0, 0});
  s.param_hi = make_vec({6, 6});
  const auto best = best_reachable_setpoint(f.model, f.env->truth(), f.costs, lambda, s);

  double grid_min = kInf;
  for (int i = 0; i <= 120; ++i) {
    for (int j = 0; j <= 120; ++j) {
      const Setpoint r{make_vec({0.05 * i, 0.05 * j}), Vec::Zero(2)};
      if (is_steady_admissible(sys, r, f.env->truth(), lambda)) grid_min = std::min(grid_min, offset_cost(f.costs, sys, r));
    }
  }
  EXPECT_NEAR(best.offset, 0.81 * 0.81, 1e-6);
  EXPECT_LE(best.offset, grid_min + 1e-12);
  // Grid points lie within 0.05 * sqrt(2) / 2 of the circle's best point.
  EXPECT_LE(grid_min - best.offset, 2 * 0.81 * 0.036 + 0.036 * 0.036);
}

TEST(Solver, UnconstrainedTargetIsReachedByTheBaseline) {
  // Open box, no obstacle in the way: the baseline optimum parks near y_d
  // (the small tracking weight pulls it back a little toward x).
  PlanarFixture f;
  f.env->obstacles.clear();
  f.cfg.mode = MpcMode::Baseline;
  f.costs.y_desired = make_vec({2, 1});
  const Vec x = make_vec({1, 1});
  const auto k = f.sensed_at(x);
  const auto warm = f.line_plan(x, x);
  const auto out = control_step(f.model, k, f.cfg, f.costs, initial_storage(f.cfg), x, warm);
  EXPECT_NEAR(out.solution.pair.backup_setpoint.x[0], 2, 0.05);
  EXPECT_LE(out.solution.pair.backup_setpoint.x[0], 2.0);
  EXPECT_NEAR(out.solution.pair.backup_setpoint.x[1], 1, 1e-6);
  EXPECT_GT(out.u[0], 0.0);
}

}  // namespace
}  // namespace safempc
