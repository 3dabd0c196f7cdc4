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

#pragma once

// Solver fixtures shared by the unit tests and the acceptance run.

#include <cmath>
#include <memory>

#include "safempc/safempc.hpp"

namespace safempc::fixtures {

struct CarFixture {
  BicycleModel model;
  std::shared_ptr<Environment> env = std::make_shared<Environment>();
  CostConfig costs;
  MpcConfig cfg;
  Vec x0 = make_vec({1.5, 0, 0, 5, 0});
  KnowledgeState k;

  /// The car world sensed from its start state.
  explicit CarFixture(int N) {
    const double deg = M_PI / 180.0;
    env->base = RegionExpr::box(make_vec({-kInf, -kInf, -kInf, -1, -37 * deg, -10, -10 * deg}),
                                make_vec({12, 2, kInf, 36, 37 * deg, 1, 10 * deg}));
    env->obstacles = {{make_vec({4, 0.3}), 0.51}, {make_vec({4, -0.3}), 0.51}, {make_vec({10, 1}), 1.5},
                      {make_vec({7, -1}), 1.0}};
    costs.Q = make_vec({1, 1, 1e-5, 1e-5, 1e-5}).asDiagonal();
    costs.R = Mat::Identity(2, 2);
    costs.P = Mat::Identity(2, 2);
    costs.y_desired = make_vec({12, 1});
    costs.N = N;
    cfg.N = N;
    k = KnowledgeState(env, cfg.lambda);
    k = update_knowledge(k, sense(k, x0, make_vec({0, 0})));
  }
};

struct PlanarFixture {
  SingleIntegrator2D model;
  std::shared_ptr<Environment> env = std::make_shared<Environment>();
  CostConfig costs;
  MpcConfig cfg;

  PlanarFixture() {
    env->base = RegionExpr::box(make_vec({0, 0, -1, -1}), make_vec({6, 6, 1, 1}));
    env->obstacles = {{make_vec({3, 3}), 1.0}};
    env->sense_radius = 20.0;
    costs.Q = Mat::Identity(2, 2);
    costs.R = Mat::Identity(2, 2);
    costs.P = Mat::Identity(2, 2);
    costs.y_desired = make_vec({5.5, 5.5});
    cfg.N = 10;
    costs.N = cfg.N;
  }

  KnowledgeState sensed_at(const Vec& x) const {
    KnowledgeState k(env, cfg.lambda);
    return update_knowledge(k, sense(k, x, Vec::Zero(2)));
  }

  bool segment_clear(const Vec& a, const Vec& b, double margin) const {
    for (int i = 0; i <= 200; ++i) {
      const Vec p = a + (b - a) * (i / 200.0);
      if (!contains_ball(env->truth(), p, Vec::Zero(2), margin)) return false;
    }
    return true;
  }

  /// Straight run to `r` at unit-box speed, then hold.
  TrajectoryPair line_plan(const Vec& x, const Vec& r) const {
    const int K = static_cast<int>(std::ceil((r - x).lpNorm<Eigen::Infinity>() / 0.9));
    std::vector<Vec> us;
    for (int k = 0; k < cfg.N; ++k) us.push_back(k < K ? Vec((r - x) / K) : Vec(Vec::Zero(2)));
    const auto sys = model.as_system();
    TrajectoryPair p;
    p.backup = rollout(sys, x, us);
    p.backup_setpoint = {p.backup.states.back(), Vec::Zero(2)};
    p.learning = p.backup;
    p.learning_setpoint = p.backup_setpoint;
    return p;
  }
};

}  // namespace safempc::fixtures
