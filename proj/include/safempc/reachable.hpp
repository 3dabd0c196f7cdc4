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

// Best reachable setpoint over a continuous region: minimize the offset
// cost over the steady parameterization, one NLP per convex branch, started
// from several random points, then cross-checked by dense sampling.

#include <random>
#include <vector>

#include "safempc/costs.hpp"
#include "safempc/knowledge.hpp"
#include "safempc/nlp.hpp"

namespace safempc {

struct ReachableSearch {
  /// Sampling box for starts and for the dense cross-check (needed because
  /// the region may be unbounded in some parameters, e.g. heading).
  Vec param_lo;
  Vec param_hi;
  int starts = 8;
  int samples = 20000;
  std::uint64_t seed = 1;
  SolverOptions solver{1e-9, 1e-8, 30, 300, 10.0, 10.0, 1e12, 10};
};

namespace detail {

/// NLP over steady parameters for one branch; nullopt when the branch cannot
/// host a steady pair (input box or fixed state coordinates too tight).
template <DifferentiableModel M>
std::optional<NlpSpec> reachable_spec(const M& model, const ConvexBranch& b, const CostConfig& c, double lambda) {
  const int n = model.state_dim();
  const int np = model.steady_param_dim();
  const auto idx = model.steady_param_state_index();
  const Setpoint r0 = model.steady(Vec::Zero(np));
  const Mat J = model.steady_state_jacobian();
  const Mat C = model.output_state_jacobian();

  NlpSpec s;
  s.n = np;
  s.blocks = {{"p", 0, np}};
  s.lower = Vec::Constant(np, -kInf);
  s.upper = Vec::Constant(np, kInf);
  std::vector<bool> free(static_cast<std::size_t>(n), false);
  for (int j = 0; j < np; ++j) {
    const int i = idx[static_cast<std::size_t>(j)];
    free[static_cast<std::size_t>(i)] = true;
    s.lower[j] = b.lower[i] + lambda;
    s.upper[j] = b.upper[i] - lambda;
    if (s.lower[j] > s.upper[j]) return std::nullopt;
  }
  for (int i = 0; i < n; ++i) {
    if (free[static_cast<std::size_t>(i)]) continue;
    if (r0.x[i] - b.lower[i] < lambda || b.upper[i] - r0.x[i] < lambda) return std::nullopt;
  }
  for (Eigen::Index i = 0; i < r0.u.size(); ++i) {
    if (r0.u[i] - b.lower[n + i] < lambda || b.upper[n + i] - r0.u[i] < lambda) return std::nullopt;
  }

  std::vector<OutputDisk> disks = b.outside;
  disks.insert(disks.end(), b.inside.begin(), b.inside.end());
  s.num_ineq = static_cast<int>(disks.size());
  // Coordinate value and its parameter gradient (u coordinates are fixed).
  auto coord = [model, J, n, np](const Vec& p, int i, Vec* g) {
    const Setpoint r = model.steady(p);
    if (g) *g = i < n ? Vec(J.row(i).transpose()) : Vec(Vec::Zero(np));
    return i < n ? r.x[i] : r.u[i - n];
  };
  s.objective = [model, C, c](const Vec& p, Vec* g) {
    const Setpoint r = model.steady(p);
    const Vec e = C * r.x - c.y_desired;
    if (g) *g = 2.0 * model.steady_state_jacobian().transpose() * (C.transpose() * (c.P * e));
    return e.dot(c.P * e);
  };
  s.constraints = [disks, coord, lambda](const Vec& p, Vec& eq, Vec& ineq) {
    eq.resize(0);
    ineq.resize(static_cast<Eigen::Index>(disks.size()));
    for (std::size_t k = 0; k < disks.size(); ++k) {
      const auto& d = disks[k];
      const double dx = coord(p, d.coords[0], nullptr) - d.center[0];
      const double dy = coord(p, d.coords[1], nullptr) - d.center[1];
      const double d2 = dx * dx + dy * dy;
      ineq[static_cast<Eigen::Index>(k)] = d.sense == DiskSense::Outside
                                               ? (d.radius + lambda) * (d.radius + lambda) - d2
                                               : d2 - (d.radius - lambda) * (d.radius - lambda);
    }
  };
  s.constraint_vjp = [disks, coord, np](const Vec& p, const Vec&, const Vec& w, Vec& out) {
    out = Vec::Zero(np);
    for (std::size_t k = 0; k < disks.size(); ++k) {
      const auto& d = disks[k];
      Vec g0, g1;
      const double dx = coord(p, d.coords[0], &g0) - d.center[0];
      const double dy = coord(p, d.coords[1], &g1) - d.center[1];
      const double sign = d.sense == DiskSense::Outside ? -1.0 : 1.0;
      out += w[static_cast<Eigen::Index>(k)] * sign * 2.0 * (dx * g0 + dy * g1);
    }
  };
  return s;
}

}  // namespace detail

/// Continuous counterpart of the finite best_reachable_setpoint. The
/// sampled_gap is (optimizer offset) - (best sampled offset): positive when
/// sampling found something better, in which case the sample is returned.
template <DifferentiableModel M>
ReachableSetpoint best_reachable_setpoint(const M& model, const RegionExpr& region, const CostConfig& c,
                                          double lambda, const ReachableSearch& search) {
  const int np = model.steady_param_dim();
  require_dim(search.param_lo, np, "param_lo");
  require_dim(search.param_hi, np, "param_hi");
  if (search.starts < 1 || search.samples < 1) throw ContractViolation("best_reachable_setpoint: need starts and samples");
  const SystemModel sys = model.as_system();
  std::mt19937_64 rng(search.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&]() {
    Vec p(np);
    for (int j = 0; j < np; ++j) p[j] = search.param_lo[j] + (search.param_hi[j] - search.param_lo[j]) * unit(rng);
    return p;
  };

  std::optional<Setpoint> opt_best;
  double opt_val = kInf;
  for (const auto& b : to_branches(region, model.state_dim() + model.input_dim())) {
    // Solve with a little extra margin so rounding at the bounds and the
    // solver's feasibility tolerance do not fail the exact admissibility test.
    const auto spec = detail::reachable_spec(model, b, c, lambda + 1e-7);
    if (!spec) continue;
    for (int k = 0; k < search.starts; ++k) {
      const Vec z0 = draw().cwiseMax(spec->lower).cwiseMin(spec->upper);
      const SolveReport rep = solve_nlp(*spec, z0, search.solver);
      if (rep.status == SolveStatus::Failed) continue;
      const Setpoint r = model.steady(rep.point);
      if (!is_steady_admissible(sys, r, region, lambda)) continue;
      const double v = offset_cost(c, sys, r);
      if (v < opt_val) {
        opt_val = v;
        opt_best = r;
      }
    }
  }

  std::optional<Setpoint> sample_best;
  double sample_val = kInf;
  for (int k = 0; k < search.samples; ++k) {
    const Setpoint r = model.steady(draw());
    if (!is_steady_admissible(sys, r, region, lambda)) continue;
    const double v = offset_cost(c, sys, r);
    if (v < sample_val) {
      sample_val = v;
      sample_best = r;
    }
  }
  if (!opt_best && !sample_best) throw NoSteadySetpoint("best_reachable_setpoint: no admissible steady setpoint found");
  if (!opt_best) return {*sample_best, sample_val, kInf};
  if (!sample_best) return {*opt_best, opt_val, -kInf};
  const double gap = opt_val - sample_val;
  return gap > 0.0 ? ReachableSetpoint{*sample_best, sample_val, gap} : ReachableSetpoint{*opt_best, opt_val, gap};
}

}  // namespace safempc
