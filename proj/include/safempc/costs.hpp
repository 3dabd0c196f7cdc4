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

// Stage, tracking and offset costs.
//
// Continuous scenarios use quadratic costs in double precision. Finite
// scenarios use DiscreteCost, an exact rational cost model that is either a
// lookup table or a quadratic form with rational weights.

#include <Eigen/Eigenvalues>

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "safempc/knowledge.hpp"
#include "safempc/rational.hpp"

namespace safempc {

struct CostConfig {
  Mat Q;
  Mat R;
  Mat P;
  Vec y_desired;
  int N = 1;

  void validate(int state_dim, int input_dim, int output_dim) const {
    auto spd = [](const Mat& M, int n, const char* name) {
      if (M.rows() != n || M.cols() != n) {
        throw ContractViolation(std::string(name) + ": expected " + std::to_string(n) + "x" + std::to_string(n));
      }
      if (!M.isApprox(M.transpose(), 1e-12)) throw ContractViolation(std::string(name) + ": not symmetric");
      Eigen::SelfAdjointEigenSolver<Mat> es(M);
      if (!(es.eigenvalues().minCoeff() > 0.0)) throw ContractViolation(std::string(name) + ": not positive definite");
    };
    spd(Q, state_dim, "Q");
    spd(R, input_dim, "R");
    spd(P, output_dim, "P");
    require_dim(y_desired, output_dim, "y_desired");
    if (N < 1) throw ContractViolation("horizon N must be >= 1");
  }
};

/// ||x - x_s||_Q^2 + ||u - u_s||_R^2
inline double stage_cost(const CostConfig& c, const Vec& x, const Vec& u, const Setpoint& r) {
  require_dim(x, c.Q.rows(), "stage_cost state");
  require_dim(u, c.R.rows(), "stage_cost input");
  const Vec dx = x - r.x;
  const Vec du = u - r.u;
  return dx.dot(c.Q * dx) + du.dot(c.R * du);
}

/// Sum of stage costs over the horizon. Terminal equality mode: the terminal
/// cost is identically zero (x_N = x_s is a constraint, not a cost).
inline double tracking_cost(const CostConfig& c, const Trajectory& traj, const Setpoint& r) {
  if (traj.horizon() != c.N) {
    throw ContractViolation("tracking_cost: trajectory horizon " + std::to_string(traj.horizon()) +
                            " differs from N=" + std::to_string(c.N));
  }
  if (traj.states.size() != traj.inputs.size() + 1) throw ContractViolation("tracking_cost: malformed trajectory");
  double v = 0.0;
  for (int k = 0; k < traj.horizon(); ++k) v += stage_cost(c, traj.states[k], traj.inputs[k], r);
  return v;
}

/// ||h(r) - y_d||_P^2
inline double offset_cost(const CostConfig& c, const SystemModel& model, const Setpoint& r) {
  const Vec e = model.output(r.x, r.u) - c.y_desired;
  return e.dot(c.P * e);
}

// ─── Double-valued view used by plan checks and log verification ────────────

struct CostEvaluator {
  std::function<double(const Vec& x, const Vec& u, const Setpoint& r)> stage;
  std::function<double(const Setpoint& r)> offset;
  std::function<double(const Vec& x, const Setpoint& r)> terminal;

  double V(const Trajectory& t, const Setpoint& r) const {
    double v = 0.0;
    for (int k = 0; k < t.horizon(); ++k) v += stage(t.states[static_cast<std::size_t>(k)], t.inputs[static_cast<std::size_t>(k)], r);
    return v + (terminal ? terminal(t.states.back(), r) : 0.0);
  }
  double T(const Setpoint& r) const { return offset(r); }
};

inline CostEvaluator make_evaluator(const CostConfig& c, const SystemModel& model) {
  return {[c](const Vec& x, const Vec& u, const Setpoint& r) { return stage_cost(c, x, u, r); },
          [c, model](const Setpoint& r) { return offset_cost(c, model, r); }, nullptr};
}

// ─── Exact costs for finite scenarios ───────────────────────────────────────

struct DiscreteCost {
  std::function<Rational(const Vec& x, const Vec& u, const Setpoint& r)> stage;
  /// Offset cost T(r); identically zero when unset.
  std::function<Rational(const Setpoint& r)> offset;
  /// Terminal cost V_f(x, r); identically zero when unset.
  std::function<Rational(const Vec& x, const Setpoint& r)> terminal;

  Rational T(const Setpoint& r) const { return offset ? offset(r) : Rational(0); }
  Rational Vf(const Vec& x, const Setpoint& r) const { return terminal ? terminal(x, r) : Rational(0); }
};

inline CostEvaluator make_evaluator(const DiscreteCost& c) {
  CostEvaluator e;
  e.stage = [c](const Vec& x, const Vec& u, const Setpoint& r) { return c.stage(x, u, r).to_double(); };
  e.offset = [c](const Setpoint& r) { return c.T(r).to_double(); };
  if (c.terminal) e.terminal = [c](const Vec& x, const Setpoint& r) { return c.Vf(x, r).to_double(); };
  return e;
}

inline std::int64_t to_int(double v) {
  const auto i = static_cast<std::int64_t>(v);
  if (static_cast<double>(i) != v) throw ContractViolation("finite scenarios need integer-valued coordinates");
  return i;
}

/// Lookup-table stage cost, independent of the setpoint.
struct TabularCost {
  std::map<std::vector<double>, Rational> table;
  std::map<std::vector<double>, Rational> terminal_table;  ///< key (x, r.x, r.u)

  void set(const Vec& x, const Vec& u, Rational v) {
    if (v < Rational(0)) throw ContractViolation("TabularCost: negative entry");
    table[RegionExpr::key(x, u)] = v;
  }
  Rational stage(const Vec& x, const Vec& u) const {
    auto it = table.find(RegionExpr::key(x, u));
    if (it == table.end()) throw ContractViolation("TabularCost: no entry for the requested pair");
    return it->second;
  }
  DiscreteCost as_cost() const {
    DiscreteCost c;
    c.stage = [t = *this](const Vec& x, const Vec& u, const Setpoint&) { return t.stage(x, u); };
    if (!terminal_table.empty()) {
      c.terminal = [t = terminal_table](const Vec& x, const Setpoint& r) {
        auto it = t.find(RegionExpr::key(concat(x, r.x), r.u));
        return it == t.end() ? Rational(0) : it->second;
      };
    }
    return c;
  }
};

/// Quadratic cost with rational diagonal weights over integer lattices:
/// sum q_i (x_i - xs_i)^2 + sum r_j (u_j - us_j)^2 and T = p ||x_s - y_d||^2
/// (output = state).
inline DiscreteCost lattice_quadratic_cost(std::vector<Rational> q, std::vector<Rational> r, Rational p, Vec y_desired) {
  DiscreteCost c;
  c.stage = [q, r](const Vec& x, const Vec& u, const Setpoint& s) {
    Rational v = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const Rational d = to_int(x[static_cast<Eigen::Index>(i)]) - to_int(s.x[static_cast<Eigen::Index>(i)]);
      v += q[i] * d * d;
    }
    for (std::size_t j = 0; j < r.size(); ++j) {
      const Rational d = to_int(u[static_cast<Eigen::Index>(j)]) - to_int(s.u[static_cast<Eigen::Index>(j)]);
      v += r[j] * d * d;
    }
    return v;
  };
  c.offset = [p, y_desired](const Setpoint& s) {
    Rational v = 0;
    for (Eigen::Index i = 0; i < y_desired.size(); ++i) {
      const Rational d = to_int(s.x[i]) - to_int(y_desired[i]);
      v += d * d;
    }
    return p * v;
  };
  return c;
}

inline Rational tracking_cost(const DiscreteCost& c, const Trajectory& traj, const Setpoint& r) {
  if (traj.states.size() != traj.inputs.size() + 1) throw ContractViolation("tracking_cost: malformed trajectory");
  Rational v = 0;
  for (int k = 0; k < traj.horizon(); ++k) v += c.stage(traj.states[k], traj.inputs[k], r);
  return v + c.Vf(traj.states.back(), r);
}

/// min over inputs u with (x, u) in the finite region of l(x, u, r).
inline std::optional<Rational> optimal_stage_cost(const DiscreteCost& c, const RegionExpr& region, int state_dim,
                                                  const Vec& x, const Setpoint& r) {
  std::optional<Rational> best;
  for (const auto& z : enumerate_points(region, state_dim)) {
    if (!same_vec(z.x, x)) continue;
    const Rational v = c.stage(z.x, z.u, r);
    if (!best || v < *best) best = v;
  }
  return best;
}

// ─── Best reachable setpoint (finite regions) ───────────────────────────────

/// Steady pairs of a finite region that pass the admissibility test.
inline std::vector<Setpoint> steady_setpoints(const SystemModel& model, const RegionExpr& region, double lambda) {
  std::vector<Setpoint> out;
  for (const auto& z : enumerate_points(region, model.state_dim)) {
    Setpoint r{z.x, z.u};
    if (is_steady_admissible(model, r, region, lambda)) out.push_back(std::move(r));
  }
  return out;
}

struct ReachableSetpoint {
  Setpoint setpoint;
  double offset = 0.0;
  /// Continuous regions: optimizer offset minus the best sampled offset
  /// (<= 0 means no sample beat the optimizer). Zero for finite regions.
  double sampled_gap = 0.0;
};

/// Exhaustive minimizer of T over the admissible steady pairs of a finite
/// region; ties broken by the lexicographically smallest (x, u).
inline ReachableSetpoint best_reachable_setpoint(const SystemModel& model, const RegionExpr& region,
                                                 const CostConfig& c, double lambda) {
  const auto cands = steady_setpoints(model, region, lambda);
  if (cands.empty()) throw NoSteadySetpoint("best_reachable_setpoint: no admissible steady setpoint");
  ReachableSetpoint best{cands.front(), offset_cost(c, model, cands.front()), 0.0};
  for (const auto& r : cands) {
    const double v = offset_cost(c, model, r);
    if (v < best.offset) best = {r, v, 0.0};
  }
  return best;
}

// ─── Empirical assumption constants ─────────────────────────────────────────

struct AssumptionConstants {
  double a1 = 0.0;
  double a2 = 0.0;
  /// Only available where V*_N can be computed (finite scenarios).
  std::optional<double> gamma;
  double chi = 0.0;
  int samples_used = 0;
};

/// Ratios l*(x, r) / ||x - x_s||^2 over sampled steady setpoints r (from the
/// model's steady parameterization, box `param_lo..param_hi`) and states x.
/// Offsets are drawn on random coordinate subsets, so single-coordinate
/// offsets along the weakest direction of Q occur. l* minimizes over inputs
/// in the region's input box; R must be diagonal.
template <typename M>
AssumptionConstants estimate_assumption_constants(const M& model, const CostConfig& c, const RegionExpr& region,
                                                  const Vec& param_lo, const Vec& param_hi, int samples,
                                                  std::uint64_t seed = 1, double offset_scale = 1.0) {
  if (samples < 100) throw ContractViolation("estimate_assumption_constants: need at least 100 samples");
  if (!c.R.isDiagonal()) throw ContractViolation("estimate_assumption_constants: R must be diagonal");
  const int n = model.state_dim();
  const int m = model.input_dim();
  const auto branches = to_branches(region, n + m);
  Vec ulo = Vec::Constant(m, -kInf), uhi = Vec::Constant(m, kInf);
  if (!branches.empty()) {
    ulo = branches.front().lower.tail(m);
    uhi = branches.front().upper.tail(m);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AssumptionConstants out;
  out.a1 = kInf;
  out.a2 = 0.0;
  int attempts = 0;
  while (out.samples_used < samples) {
    if (++attempts > 100 * samples) throw ContractViolation("estimate_assumption_constants: sampling region too thin");
    Vec p(param_lo.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = param_lo[i] + (param_hi[i] - param_lo[i]) * unit(rng);
    const Setpoint r = model.steady(p);
    Vec dx = Vec::Zero(n);
    const int mask = 1 + static_cast<int>(unit(rng) * ((1 << n) - 1));
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) dx[i] = offset_scale * (2.0 * unit(rng) - 1.0);
    }
    if (dx.squaredNorm() == 0.0) continue;
    const Vec x = r.x + dx;
    const Vec u = r.u.cwiseMax(ulo).cwiseMin(uhi);
    if (!contains(region, x, u)) continue;
    const double ratio = stage_cost(c, x, u, r) / dx.squaredNorm();
    out.a1 = std::min(out.a1, ratio);
    out.a2 = std::max(out.a2, ratio);
    out.chi = std::max(out.chi, dx.squaredNorm());
    ++out.samples_used;
  }
  return out;
}

}  // namespace safempc
