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

// Per-step controller logic shared by the continuous and finite back-ends:
// exact plan checks, the shifted candidate, the storage recursion, and the
// continuous control step (multi-start NLP with candidate fallback).

#include <chrono>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "safempc/costs.hpp"
#include "safempc/knowledge.hpp"
#include "safempc/problem.hpp"
#include "safempc/transcription.hpp"

namespace safempc {

enum class SolutionStatus { Optimal, LocalOptimal, CandidateFallback };

inline const char* to_string(SolutionStatus s) {
  switch (s) {
    case SolutionStatus::Optimal: return "optimal";
    case SolutionStatus::LocalOptimal: return "local_optimal";
    case SolutionStatus::CandidateFallback: return "candidate_fallback";
  }
  return "?";
}

inline SolutionStatus parse_solution_status(const std::string& s) {
  if (s == "optimal") return SolutionStatus::Optimal;
  if (s == "local_optimal") return SolutionStatus::LocalOptimal;
  if (s == "candidate_fallback") return SolutionStatus::CandidateFallback;
  throw ParseError("unknown solver status '" + s + "'");
}

struct MpcSolution {
  TrajectoryPair pair;
  double objective = 0.0;
  /// eps * V_N(backup) + T(backup setpoint) of the returned plan.
  double F_star = 0.0;
  SolutionStatus status = SolutionStatus::CandidateFallback;
  /// Largest terminal-equality residual of the returned plan (exact checks
  /// cover everything else).
  double max_residual = 0.0;
  int starts = 0;
  int chosen_start = -1;
};

/// Result of checking a plan pair against the exact (untightened) sets.
struct PlanCheck {
  bool ok = true;
  std::string failure;
  double terminal_residual = 0.0;
  /// eps * V_N(backup) + T(r_B) - bound (negative when satisfied).
  double storage_excess = -kInf;

  void fail(std::string why) {
    if (ok) failure = std::move(why);
    ok = false;
  }
};

inline double pair_F(const CostEvaluator& ce, const MpcConfig& cfg, const TrajectoryPair& p) {
  return cfg.epsilon * ce.V(p.backup, p.backup_setpoint) + ce.T(p.backup_setpoint);
}

inline double pair_objective(const CostEvaluator& ce, const MpcConfig& cfg, const TrajectoryPair& p) {
  if (!cfg.has_learning()) return pair_F(ce, cfg, p);
  return ce.V(p.learning, p.learning_setpoint) + ce.T(p.learning_setpoint) + cfg.epsilon * ce.T(p.backup_setpoint);
}

/// Every constraint of the problem at x_t, evaluated exactly: shared initial
/// state and first input, dynamics, knot membership, setpoint admissibility,
/// terminal equality and (when `bound` is given) the storage constraint.
inline PlanCheck check_pair(const SystemModel& model, const KnowledgeState& k, const MpcConfig& cfg,
                            const CostEvaluator& ce, const Vec& x_t, const TrajectoryPair& p,
                            std::optional<double> bound, double storage_tol) {
  PlanCheck out;
  const double dyn_tol = model.discrete ? 0.0 : 1e-9;
  const double term_tol = model.discrete ? 0.0 : cfg.plan_tol;
  auto check_traj = [&](const Trajectory& t, const Setpoint& r, const RegionExpr& region, const char* name) {
    if (t.horizon() != cfg.N || t.states.size() != t.inputs.size() + 1) {
      out.fail(std::string(name) + ": wrong horizon");
      return;
    }
    if (!same_vec(t.states[0], x_t)) out.fail(std::string(name) + ": initial state differs from x_t");
    if (dynamic_inconsistency(model, t) > dyn_tol) out.fail(std::string(name) + ": dynamics violated");
    for (int kk = 0; kk < cfg.N; ++kk) {
      const auto s = static_cast<std::size_t>(kk);
      if (!contains(region, t.states[s], t.inputs[s])) {
        out.fail(std::string(name) + ": knot " + std::to_string(kk) + " outside its set");
        break;
      }
    }
    if (!is_steady_admissible(model, r, k.setpoint_region(region), cfg.lambda)) {
      out.fail(std::string(name) + ": setpoint not admissible");
    }
    const double res = (t.states.back() - r.x).lpNorm<Eigen::Infinity>();
    out.terminal_residual = std::max(out.terminal_residual, res);
    if (res > term_tol) out.fail(std::string(name) + ": terminal equality violated");
  };
  check_traj(p.backup, p.backup_setpoint, k.safe(), "backup");
  if (cfg.has_learning()) {
    check_traj(p.learning, p.learning_setpoint, k.estimated(), "learning");
    if (!p.learning.inputs.empty() && !p.backup.inputs.empty() && !same_vec(p.learning.inputs[0], p.backup.inputs[0])) {
      out.fail("first inputs differ");
    }
  }
  if (bound && cfg.uses_storage()) {
    out.storage_excess = pair_F(ce, cfg, p) - *bound;
    if (out.storage_excess > storage_tol) out.fail("storage constraint violated");
  }
  return out;
}

/// Shift the previous backup by one step and append the steady input, for
/// both plans; setpoints are the previous backup setpoint.
inline TrajectoryPair candidate_shift(const SystemModel& model, const TrajectoryPair& prev, const Vec& x_next) {
  if (prev.backup.states.size() < 2) throw ContractViolation("candidate_shift: previous plan too short");
  const double gap = (x_next - prev.backup.states[1]).lpNorm<Eigen::Infinity>();
  if (model.discrete ? gap != 0.0 : gap > 1e-9) {
    throw ModelInconsistency("candidate_shift: x_{t+1} differs from the planned backup state by " + std::to_string(gap));
  }
  std::vector<Vec> inputs(prev.backup.inputs.begin() + 1, prev.backup.inputs.end());
  inputs.push_back(prev.backup_setpoint.u);
  TrajectoryPair c;
  c.backup = rollout(model, x_next, inputs);
  c.learning = c.backup;
  c.backup_setpoint = prev.backup_setpoint;
  c.learning_setpoint = prev.backup_setpoint;
  return c;
}

/// F_hat_{t+1} = F* - eps*alpha*l0 and S_{t+1} = S_t + F_hat_t - F*. While
/// F_hat is unbounded, S carries over unchanged.
inline StorageState storage_update(const StorageState& st, double F_star, double stage0, double epsilon, double alpha,
                                   bool storage_active, double tol = 1e-9) {
  StorageState next;
  next.F_star_prev = F_star;
  if (st.F_hat) {
    if (storage_active && F_star > st.S + *st.F_hat + tol) {
      throw InvariantBreach("storage_update: F* exceeds S + F_hat by " + std::to_string(F_star - st.S - *st.F_hat));
    }
    next.S = st.S + *st.F_hat - F_star;
    if (storage_active && next.S < -tol) throw InvariantBreach("storage_update: S became negative");
  } else {
    next.S = st.S;
  }
  next.F_hat = F_star - epsilon * alpha * stage0;
  return next;
}

struct StepOutcome {
  Vec u;
  MpcSolution solution;
  StorageState storage;
  PlanCheck candidate_check;
  /// Solver multipliers behind the chosen plan (empty on fallback); may seed
  /// the next step.
  Multipliers multipliers;
};

/// Extra warm starts beyond the candidate (index 0).
using SeedGenerator = std::function<std::vector<TrajectoryPair>(const TrajectoryPair& candidate)>;

/// One receding-horizon step for a smooth model: solve from the candidate
/// and any extra seeds, keep the best exactly-feasible plan, fall back to
/// the candidate when nothing beats it.
template <DifferentiableModel M>
StepOutcome control_step(const M& model, const KnowledgeState& k, const MpcConfig& cfg, const CostConfig& costs,
                         const StorageState& storage, const Vec& x_t, const TrajectoryPair& warm_start,
                         const SeedGenerator& seeds = {}, const Multipliers* warm = nullptr) {
  const SystemModel sys = model.as_system();
  const CostEvaluator ce = make_evaluator(costs, sys);
  const std::optional<double> bound = cfg.uses_storage() ? storage.bound() : std::nullopt;
  const double storage_tol = 1e-9 * (1.0 + std::abs(bound.value_or(0.0)));

  StepOutcome out;
  out.candidate_check = check_pair(sys, k, cfg, ce, x_t, warm_start, bound, storage_tol);
  if (!out.candidate_check.ok) {
    throw RecursiveFeasibilityBreach("control_step: candidate infeasible (" + out.candidate_check.failure + ")");
  }
  MpcSolution best;
  best.pair = warm_start;
  best.objective = pair_objective(ce, cfg, warm_start);
  best.status = SolutionStatus::CandidateFallback;
  best.max_residual = out.candidate_check.terminal_residual;

  std::vector<TrajectoryPair> starts{warm_start};
  if (seeds) {
    for (auto& s : seeds(warm_start)) {
      if (static_cast<int>(starts.size()) >= cfg.max_starts) break;
      starts.push_back(std::move(s));
    }
  }
  best.starts = static_cast<int>(starts.size());
  for (int i = 0; i < static_cast<int>(starts.size()); ++i) {
    try {
      const ContinuousTranscription<M> tr(model, k, cfg, costs, x_t, bound, starts[static_cast<std::size_t>(i)]);
      const Vec z0 = tr.pack(starts[static_cast<std::size_t>(i)]);
      const SolveReport rep = solve_nlp(tr.spec(), z0, cfg.solver, i == 0 ? warm : nullptr);
      if (rep.status == SolveStatus::Failed) continue;
      const TrajectoryPair pair = tr.unpack(rep.point);
      const PlanCheck chk = check_pair(sys, k, cfg, ce, x_t, pair, bound, storage_tol);
      if (!chk.ok) continue;
      const double obj = pair_objective(ce, cfg, pair);
      if (obj < best.objective) {
        best.pair = pair;
        best.objective = obj;
        best.status = SolutionStatus::LocalOptimal;
        best.max_residual = chk.terminal_residual;
        best.chosen_start = i;
        out.multipliers = rep.multipliers;
      }
    } catch (const NumericalDomainError&) {
      continue;
    } catch (const NoSteadySetpoint&) {
      continue;
    }
  }
  best.F_star = pair_F(ce, cfg, best.pair);
  out.u = best.pair.backup.inputs[0];
  const double stage0 = ce.stage(x_t, out.u, best.pair.backup_setpoint);
  out.storage = storage_update(storage, best.F_star, stage0, cfg.epsilon, cfg.alpha, cfg.uses_storage(), storage_tol);
  out.solution = std::move(best);
  return out;
}

}  // namespace safempc
