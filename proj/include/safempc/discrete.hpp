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

// Exact back-end for finite scenarios: dynamic programming over the move
// graph of a finite region, in rational arithmetic.
//
// A region's move graph has an edge x -> f(x, u) for every member (x, u).
// Cost-to-go tables to a fixed setpoint give V*_k for every start state; the
// learning/backup problem is then a search over the shared first input and
// the two setpoints. Ties are broken by the lexicographically smallest input
// sequence, so results do not depend on enumeration order.

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "safempc/costs.hpp"
#include "safempc/mpc.hpp"

namespace safempc {

/// Input sequence with its exact cost.
struct PathPlan {
  Rational cost;
  std::vector<Vec> inputs;
};

namespace detail {

using Key = std::vector<double>;

inline Key key_of(const Vec& v) { return Key(v.data(), v.data() + v.size()); }

/// Concatenated inputs, for lexicographic tie-breaks.
inline Key flatten(std::initializer_list<const std::vector<Vec>*> parts) {
  Key out;
  for (const auto* p : parts) {
    for (const Vec& u : *p) out.insert(out.end(), u.data(), u.data() + u.size());
  }
  return out;
}

/// x -> admissible inputs of a finite region. Inputs are kept sorted unless
/// a shuffle seed is given (used to test order invariance).
struct MoveGraph {
  std::map<Key, std::vector<Vec>> moves;

  const std::vector<Vec>* at(const Vec& x) const {
    auto it = moves.find(key_of(x));
    return it == moves.end() ? nullptr : &it->second;
  }
};

inline MoveGraph build_graph(const RegionExpr& region, int state_dim, std::optional<std::uint64_t> shuffle) {
  MoveGraph g;
  for (const auto& z : enumerate_points(region, state_dim)) g.moves[key_of(z.x)].push_back(z.u);
  if (shuffle) {
    std::mt19937_64 rng(*shuffle);
    for (auto& [x, us] : g.moves) std::shuffle(us.begin(), us.end(), rng);
  }
  return g;
}

inline Vec vec_of(const Key& k) { return Eigen::Map<const Vec>(k.data(), static_cast<Eigen::Index>(k.size())); }

/// Best plan with exactly `steps` inputs from every state of the graph to
/// x_N = r.x, including the terminal cost. Missing states cannot reach r.
inline std::map<Key, PathPlan> tracking_table(const SystemModel& model, const DiscreteCost& cost, const MoveGraph& g,
                                              const Setpoint& r, int steps) {
  std::map<Key, PathPlan> next;
  next[key_of(r.x)] = {cost.Vf(r.x, r), {}};
  for (int k = 0; k < steps; ++k) {
    std::map<Key, PathPlan> cur;
    for (const auto& [xk, us] : g.moves) {
      const Vec x = vec_of(xk);
      std::optional<PathPlan> best;
      Key best_seq;
      for (const Vec& u : us) {
        auto it = next.find(key_of(model.step(x, u)));
        if (it == next.end()) continue;
        PathPlan p{cost.stage(x, u, r) + it->second.cost, {}};
        p.inputs.reserve(it->second.inputs.size() + 1);
        p.inputs.push_back(u);
        p.inputs.insert(p.inputs.end(), it->second.inputs.begin(), it->second.inputs.end());
        const Key seq = flatten({&p.inputs});
        if (!best || p.cost < best->cost || (p.cost == best->cost && seq < best_seq)) {
          best = std::move(p);
          best_seq = seq;
        }
      }
      if (best) cur[xk] = std::move(*best);
    }
    next = std::move(cur);
  }
  return next;
}

/// Number of admissible input sequences of length `steps` from each state.
inline std::map<Key, double> path_counts(const SystemModel& model, const MoveGraph& g, int steps) {
  std::map<Key, double> cnt;
  for (const auto& [xk, us] : g.moves) cnt[xk] = 1.0;
  for (int k = 0; k < steps; ++k) {
    std::map<Key, double> cur;
    for (const auto& [xk, us] : g.moves) {
      double c = 0.0;
      for (const Vec& u : us) {
        auto it = cnt.find(key_of(model.step(vec_of(xk), u)));
        c += it == cnt.end() ? (k == 0 ? 1.0 : 0.0) : it->second;
      }
      cur[xk] = c;
    }
    cnt = std::move(cur);
  }
  return cnt;
}

}  // namespace detail

/// V*_steps(x, r, region): the cheapest plan from x with `steps` inputs whose
/// knots lie in the finite region and whose final state equals r.x.
inline std::optional<PathPlan> optimal_tracking(const SystemModel& model, const DiscreteCost& cost,
                                                const RegionExpr& region, const Vec& x, const Setpoint& r, int steps) {
  if (steps == 0) {
    if (!same_vec(x, r.x)) return std::nullopt;
    return PathPlan{cost.Vf(x, r), {}};
  }
  const auto g = detail::build_graph(region, model.state_dim, std::nullopt);
  const auto table = detail::tracking_table(model, cost, g, r, steps);
  auto it = table.find(detail::key_of(x));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct DiscreteProblem {
  SystemModel model;
  KnowledgeState knowledge;
  MpcConfig cfg;
  DiscreteCost cost;
  Vec x_t;
  /// S_t + F_hat_t when the storage constraint is active.
  std::optional<double> bound;
};

struct DiscreteSolveOptions {
  /// Largest number of admissible input sequences the solver will accept.
  double guard = 1e7;
  /// Permutes the per-state input order (the optimum must not change).
  std::optional<std::uint64_t> shuffle_seed;
  double storage_tol = 1e-9;
};

struct DiscreteSolveReport {
  bool feasible = false;
  TrajectoryPair pair;
  Rational objective;
  /// eps * V_N(backup) + T(r_B)
  Rational F;
  Rational V_learning;
  Rational V_backup;
  double sequences = 0.0;
};

/// Global optimum of the learning/backup problem (or of the single-plan
/// baseline problem) on a finite scenario.
///
/// Among plans with equal objective the one with smaller backup cost F wins,
/// then the lexicographically smallest input sequence (shared input,
/// learning inputs, backup inputs). For each backup setpoint only its
/// cheapest path is considered: the objective does not depend on the backup
/// path, and the cheapest one is the easiest to keep under the storage bound.
inline DiscreteSolveReport solve_exact_discrete(const DiscreteProblem& p, const DiscreteSolveOptions& opt = {}) {
  using detail::Key;
  const auto& model = p.model;
  const auto& k = p.knowledge;
  const auto& cfg = p.cfg;
  if (!model.discrete) throw ContractViolation("solve_exact_discrete: model is not discrete");
  require_dim(p.x_t, model.state_dim, "solve_exact_discrete x_t");
  const Rational eps = rational_from_double(cfg.epsilon);
  const bool learn = cfg.has_learning();
  const bool storage = cfg.uses_storage() && p.bound.has_value();
  const int rest = cfg.N - 1;

  const auto gB = detail::build_graph(k.safe(), model.state_dim, opt.shuffle_seed);
  const auto gL = learn ? detail::build_graph(k.estimated(), model.state_dim, opt.shuffle_seed) : detail::MoveGraph{};

  DiscreteSolveReport out;
  const auto* first = gB.at(p.x_t);
  if (!first) return out;

  {
    const auto cB = detail::path_counts(model, gB, rest);
    const auto cL = learn ? detail::path_counts(model, gL, rest) : std::map<Key, double>{};
    for (const Vec& u0 : *first) {
      const Key x1 = detail::key_of(model.step(p.x_t, u0));
      auto b = cB.find(x1);
      double n = b == cB.end() ? (rest == 0 ? 1.0 : 0.0) : b->second;
      if (learn) {
        auto l = cL.find(x1);
        n *= l == cL.end() ? (rest == 0 ? 1.0 : 0.0) : l->second;
      }
      out.sequences += n;
    }
    if (out.sequences > opt.guard) {
      throw ScenarioTooLarge("solve_exact_discrete: " + std::to_string(out.sequences) + " input sequences exceed the guard");
    }
  }

  struct Tables {
    Setpoint r;
    Rational T;
    std::map<Key, PathPlan> to_go;
  };
  auto tables = [&](const RegionExpr& region, const detail::MoveGraph& g) {
    std::vector<Tables> out_t;
    for (auto& r : steady_setpoints(model, k.setpoint_region(region), cfg.lambda)) {
      Tables t{r, p.cost.T(r), detail::tracking_table(model, p.cost, g, r, rest)};
      out_t.push_back(std::move(t));
    }
    return out_t;
  };
  const auto tB = tables(k.safe(), gB);
  const auto tL = learn ? tables(k.estimated(), gL) : std::vector<Tables>{};

  struct Choice {
    const Tables* tab = nullptr;
    Rational V;
    std::vector<Vec> inputs;  // including u0
  };
  std::optional<Rational> best_obj, best_F;
  Key best_seq;

  for (const Vec& u0 : *first) {
    if (learn && !contains(k.estimated(), p.x_t, u0)) continue;
    const Vec x1 = model.step(p.x_t, u0);
    const Key k1 = detail::key_of(x1);

    // Backup: lowest eps*T, then lowest F, then lexicographic.
    std::optional<Choice> cb;
    Rational cb_F;
    for (const auto& t : tB) {
      auto it = t.to_go.find(k1);
      if (it == t.to_go.end()) continue;
      Choice c{&t, p.cost.stage(p.x_t, u0, t.r) + it->second.cost, {u0}};
      c.inputs.insert(c.inputs.end(), it->second.inputs.begin(), it->second.inputs.end());
      const Rational F = eps * c.V + t.T;
      if (storage && F.to_double() > *p.bound + opt.storage_tol) continue;
      const Rational key1 = learn ? eps * t.T : F;
      bool better = !cb;
      if (!better) {
        const Rational cur1 = learn ? eps * cb->tab->T : cb_F;
        better = key1 < cur1 || (key1 == cur1 && (F < cb_F || (F == cb_F && detail::flatten({&c.inputs}) <
                                                                                  detail::flatten({&cb->inputs}))));
      }
      if (better) {
        cb = std::move(c);
        cb_F = F;
      }
    }
    if (!cb) continue;

    std::optional<Choice> cl;
    Rational cl_J;
    if (learn) {
      for (const auto& t : tL) {
        auto it = t.to_go.find(k1);
        if (it == t.to_go.end()) continue;
        Choice c{&t, p.cost.stage(p.x_t, u0, t.r) + it->second.cost, {u0}};
        c.inputs.insert(c.inputs.end(), it->second.inputs.begin(), it->second.inputs.end());
        const Rational J = c.V + t.T;
        if (!cl || J < cl_J || (J == cl_J && detail::flatten({&c.inputs}) < detail::flatten({&cl->inputs}))) {
          cl = std::move(c);
          cl_J = J;
        }
      }
      if (!cl) continue;
    }

    const Rational obj = learn ? cl_J + eps * cb->tab->T : cb_F;
    const Key seq = learn ? detail::flatten({&cl->inputs, &cb->inputs}) : detail::flatten({&cb->inputs});
    const bool better = !best_obj || obj < *best_obj ||
                        (obj == *best_obj && (cb_F < *best_F || (cb_F == *best_F && seq < best_seq)));
    if (!better) continue;
    best_obj = obj;
    best_F = cb_F;
    best_seq = seq;
    out.feasible = true;
    out.objective = obj;
    out.F = cb_F;
    out.V_backup = cb->V;
    out.pair.backup = rollout(model, p.x_t, cb->inputs);
    out.pair.backup_setpoint = cb->tab->r;
    if (learn) {
      out.V_learning = cl->V;
      out.pair.learning = rollout(model, p.x_t, cl->inputs);
      out.pair.learning_setpoint = cl->tab->r;
    } else {
      out.V_learning = cb->V;
      out.pair.learning = out.pair.backup;
      out.pair.learning_setpoint = out.pair.backup_setpoint;
    }
  }
  return out;
}

/// One receding-horizon step on a finite scenario. `warm_start` is the
/// shifted candidate (null at t = 0, when no previous plan exists). The
/// exact optimum is never worse than the candidate, so the status is always
/// Optimal when a candidate exists.
inline StepOutcome control_step_discrete(const SystemModel& model, const KnowledgeState& k, const MpcConfig& cfg,
                                         const DiscreteCost& cost, const StorageState& storage, const Vec& x_t,
                                         const TrajectoryPair* warm_start, const DiscreteSolveOptions& opt = {}) {
  const CostEvaluator ce = make_evaluator(cost);
  const std::optional<double> bound = cfg.uses_storage() ? storage.bound() : std::nullopt;
  StepOutcome out;
  if (warm_start) {
    out.candidate_check = check_pair(model, k, cfg, ce, x_t, *warm_start, bound, opt.storage_tol);
    if (!out.candidate_check.ok) {
      throw RecursiveFeasibilityBreach("control_step: candidate infeasible (" + out.candidate_check.failure + ")");
    }
  }
  const DiscreteSolveReport rep = solve_exact_discrete({model, k, cfg, cost, x_t, bound}, opt);
  if (!rep.feasible) {
    if (!warm_start) throw InfeasibleStart("control_step: no feasible plan from the initial state");
    throw RecursiveFeasibilityBreach("control_step: exact solver found no plan although the candidate is feasible");
  }
  MpcSolution sol;
  sol.pair = rep.pair;
  sol.objective = rep.objective.to_double();
  sol.F_star = rep.F.to_double();
  sol.status = SolutionStatus::Optimal;
  sol.starts = 1;
  sol.chosen_start = 0;
  if (warm_start && pair_objective(ce, cfg, *warm_start) < sol.objective - 1e-12) {
    throw InvariantBreach("control_step: exact optimum worse than the candidate");
  }
  out.u = sol.pair.backup.inputs[0];
  const double stage0 = ce.stage(x_t, out.u, sol.pair.backup_setpoint);
  out.storage = storage_update(storage, sol.F_star, stage0, cfg.epsilon, cfg.alpha, cfg.uses_storage(), opt.storage_tol);
  out.solution = std::move(sol);
  return out;
}

}  // namespace safempc
