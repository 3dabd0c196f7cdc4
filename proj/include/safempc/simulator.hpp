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

// Closed-loop simulation.
//
// Per step t:
//   1. sense from (x_t, u) where u is the first input of the shifted
//      candidate (the initial input at t = 0), then update the knowledge
//   2. control step (exact back-end for lattice models, NLP otherwise)
//   3. log, apply the shared first input, shift the backup into the next
//      candidate
//
// The run stops after max_steps, or once the stage cost of the applied pair
// against the backup setpoint stays below 1e-8 for 10 consecutive steps.

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "safempc/analysis.hpp"
#include "safempc/discrete.hpp"
#include "safempc/grid.hpp"
#include "safempc/mpc.hpp"
#include "safempc/steplog.hpp"

namespace safempc {

using PlantModel = std::variant<BicycleModel, SingleIntegrator2D, SystemModel>;

/// Change of the desired output at step t (smooth models only).
struct TargetEvent {
  int t = 0;
  Vec y_desired;
};

struct Scenario {
  std::string name;
  PlantModel model = SystemModel{};
  std::shared_ptr<const Environment> env;
  Vec x0;
  /// Input paired with x_0 for the first sensing call.
  Vec initial_input;
  /// Smooth models.
  std::optional<CostConfig> costs;
  /// Lattice models.
  std::optional<DiscreteCost> discrete_cost;
  MpcConfig cfg;
  int max_steps = 100;
  bool stop_on_convergence = true;
  std::vector<TargetEvent> events;
  /// Grid worlds keep their map for reporting.
  std::optional<GridWorld> grid;
  DiscreteSolveOptions discrete_options;

  bool is_discrete() const { return std::holds_alternative<SystemModel>(model); }

  SystemModel system() const {
    return std::visit(
        [](const auto& m) -> SystemModel {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, SystemModel>) {
            return m;
          } else {
            return m.as_system();
          }
        },
        model);
  }

  /// Cost evaluator in force at step t.
  CostEvaluator evaluator(int t = 0) const {
    if (discrete_cost) return make_evaluator(*discrete_cost);
    return make_evaluator(costs_at(t), system());
  }

  CostConfig costs_at(int t) const {
    if (!costs) throw ContractViolation("Scenario: no smooth cost configured");
    CostConfig c = *costs;
    for (const auto& e : events) {
      if (e.t <= t) c.y_desired = e.y_desired;
    }
    return c;
  }

  void validate() const {
    if (!env) throw ContractViolation("Scenario: no environment");
    cfg.validate();
    if (max_steps < 1) throw ContractViolation("Scenario: max_steps must be >= 1");
    const SystemModel sys = system();
    require_dim(x0, sys.state_dim, "initial state");
    require_dim(initial_input, sys.input_dim, "initial input");
    if (is_discrete()) {
      if (!discrete_cost) throw ContractViolation("Scenario: lattice models need a discrete cost");
      if (!events.empty()) throw ContractViolation("Scenario: target events need a smooth model");
      if (cfg.N < 1) throw ContractViolation("Scenario: N must be >= 1");
    } else {
      if (!costs) throw ContractViolation("Scenario: smooth models need a cost configuration");
      if (costs->N != cfg.N) throw ContractViolation("Scenario: cost horizon differs from the controller horizon");
      costs->validate(sys.state_dim, sys.input_dim, sys.output_dim);
      for (const auto& e : events) {
        require_dim(e.y_desired, sys.output_dim, "event target");
        if (e.t < 1) throw ContractViolation("Scenario: events must happen at t >= 1");
      }
    }
    if (!contains(env->truth(), x0, initial_input)) {
      throw ContractViolation("Scenario: initial state outside the true constraint set");
    }
  }

  VerifyContext verify_context() const {
    VerifyContext ctx;
    ctx.model = system();
    ctx.env = env;
    ctx.cfg = cfg;
    ctx.costs = evaluator(0);
    ctx.initial_input = initial_input;
    for (const auto& e : events) ctx.cost_changes.push_back({e.t, evaluator(e.t)});
    return ctx;
  }
};

/// Overrides applied on top of a scenario for one run.
struct RunOptions {
  std::optional<MpcMode> mode;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  /// Wall time makes logs differ between otherwise identical runs.
  bool record_wall_time = true;
  std::function<void(const StepLog&)> on_step;
};

// ─── Initial plans and seeds ────────────────────────────────────────────────

/// Full-brake plan for the bicycle: decelerate as hard as the input box
/// allows with zero steering rate, then hold the steady state reached.
inline TrajectoryPair braking_plan(const BicycleModel& model, const RegionExpr& safe, const Vec& x0, int N) {
  const auto branches = to_branches(safe, 7);
  const double a_min = branches.empty() ? -kInf : branches.front().lower[5];
  const double h = model.params().sample_time;
  std::vector<Vec> us;
  Vec x = x0;
  for (int k = 0; k < N; ++k) {
    const double a = x[3] > 0.0 ? std::max(a_min, -x[3] / h) : std::min(-x[3] / h, 1.0);
    Vec u = make_vec({a, 0.0});
    us.push_back(u);
    x = model.step(x, u);
  }
  TrajectoryPair p;
  p.backup = rollout(model.as_system(), x0, us);
  Vec xe = p.backup.states.back();
  xe[3] = 0.0;
  p.backup_setpoint = model.steady(model.steady_params({xe, Vec::Zero(2)}));
  p.learning = p.backup;
  p.learning_setpoint = p.backup_setpoint;
  return p;
}

/// Plan that stays put, for plants whose steady input is zero everywhere.
inline TrajectoryPair hold_plan(const SystemModel& model, const Vec& x0, int N) {
  TrajectoryPair p;
  p.backup = rollout(model, x0, std::vector<Vec>(static_cast<std::size_t>(N), Vec::Zero(model.input_dim)));
  p.backup_setpoint = {x0, Vec::Zero(model.input_dim)};
  p.learning = p.backup;
  p.learning_setpoint = p.backup_setpoint;
  return p;
}

/// Warm starts added when sensing discovers obstacles: the candidate with its
/// learning setpoint moved toward y_desired by a random distance in
/// (0, max_shift], one seed per newly discovered obstacle.
template <DifferentiableModel M>
std::vector<TrajectoryPair> discovery_seeds(const M& model, const TrajectoryPair& candidate, const Vec& y_desired,
                                            int count, double max_shift, std::mt19937_64& rng) {
  std::vector<TrajectoryPair> out;
  const Vec y = model.output(candidate.learning_setpoint.x, candidate.learning_setpoint.u);
  const Vec d = y_desired - y;
  const double dist = d.norm();
  if (count <= 0 || dist == 0.0) return out;
  const Mat C = model.output_state_jacobian();
  const auto idx = model.steady_param_state_index();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 0; j < count; ++j) {
    const double shift = std::min(dist, max_shift * (1.0 - unit(rng)));
    const Vec dy = d * (shift / dist);
    Vec p = model.steady_params(candidate.learning_setpoint);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (Eigen::Index o = 0; o < C.rows(); ++o) p[static_cast<Eigen::Index>(a)] += C(o, idx[a]) * dy[o];
    }
    TrajectoryPair s = candidate;
    s.learning_setpoint = model.steady(p);
    out.push_back(std::move(s));
  }
  return out;
}

/// Input that brings the plant to rest: full available deceleration for the
/// bicycle, zero for the single integrator.
inline Vec stop_input(const BicycleModel& m, const Vec& x, const Vec& ulo, const Vec& uhi) {
  const double a = std::clamp(-x[3] / m.params().sample_time, ulo[0], uhi[0]);
  return make_vec({a, 0.0});
}
inline Vec stop_input(const SingleIntegrator2D&, const Vec&, const Vec&, const Vec&) { return Vec::Zero(2); }

/// Random-rollout search for a backup warm start. Each rollout keeps the
/// candidate's first input, then holds four random inputs drawn from the
/// symmetric part of the input box, then stops for the last fifth of the
/// horizon. Rollouts must stay `margin` inside the safe set, end at rest at
/// an admissible setpoint, and satisfy the storage bound; the one with the
/// lowest offset below the candidate's is returned (learning plan unchanged).
template <DifferentiableModel M>
std::optional<TrajectoryPair> shooting_seed(const M& model, const KnowledgeState& k, const MpcConfig& cfg,
                                            const CostEvaluator& ce, const TrajectoryPair& cand,
                                            std::optional<double> bound, const Vec& x_t, int rollouts,
                                            std::mt19937_64& rng) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  const auto branches = to_branches(k.safe(), n + m);
  if (branches.empty()) return std::nullopt;
  const Vec ulo = branches.front().lower.tail(m);
  const Vec uhi = branches.front().upper.tail(m);
  const Vec span = ulo.cwiseAbs().cwiseMin(uhi.cwiseAbs());
  const double margin = 0.2 * cfg.lambda;
  const int segments = 4;
  const int stop_from = cfg.N - cfg.N / 5;
  const SystemModel sys = model.as_system();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::optional<TrajectoryPair> best;
  double best_T = ce.T(cand.backup_setpoint);
  for (int r = 0; r < rollouts; ++r) {
    std::vector<Vec> levels;
    for (int s = 0; s < segments; ++s) {
      Vec u(m);
      for (int i = 0; i < m; ++i) u[i] = span[i] * (2.0 * unit(rng) - 1.0);
      levels.push_back(u);
    }
    std::vector<Vec> us;
    Vec x = x_t;
    bool ok = true;
    for (int kk = 0; kk < cfg.N && ok; ++kk) {
      Vec u;
      if (kk == 0) {
        u = cand.backup.inputs[0];
      } else if (kk >= stop_from) {
        u = stop_input(model, x, ulo, uhi);
      } else {
        u = levels[static_cast<std::size_t>(std::min(segments - 1, kk * segments / std::max(1, stop_from)))];
      }
      if (!contains_ball(k.safe(), x, u, kk == 0 ? 0.0 : margin)) ok = false;
      us.push_back(u);
      x = model.step(x, u);
    }
    if (!ok) continue;
    const Setpoint sp = model.steady(model.steady_params({x, Vec::Zero(m)}));
    if ((x - sp.x).lpNorm<Eigen::Infinity>() > 1e-9) continue;
    const double T = ce.T(sp);
    if (!(T < best_T)) continue;
    if (!is_steady_admissible(sys, sp, k.setpoint_region(k.safe()), cfg.lambda + margin)) continue;
    const Trajectory tr = rollout(sys, x_t, us);
    if (bound && cfg.uses_storage() && cfg.epsilon * ce.V(tr, sp) + T > *bound - margin) continue;
    best_T = T;
    best = TrajectoryPair{cand.learning, tr, cand.learning_setpoint, sp};
  }
  return best;
}

// ─── Closed loop ────────────────────────────────────────────────────────────

namespace detail {

inline constexpr int kConvergenceWindow = 10;
inline constexpr double kConvergenceThreshold = 1e-8;

inline TrajectoryPair initial_plan(const Scenario& sc, const KnowledgeState& k) {
  return std::visit(
      [&](const auto& m) -> TrajectoryPair {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BicycleModel>) {
          return braking_plan(m, k.safe(), sc.x0, sc.cfg.N);
        } else if constexpr (std::is_same_v<T, SingleIntegrator2D>) {
          return hold_plan(m.as_system(), sc.x0, sc.cfg.N);
        } else {
          throw ContractViolation("initial_plan: lattice models are solved exactly from scratch");
        }
      },
      sc.model);
}

}  // namespace detail

inline LogHeader make_header(const Scenario& sc) {
  const SystemModel sys = sc.system();
  LogHeader h;
  h.scenario = sc.name;
  h.mode = to_string(sc.cfg.mode);
  h.seed = sc.cfg.seed;
  h.N = sc.cfg.N;
  h.epsilon = sc.cfg.epsilon;
  h.alpha = sc.cfg.alpha;
  h.lambda = sc.cfg.lambda;
  h.S0 = sc.cfg.S0;
  h.F_hat0 = sc.cfg.F_hat0;
  h.model = sys.name;
  h.state_dim = sys.state_dim;
  h.input_dim = sys.input_dim;
  h.output_dim = sys.output_dim;
  return h;
}

/// Scenario with the run overrides applied.
inline Scenario apply_options(Scenario sc, const RunOptions& opt) {
  if (opt.mode) sc.cfg.mode = *opt.mode;
  if (opt.steps) sc.max_steps = *opt.steps;
  if (opt.seed) sc.cfg.seed = *opt.seed;
  return sc;
}

/// Runs the closed loop. Safety, feasibility and invariant breaches end the
/// run with `abort_reason` set; the steps before the failure are kept.
inline RunLog run_closed_loop(const Scenario& scenario, const RunOptions& opt = {}) {
  const Scenario sc = apply_options(scenario, opt);
  sc.validate();
  const SystemModel sys = sc.system();
  RunLog log;
  log.header = make_header(sc);

  KnowledgeState k(sc.env, sc.cfg.lambda);
  StorageState storage = initial_storage(sc.cfg);
  std::mt19937_64 rng(sc.cfg.seed);
  Vec x = sc.x0;
  std::optional<TrajectoryPair> candidate;
  Multipliers warm;
  int calm = 0;

  try {
    for (int t = 0; t < sc.max_steps; ++t) {
      const auto t0 = std::chrono::steady_clock::now();
      const bool target_change =
          std::any_of(sc.events.begin(), sc.events.end(), [t](const TargetEvent& e) { return e.t == t; });
      if (target_change) {
        // New costs invalidate the storage bound; restart it unbounded.
        storage.F_hat.reset();
        warm = {};
      }

      const Vec u_sense = candidate ? candidate->backup.inputs[0] : sc.initial_input;
      const SensingReport rep = sense(k, x, u_sense);
      k = update_knowledge(k, rep);

      StepOutcome out;
      if (sc.is_discrete()) {
        out = control_step_discrete(sys, k, sc.cfg, *sc.discrete_cost, storage, x, candidate ? &*candidate : nullptr,
                                    sc.discrete_options);
      } else {
        if (!candidate) {
          candidate = detail::initial_plan(sc, k);
          const CostEvaluator ce = sc.evaluator(t);
          const PlanCheck chk = check_pair(sys, k, sc.cfg, ce, x, *candidate, std::nullopt, 0.0);
          if (!chk.ok) throw InfeasibleStart("initial plan infeasible (" + chk.failure + ")");
        }
        const CostConfig costs = sc.costs_at(t);
        out = std::visit(
            [&](const auto& m) -> StepOutcome {
              using T = std::decay_t<decltype(m)>;
              if constexpr (std::is_same_v<T, SystemModel>) {
                throw ContractViolation("run_closed_loop: lattice model on the smooth path");
              } else {
                const int fresh = static_cast<int>(rep.newly_discovered.size());
                const SeedGenerator seeds = [&, fresh](const TrajectoryPair& c) {
                  auto out = discovery_seeds(m, c, costs.y_desired, fresh, sc.env->sense_radius, rng);
                  if (sc.cfg.shooting_rollouts > 0) {
                    const auto ce = make_evaluator(costs, sys);
                    const auto bound = sc.cfg.uses_storage() ? storage.bound() : std::nullopt;
                    if (auto s = shooting_seed(m, k, sc.cfg, ce, c, bound, x, sc.cfg.shooting_rollouts, rng)) {
                      out.insert(out.begin(), std::move(*s));
                    }
                  }
                  return out;
                };
                return control_step(m, k, sc.cfg, costs, storage, x, *candidate, seeds,
                                    warm.penalty > 0.0 ? &warm : nullptr);
              }
            },
            sc.model);
        if (out.multipliers.penalty > 0.0) {
          warm = out.multipliers;
          warm.penalty = sc.cfg.solver.penalty_init;
        }
      }

      const auto& sol = out.solution;
      const CostEvaluator ce = sc.evaluator(t);
      StepLog s;
      s.t = t;
      s.x = x;
      s.u = out.u;
      s.y = sys.output(x, out.u);
      s.S = storage.S;
      s.F_hat = storage.F_hat;
      s.F_star = sol.F_star;
      s.objective = sol.objective;
      s.stage0 = ce.stage(x, out.u, sol.pair.backup_setpoint);
      s.pair = sol.pair;
      s.sensed_center = rep.center;
      s.newly_discovered = rep.newly_discovered;
      s.status = sol.status;
      s.starts = sol.starts;
      s.chosen_start = sol.chosen_start;
      if (opt.record_wall_time) {
        s.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      }
      log.steps.push_back(s);
      if (opt.on_step) opt.on_step(log.steps.back());

      storage = out.storage;
      calm = s.stage0 < detail::kConvergenceThreshold ? calm + 1 : 0;
      const Vec x_next = sys.step(x, out.u);
      candidate = candidate_shift(sys, sol.pair, x_next);
      x = x_next;
      if (sc.stop_on_convergence && calm >= detail::kConvergenceWindow) break;
    }
  } catch (const SafetyBreach& e) {
    log.abort_reason = std::string("safety breach: ") + e.what();
  } catch (const RecursiveFeasibilityBreach& e) {
    log.abort_reason = std::string("recursive feasibility breach: ") + e.what();
  } catch (const InvariantBreach& e) {
    log.abort_reason = std::string("invariant breach: ") + e.what();
  } catch (const ModelInconsistency& e) {
    log.abort_reason = std::string("model inconsistency: ") + e.what();
  }
  return log;
}

// ─── Mode comparison ────────────────────────────────────────────────────────

struct ModeSummary {
  MpcMode mode = MpcMode::Proposed;
  Vec final_output;
  double final_offset = 0.0;
  /// First step of the final calm window, when the run converged.
  std::optional<int> steps_to_convergence;
  double total_stage_cost = 0.0;
  int steps = 0;
  std::optional<std::string> abort_reason;
};

inline ModeSummary summarize(const Scenario& sc, MpcMode mode, const RunLog& log) {
  ModeSummary m;
  m.mode = mode;
  m.steps = static_cast<int>(log.steps.size());
  m.abort_reason = log.abort_reason;
  if (log.steps.empty()) return m;
  const auto& last = log.steps.back();
  m.final_output = last.y;
  m.final_offset = sc.evaluator(last.t).T(last.pair.backup_setpoint);
  int calm = 0;
  for (const auto& s : log.steps) {
    m.total_stage_cost += s.stage0;
    calm = s.stage0 < detail::kConvergenceThreshold ? calm + 1 : 0;
  }
  if (calm >= detail::kConvergenceWindow) m.steps_to_convergence = last.t - calm + 1;
  return m;
}

/// Runs every mode on the same scenario; rows follow the order given.
inline std::vector<ModeSummary> compare_modes(const Scenario& sc, const std::vector<MpcMode>& modes,
                                              RunOptions opt = {}) {
  if (modes.size() < 2) throw ContractViolation("compare_modes: need at least two modes");
  std::vector<ModeSummary> out;
  for (MpcMode m : modes) {
    opt.mode = m;
    out.push_back(summarize(sc, m, run_closed_loop(sc, opt)));
  }
  return out;
}

inline std::string format_comparison(const std::vector<ModeSummary>& rows) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "mode,final_y,final_offset,steps_to_convergence,total_stage_cost,steps,abort\n";
  for (const auto& r : rows) {
    os << to_string(r.mode) << ",(";
    for (Eigen::Index i = 0; i < r.final_output.size(); ++i) os << (i ? " " : "") << r.final_output[i];
    os << ")," << r.final_offset << ',';
    if (r.steps_to_convergence) os << *r.steps_to_convergence;
    os << ',' << r.total_stage_cost << ',' << r.steps << ',' << (r.abort_reason ? *r.abort_reason : "") << '\n';
  }
  return os.str();
}

}  // namespace safempc
