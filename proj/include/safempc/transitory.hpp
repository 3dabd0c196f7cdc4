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

// Transitory-setpoint tests on finite regions.
//
// A setpoint r1 is transitory when, from every probe (x, u) of the region
// close enough to r1 (V*_N(x, r1) <= delta), some other admissible setpoint
// r2 is strictly cheaper to steer to:
//
//   single-plan scheme:   eps V*_N(x, r2) + T(r2) < eps V*_N(x, r1) + T(r1)
//   learning/backup:      eps [l(x, u, r2) + V*_{N-1}(x+, r2)] + T(r2)
//                           < eps V*_N(x, r1) + T(r1),   with T(r2) < T(r1)
//
// Only existence of some delta > 0 is required. On a finite region small
// deltas admit only the probes with V*_N = 0, so the test runs a ladder of
// deltas and reports the largest one that passes.

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "safempc/discrete.hpp"

namespace safempc {

enum class TransitoryDefinition { SinglePlan, LearningBackup };

struct TransitoryWitness {
  StateInput probe;
  Setpoint r2;
  Trajectory plan;  ///< from x (single plan) or from x+ (learning/backup)
  Rational lhs;
  Rational rhs;
  Rational gap() const { return rhs - lhs; }
};

struct TransitoryReport {
  Setpoint setpoint;
  bool is_transitory = false;
  /// Probe with the smallest margin at the accepted delta.
  std::optional<TransitoryWitness> witness;
  /// Probe that has no improving setpoint, when not transitory.
  std::optional<StateInput> blocking_probe;
  Rational delta_used;
  int probe_points = 0;
};

namespace detail {

struct ProbeData {
  StateInput z;
  Rational v1;  ///< V*_N(x, r1)
};

/// Delta ladder: half the smallest positive V*, then for each distinct value
/// v_i the smaller of 1.5 v_i and the midpoint to the next value.
inline std::vector<Rational> delta_ladder(std::vector<Rational> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  values.erase(std::remove_if(values.begin(), values.end(), [](const Rational& v) { return v <= Rational(0); }),
               values.end());
  std::vector<Rational> out;
  if (values.empty()) return {Rational(1)};
  out.push_back(values.front() * Rational(1, 2));
  for (std::size_t i = 0; i < values.size(); ++i) {
    Rational d = values[i] * Rational(3, 2);
    if (i + 1 < values.size()) d = std::min(d, (values[i] + values[i + 1]) * Rational(1, 2));
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

/// Shared implementation of both definitions.
inline TransitoryReport is_transitory(TransitoryDefinition def, const SystemModel& model, const DiscreteCost& cost,
                                      const Setpoint& r1, const RegionExpr& region, double epsilon, int N,
                                      double lambda = 0.0) {
  if (!model.discrete) throw ContractViolation("is_transitory: finite scenarios only");
  if (N < 1) throw ContractViolation("is_transitory: N must be >= 1");
  const auto manifold = steady_setpoints(model, region, lambda);
  if (manifold.empty()) throw NoSteadySetpoint("is_transitory: region has no admissible steady setpoint");
  if (!is_steady_admissible(model, r1, region, lambda)) {
    throw ContractViolation("is_transitory: r1 is not an admissible steady setpoint of the region");
  }
  const Rational eps = rational_from_double(epsilon);
  const Rational T1 = cost.T(r1);
  const auto graph = detail::build_graph(region, model.state_dim, std::nullopt);

  const auto to_r1 = detail::tracking_table(model, cost, graph, r1, N);
  std::vector<detail::ProbeData> probes;
  for (const auto& z : enumerate_points(region, model.state_dim)) {
    auto it = to_r1.find(detail::key_of(z.x));
    if (it != to_r1.end()) probes.push_back({z, it->second.cost});
  }

  // Tables for every candidate r2 (strictly lower T for the learning/backup
  // definition, any other setpoint for the single-plan one).
  struct Alt {
    Setpoint r;
    Rational T;
    std::map<detail::Key, PathPlan> table;
  };
  std::vector<Alt> alts;
  for (const auto& r : manifold) {
    if (same_vec(r.x, r1.x) && same_vec(r.u, r1.u)) continue;
    const Rational T = cost.T(r);
    if (def == TransitoryDefinition::LearningBackup && !(T < T1)) continue;
    alts.push_back({r, T, detail::tracking_table(model, cost, graph, r, def == TransitoryDefinition::SinglePlan ? N : N - 1)});
  }

  // Best witness for one probe, if any.
  auto witness_for = [&](const detail::ProbeData& p) -> std::optional<TransitoryWitness> {
    const Rational rhs = eps * p.v1 + T1;
    std::optional<TransitoryWitness> best;
    for (const auto& a : alts) {
      Rational lhs;
      Trajectory plan;
      if (def == TransitoryDefinition::SinglePlan) {
        auto it = a.table.find(detail::key_of(p.z.x));
        if (it == a.table.end()) continue;
        lhs = eps * it->second.cost + a.T;
        plan = it->second.inputs.empty() ? Trajectory{{p.z.x}, {}} : rollout(model, p.z.x, it->second.inputs);
      } else {
        const Vec xp = model.step(p.z.x, p.z.u);
        auto it = a.table.find(detail::key_of(xp));
        if (it == a.table.end()) continue;
        lhs = eps * (cost.stage(p.z.x, p.z.u, a.r) + it->second.cost) + a.T;
        plan = it->second.inputs.empty() ? Trajectory{{xp}, {}} : rollout(model, xp, it->second.inputs);
      }
      if (!(lhs < rhs)) continue;
      if (!best || rhs - lhs > best->gap()) best = TransitoryWitness{p.z, a.r, std::move(plan), lhs, rhs};
    }
    return best;
  };

  TransitoryReport rep;
  rep.setpoint = r1;
  std::vector<Rational> values;
  for (const auto& p : probes) values.push_back(p.v1);
  for (const Rational& delta : detail::delta_ladder(values)) {
    std::optional<TransitoryWitness> weakest;
    std::optional<StateInput> blocked;
    int count = 0;
    for (const auto& p : probes) {
      if (p.v1 > delta) continue;
      ++count;
      auto w = witness_for(p);
      if (!w) {
        blocked = p.z;
        break;
      }
      if (!weakest || w->gap() < weakest->gap()) weakest = std::move(w);
    }
    if (blocked) {
      if (!rep.is_transitory) {
        rep.blocking_probe = blocked;
        rep.probe_points = count;
        rep.delta_used = delta;
      }
      break;
    }
    rep.is_transitory = true;
    rep.witness = std::move(weakest);
    rep.delta_used = delta;
    rep.probe_points = count;
  }
  return rep;
}

inline TransitoryReport is_transitory_def1(const SystemModel& model, const DiscreteCost& cost, const Setpoint& r1,
                                           const RegionExpr& region, double epsilon, int N, double lambda = 0.0) {
  return is_transitory(TransitoryDefinition::SinglePlan, model, cost, r1, region, epsilon, N, lambda);
}

inline TransitoryReport is_transitory_def2(const SystemModel& model, const DiscreteCost& cost, const Setpoint& r1,
                                           const RegionExpr& region, double epsilon, int N, double lambda = 0.0) {
  return is_transitory(TransitoryDefinition::LearningBackup, model, cost, r1, region, epsilon, N, lambda);
}

/// Recomputes the witness inequality from scratch (plan costs included).
inline bool witness_holds(TransitoryDefinition def, const SystemModel& model, const DiscreteCost& cost,
                          const Setpoint& r1, const RegionExpr& region, double epsilon, int N,
                          const TransitoryWitness& w) {
  const Rational eps = rational_from_double(epsilon);
  const auto v1 = optimal_tracking(model, cost, region, w.probe.x, r1, N);
  if (!v1 || !contains(region, w.probe)) return false;
  const Rational rhs = eps * v1->cost + cost.T(r1);
  if (!is_steady_admissible(model, w.r2, region, 0.0)) return false;
  const Vec start = def == TransitoryDefinition::SinglePlan ? w.probe.x : model.step(w.probe.x, w.probe.u);
  if (!same_vec(w.plan.states.front(), start) || !same_vec(w.plan.states.back(), w.r2.x)) return false;
  if (w.plan.horizon() > 0 && dynamic_inconsistency(model, w.plan) != 0.0) return false;
  for (int k = 0; k < w.plan.horizon(); ++k) {
    if (!contains(region, w.plan.states[static_cast<std::size_t>(k)], w.plan.inputs[static_cast<std::size_t>(k)])) return false;
  }
  Rational lhs;
  if (def == TransitoryDefinition::SinglePlan) {
    if (w.plan.horizon() != N) return false;
    lhs = eps * tracking_cost(cost, w.plan, w.r2) + cost.T(w.r2);
  } else {
    if (w.plan.horizon() != N - 1 || !(cost.T(w.r2) < cost.T(r1))) return false;
    lhs = eps * (cost.stage(w.probe.x, w.probe.u, w.r2) + tracking_cost(cost, w.plan, w.r2)) + cost.T(w.r2);
  }
  return lhs < rhs;
}

}  // namespace safempc
