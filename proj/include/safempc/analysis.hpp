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

// Offline verification of a closed-loop log.
//
// verify_run replays the knowledge updates recorded in the log and re-checks,
// step by step, everything the controller promises: the applied pair lies in
// the true set, the storage stays nonnegative and bounds the backup cost,
// the shifted candidate is feasible, the cost decrease chain holds, the safe
// set never shrinks, learning and backup share their first input, and a
// converged run ends at an admissible setpoint.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "safempc/steplog.hpp"

namespace safempc {

enum class CheckStatus { Pass, Fail, Skip };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "PASS";
    case CheckStatus::Fail: return "FAIL";
    case CheckStatus::Skip: return "SKIP";
  }
  return "?";
}

struct InvariantResult {
  std::string name;
  CheckStatus status = CheckStatus::Pass;
  std::optional<int> first_step;
  double magnitude = 0.0;
  std::string note;
};

struct RunVerdict {
  std::vector<InvariantResult> results;
  bool converged = false;
  std::optional<Setpoint> limit;
  Vec final_output;

  bool passed() const {
    return std::none_of(results.begin(), results.end(), [](const auto& r) { return r.status == CheckStatus::Fail; });
  }
  const InvariantResult& at(const std::string& name) const {
    for (const auto& r : results) {
      if (r.name == name) return r;
    }
    throw ContractViolation("RunVerdict: no check named " + name);
  }
  /// One line per invariant: NAME PASS|FAIL|SKIP [step] [magnitude] [# note]
  std::string format() const {
    std::ostringstream os;
    os << std::setprecision(6);
    for (const auto& r : results) {
      os << r.name << ' ' << to_string(r.status);
      if (r.status == CheckStatus::Fail) {
        os << ' ' << (r.first_step ? std::to_string(*r.first_step) : "-") << ' ' << r.magnitude;
      }
      if (!r.note.empty()) os << "  # " << r.note;
      os << '\n';
    }
    return os.str();
  }
};

struct VerifyContext {
  SystemModel model;
  std::shared_ptr<const Environment> env;
  MpcConfig cfg;
  CostEvaluator costs;
  /// Input used with x_0 for the first sensing call.
  Vec initial_input;
  double tol = 1e-9;
  int convergence_window = 10;
  double convergence_threshold = 1e-8;
  /// Final output distance to the limit setpoint's output.
  double convergence_output_tol = 1e-3;
  /// Steps at which the costs change (target events), with the new costs.
  /// The storage restarts unbounded there.
  std::vector<std::pair<int, CostEvaluator>> cost_changes;

  const CostEvaluator& costs_at(int t) const {
    const CostEvaluator* c = &costs;
    for (const auto& [s, ce] : cost_changes) {
      if (s <= t) c = &ce;
    }
    return *c;
  }
  bool restarts_at(int t) const {
    return std::any_of(cost_changes.begin(), cost_changes.end(), [t](const auto& e) { return e.first == t; });
  }
};

namespace detail {

class CheckTracker {
 public:
  explicit CheckTracker(std::string name) { r_.name = std::move(name); }
  /// Records a violation of `magnitude` at step t (the first one sticks).
  void fail(int t, double magnitude, const std::string& note = {}) {
    if (r_.status != CheckStatus::Fail) {
      r_.status = CheckStatus::Fail;
      r_.first_step = t;
      r_.magnitude = magnitude;
      if (!note.empty()) r_.note = note;
    }
  }
  void skip(std::string note) {
    if (r_.status == CheckStatus::Pass) {
      r_.status = CheckStatus::Skip;
      r_.note = std::move(note);
    }
  }
  void note(std::string n) {
    if (r_.note.empty()) r_.note = std::move(n);
  }
  void ran() { ran_ = true; }
  InvariantResult result() const {
    InvariantResult r = r_;
    if (!ran_ && r.status == CheckStatus::Pass) {
      r.status = CheckStatus::Skip;
      if (r.note.empty()) r.note = "not applicable";
    }
    return r;
  }

 private:
  InvariantResult r_;
  bool ran_ = false;
};

inline bool subset_of(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  return std::all_of(a.begin(), a.end(), [&](const Vec& v) {
    return std::any_of(b.begin(), b.end(), [&](const Vec& w) { return same_vec(v, w); });
  });
}

}  // namespace detail

/// Re-verifies a closed-loop log. Pure: the same log gives the same verdict.
inline RunVerdict verify_run(const RunLog& log, const VerifyContext& ctx) {
  using detail::CheckTracker;
  if (!ctx.env) throw ContractViolation("verify_run: no environment");
  const auto& cfg = ctx.cfg;
  const auto& model = ctx.model;
  const bool storage = cfg.uses_storage();
  const double dyn_tol = model.discrete ? 0.0 : ctx.tol;

  CheckTracker in_z("closed_loop_in_Z"), dyn("dynamics_replay"), sensing("sensing_replay"),
      s_nonneg("storage_nonnegative"), s_bound("storage_bound"), storage_rec("storage_recursion"),
      plan("plan_feasible"), shared("shared_first_input"), cand("candidate_feasible"), chain("decrease_chain"),
      mono("safe_set_monotone"), conv("convergence");

  KnowledgeState k(ctx.env, cfg.lambda);
  std::optional<TrajectoryPair> candidate;
  const StepLog* prev = nullptr;
  for (const auto& s : log.steps) {
    const int t = s.t;
    const CostEvaluator& ce = ctx.costs_at(t);
    const bool restart = ctx.restarts_at(t);
    const auto scale = [&](double v) { return ctx.tol * (1.0 + std::abs(v)); };

    // Knowledge replay: recompute the sensing report and apply it.
    const KnowledgeState k_prev = k;
    try {
      const Vec u_sense = candidate ? candidate->backup.inputs[0] : ctx.initial_input;
      const SensingReport rep = sense(k, s.x, u_sense);
      sensing.ran();
      std::vector<int> a = rep.newly_discovered, b = s.newly_discovered;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a != b || !same_vec(rep.center, s.sensed_center)) sensing.fail(t, 1.0, "report differs from replay");
    } catch (const SafetyBreach&) {
      sensing.fail(t, 1.0, "sensing position outside Z");
    }
    k = update_knowledge(k, {s.sensed_center, s.newly_discovered});

    // (f) the safe set only grows and keeps the previous backup plan.
    if (prev) {
      mono.ran();
      bool ok = detail::subset_of(k_prev.sensed_centers(), k.sensed_centers()) &&
                std::includes(k.discovered_obstacles().begin(), k.discovered_obstacles().end(),
                              k_prev.discovered_obstacles().begin(), k_prev.discovered_obstacles().end());
      if (!ok) mono.fail(t, 1.0, "sensed centers or discovered obstacles shrank");
      if (!plan_inside(k.safe(), prev->pair.backup, prev->pair.backup_setpoint)) {
        mono.fail(t, 1.0, "previous backup plan left the safe set");
      }
    }

    // (a) the applied pair is inside Z.
    in_z.ran();
    if (!contains(k.truth(), s.x, s.u)) in_z.fail(t, 1.0);

    shared.ran();
    const auto& p = s.pair;
    if (p.backup.inputs.empty() || !same_vec(p.backup.inputs[0], s.u)) {
      shared.fail(t, 1.0, "applied input differs from the backup's first input");
    } else if (cfg.has_learning()) {
      if (p.learning.inputs.empty()) {
        shared.fail(t, 1.0, "learning plan missing");
      } else {
        const double d = (p.learning.inputs[0] - p.backup.inputs[0]).lpNorm<Eigen::Infinity>();
        if (d != 0.0) shared.fail(t, d);
        const double d1 = (p.learning.states[1] - p.backup.states[1]).lpNorm<Eigen::Infinity>();
        if (d1 > dyn_tol) shared.fail(t, d1, "second states differ");
      }
    }

    const std::optional<double> bound =
        storage && s.F_hat ? std::optional<double>(s.S + *s.F_hat) : std::optional<double>();

    // The returned plan satisfies every constraint exactly.
    plan.ran();
    const PlanCheck pc = check_pair(model, k, cfg, ce, s.x, p, bound, scale(bound.value_or(0.0)));
    if (!pc.ok) plan.fail(t, pc.terminal_residual, pc.failure);

    // (b), (c)
    if (storage) {
      s_nonneg.ran();
      if (s.S < -ctx.tol) s_nonneg.fail(t, -s.S);
      if (bound) {
        s_bound.ran();
        const double F = pair_F(ce, cfg, p);
        if (std::abs(F - s.F_star) > scale(F)) s_bound.fail(t, std::abs(F - s.F_star), "logged F* differs");
        if (s.F_star > *bound + scale(*bound)) s_bound.fail(t, s.F_star - *bound);
      }
    }

    // (d), (e) against the previous step.
    if (prev && !restart) {
      cand.ran();
      if (!candidate) {
        cand.fail(t, 1.0, "candidate could not be formed");
      } else {
        const PlanCheck cc = check_pair(model, k, cfg, ce, s.x, *candidate, bound, scale(bound.value_or(0.0)));
        if (!cc.ok) cand.fail(t, std::max(cc.terminal_residual, cc.storage_excess), cc.failure);
        chain.ran();
        const double lhs = pair_F(ce, cfg, *candidate);
        const double rhs = prev->F_star - cfg.epsilon * ce.stage(prev->x, prev->u, prev->pair.backup_setpoint);
        if (lhs > rhs + scale(rhs)) chain.fail(t, lhs - rhs);
      }
      if (storage) {
        // S_t = S_{t-1} + F_hat_{t-1} - F*_{t-1}; F_hat_t = F*_{t-1} - eps alpha l0.
        storage_rec.ran();
        const double F_hat = prev->F_star - cfg.epsilon * cfg.alpha * prev->stage0;
        const double S = prev->F_hat ? prev->S + *prev->F_hat - prev->F_star : prev->S;
        const double err = std::max(std::abs(S - s.S), s.F_hat ? std::abs(F_hat - *s.F_hat) : 1.0);
        if (err > scale(std::max(std::abs(S), std::abs(F_hat)))) storage_rec.fail(t, err);
      }
    }
    if (std::abs(ce.stage(s.x, s.u, p.backup_setpoint) - s.stage0) > scale(s.stage0)) {
      storage_rec.fail(t, std::abs(ce.stage(s.x, s.u, p.backup_setpoint) - s.stage0), "logged l0 differs");
    }

    // Next state and the candidate it implies.
    candidate.reset();
    const StepLog* next = (&s != &log.steps.back()) ? &s + 1 : nullptr;
    if (next) {
      dyn.ran();
      const double gap = (model.step(s.x, s.u) - next->x).lpNorm<Eigen::Infinity>();
      if (gap > dyn_tol) dyn.fail(next->t, gap);
      try {
        candidate = candidate_shift(model, p, next->x);
      } catch (const std::exception&) {
        candidate.reset();
      }
    }
    prev = &s;
  }

  RunVerdict v;
  // (g) a converged run ends at an admissible steady setpoint.
  const int K = ctx.convergence_window;
  if (static_cast<int>(log.steps.size()) >= K) {
    bool small = true;
    for (auto it = log.steps.end() - K; it != log.steps.end(); ++it) {
      if (ctx.costs_at(it->t).stage(it->x, it->u, it->pair.backup_setpoint) >= ctx.convergence_threshold) small = false;
    }
    if (small) {
      conv.ran();
      const auto& last = log.steps.back();
      const Setpoint& r = last.pair.backup_setpoint;
      v.converged = true;
      v.limit = r;
      if (!is_steady_admissible(model, r, k.setpoint_region(k.safe()), cfg.lambda)) conv.fail(last.t, 1.0, "limit not admissible");
      const double d = (model.output(last.x, last.u) - model.output(r.x, r.u)).norm();
      if (d > ctx.convergence_output_tol) conv.fail(last.t, d, "output away from the limit setpoint");
      std::ostringstream os;
      os << std::setprecision(6) << "limit y=(";
      const Vec y = model.output(r.x, r.u);
      for (Eigen::Index i = 0; i < y.size(); ++i) os << (i ? "," : "") << y[i];
      os << ") T=" << ctx.costs_at(last.t).T(r);
      if (!model.discrete) {
        const bool boundary = !contains_ball(k.truth(), r.x, r.u, 2.0 * cfg.lambda);
        os << " boundary=" << (boundary ? "yes" : "no");
      }
      conv.note(os.str());
    } else {
      std::ostringstream os;
      os << std::setprecision(6) << "not converged, final y=(";
      const auto& last = log.steps.back();
      for (Eigen::Index i = 0; i < last.y.size(); ++i) os << (i ? "," : "") << last.y[i];
      os << ") l0=" << last.stage0;
      conv.skip(os.str());
    }
  } else {
    conv.skip("run shorter than the convergence window");
  }
  if (!log.steps.empty()) v.final_output = log.steps.back().y;

  for (const auto* c : {&in_z, &dyn, &sensing, &s_nonneg, &s_bound, &storage_rec, &plan, &shared, &cand, &chain, &mono, &conv}) {
    v.results.push_back(c->result());
  }
  return v;
}

/// Parses the verdict format written by RunVerdict::format().
inline std::vector<InvariantResult> parse_verdict(std::istream& is) {
  std::vector<InvariantResult> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto hash = line.find("  # ");
    InvariantResult r;
    if (hash != std::string::npos) r.note = line.substr(hash + 4);
    std::istringstream ls(line.substr(0, hash));
    std::string status;
    if (!(ls >> r.name >> status)) throw ParseError("verdict line: " + line);
    if (status == "PASS") {
      r.status = CheckStatus::Pass;
    } else if (status == "FAIL") {
      r.status = CheckStatus::Fail;
      std::string step;
      if (ls >> step >> r.magnitude && step != "-") r.first_step = std::stoi(step);
    } else if (status == "SKIP") {
      r.status = CheckStatus::Skip;
    } else {
      throw ParseError("verdict status: " + status);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace safempc
