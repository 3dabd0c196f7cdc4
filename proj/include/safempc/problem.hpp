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

// Controller configuration and the data the controller carries between steps.

#include <cstdint>
#include <optional>
#include <string>

#include "safempc/nlp.hpp"
#include "safempc/types.hpp"

namespace safempc {

enum class MpcMode {
  Baseline,           ///< single trajectory in the safe set, objective eps*V_N + T
  Proposed,           ///< learning + backup with the storage constraint
  ProposedWithout9j,  ///< learning + backup, storage constraint dropped
};

inline const char* to_string(MpcMode m) {
  switch (m) {
    case MpcMode::Baseline: return "baseline";
    case MpcMode::Proposed: return "proposed";
    case MpcMode::ProposedWithout9j: return "no9j";
  }
  return "?";
}

inline MpcMode parse_mode(const std::string& s) {
  if (s == "baseline") return MpcMode::Baseline;
  if (s == "proposed") return MpcMode::Proposed;
  if (s == "no9j" || s == "proposed_without_9j") return MpcMode::ProposedWithout9j;
  throw ContractViolation("unknown mode '" + s + "' (expected proposed|no9j|baseline)");
}

struct MpcConfig {
  int N = 50;
  double epsilon = 0.01;
  double alpha = 1.0;
  double lambda = 0.01;
  MpcMode mode = MpcMode::Proposed;
  double S0 = 1.0;
  /// Unset means unbounded: the storage constraint is enforced from t = 1.
  std::optional<double> F_hat0;
  SolverOptions solver{1e-9, 1e-4, 30, 300, 1000.0, 10.0, 1e12, 10};
  /// Tightening of knot and setpoint constraints in the continuous
  /// transcription, so solver output is strictly inside the true sets.
  double backoff = 1e-4;
  /// Tightening of the storage constraint in the continuous transcription.
  double storage_backoff = 1e-7;
  /// Feasibility tolerance for exact plan checks (terminal equality).
  double plan_tol = 1e-6;
  int max_starts = 4;
  /// Random rollouts per step searched for a better backup warm start (0
  /// disables the search).
  int shooting_rollouts = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (N < 1) throw ContractViolation("MpcConfig: N must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractViolation("MpcConfig: alpha must lie in (0, 1]");
    if (!(epsilon > 0.0)) throw ContractViolation("MpcConfig: epsilon must be positive");
    if (!(S0 >= 0.0)) throw ContractViolation("MpcConfig: S0 must be nonnegative");
    if (!(lambda >= 0.0)) throw ContractViolation("MpcConfig: lambda must be nonnegative");
    if (max_starts < 1) throw ContractViolation("MpcConfig: max_starts must be >= 1");
    if (shooting_rollouts < 0) throw ContractViolation("MpcConfig: shooting_rollouts must be >= 0");
  }
  bool uses_storage() const { return mode == MpcMode::Proposed; }
  bool has_learning() const { return mode != MpcMode::Baseline; }
};

/// Running storage scalars: S_t, F_hat_t and the last F*.
struct StorageState {
  double S = 0.0;
  /// Unset while unbounded (t = 0 with the default policy).
  std::optional<double> F_hat;
  std::optional<double> F_star_prev;

  /// Right-hand side of the storage constraint, if it is active.
  std::optional<double> bound() const {
    if (!F_hat) return std::nullopt;
    return S + *F_hat;
  }
};

inline StorageState initial_storage(const MpcConfig& cfg) { return {cfg.S0, cfg.F_hat0, std::nullopt}; }

/// Learning and backup plans. Baseline mode carries its single plan in both
/// slots.
struct TrajectoryPair {
  Trajectory learning;
  Trajectory backup;
  Setpoint learning_setpoint;
  Setpoint backup_setpoint;
};

}  // namespace safempc
