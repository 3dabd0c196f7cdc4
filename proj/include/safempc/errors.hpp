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

#include <stdexcept>
#include <string>

namespace safempc {

/// Dimension mismatch or a violated precondition on a call.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The real system left (or was asked to act outside) the true constraint set.
/// Aborts a closed-loop run.
class SafetyBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No feasible plan could be constructed at the start of a run.
class InfeasibleStart : public SafetyBreach {
 public:
  using SafetyBreach::SafetyBreach;
};

/// The shifted candidate was infeasible. Must never fire under nominal dynamics.
class RecursiveFeasibilityBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A runtime invariant (storage bound, decrease chain, ...) failed.
class InvariantBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoSteadySetpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScenarioTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelInconsistency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared while evaluating an NLP function.
class NumericalDomainError : public std::runtime_error {
 public:
  NumericalDomainError(const std::string& what, int constraint_index)
      : std::runtime_error(what), constraint_index_(constraint_index) {}
  /// -1 for the objective.
  int constraint_index() const noexcept { return constraint_index_; }

 private:
  int constraint_index_;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace safempc
