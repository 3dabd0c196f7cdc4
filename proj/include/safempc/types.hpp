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

#include <Eigen/Core>

#include <string>
#include <vector>

#include "safempc/errors.hpp"

namespace safempc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Steady state/input pair (artificial setpoint). Admissibility is a query,
/// see is_steady_admissible().
struct Setpoint {
  Vec x;
  Vec u;
};

/// A (state, input) pair, the element type of every constraint set.
struct StateInput {
  Vec x;
  Vec u;
};

/// Open-loop trajectory: states[0..N], inputs[0..N-1].
struct Trajectory {
  std::vector<Vec> states;
  std::vector<Vec> inputs;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

inline Vec make_vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

inline void require_dim(const Vec& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw ContractViolation(std::string(what) + ": expected dimension " + std::to_string(n) + ", got " +
                            std::to_string(v.size()));
  }
}

/// Exact equality for integer-valued (lattice) vectors; bitwise for doubles.
inline bool same_vec(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

/// Strict lexicographic order on vectors of equal length.
inline bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return a.size() < b.size();
}

}  // namespace safempc
