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

/**
 * @file
 * @brief Discrete-time plant models x+ = f(x, u), y = h(x, u).
 *
 * Two families live here:
 *  - smooth models (kinematic bicycle, planar single integrator) that expose
 *    Jacobians and a parameterization of their steady-state manifold, used by
 *    the NLP transcription;
 *  - lattice models (x+ = u and x+ = x + u over integer-valued vectors) used
 *    by the exact finite scenarios.
 *
 * Every model can be erased into a SystemModel value, which is what the
 * environment, cost and analysis code consume.
 */

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "safempc/types.hpp"

namespace safempc {

/// Type-erased plant. Immutable after construction; safe to share.
struct SystemModel {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  int output_dim = 0;
  std::function<Vec(const Vec&, const Vec&)> step_fn;
  std::function<Vec(const Vec&, const Vec&)> output_fn;
  /// Present only for discretized continuous-time models.
  std::optional<double> sample_time;
  /// True for lattice models: states and inputs are integer-valued and
  /// steady-state tests are exact.
  bool discrete = false;

  Vec step(const Vec& x, const Vec& u) const {
    require_dim(x, state_dim, "state");
    require_dim(u, input_dim, "input");
    return step_fn(x, u);
  }
  Vec output(const Vec& x, const Vec& u) const {
    require_dim(x, state_dim, "state");
    require_dim(u, input_dim, "input");
    return output_fn(x, u);
  }
};

// ─── Kinematic bicycle ──────────────────────────────────────────────────────

struct BicycleParams {
  double l_r = 1.7;          ///< center of mass to rear axle [m]
  double sample_time = 0.2;  ///< Euler step [s]

  void validate() const {
    if (!(l_r > 0.0)) throw ContractViolation("BicycleParams: l_r must be positive");
    if (!(sample_time > 0.0)) throw ContractViolation("BicycleParams: sample_time must be positive");
  }
};

/// Continuous-time right-hand side of the kinematic bicycle,
/// state [x1, x2, psi, v, beta], input [accel, steering rate].
inline Vec bicycle_rhs(const Vec& x, const Vec& u, const BicycleParams& p) {
  require_dim(x, 5, "bicycle state");
  require_dim(u, 2, "bicycle input");
  const double v = x[3];
  const double heading = x[2] + x[4];
  Vec dx(5);
  dx << v * std::cos(heading), v * std::sin(heading), v / p.l_r * std::sin(x[4]), u[0], u[1];
  return dx;
}

/// One forward-Euler step of the kinematic bicycle.
inline Vec bicycle_step(const Vec& x, const Vec& u, const BicycleParams& p) {
  return x + p.sample_time * bicycle_rhs(x, u, p);
}

/// Integer toy plant x+ = u.
constexpr long toy_step(long /*x*/, long u) { return u; }

/// Smooth model interface used by the NLP transcription. The steady-state
/// manifold is described by a parameter vector p -> (x_s(p), u_s(p)).
template <typename M>
concept DifferentiableModel = requires(const M& m, const Vec& x, const Vec& u, Mat& A, Mat& B, const Vec& p) {
  { m.state_dim() } -> std::convertible_to<int>;
  { m.input_dim() } -> std::convertible_to<int>;
  { m.output_dim() } -> std::convertible_to<int>;
  { m.steady_param_dim() } -> std::convertible_to<int>;
  { m.step(x, u) } -> std::convertible_to<Vec>;
  m.jacobians(x, u, A, B);
  { m.output(x, u) } -> std::convertible_to<Vec>;
  { m.output_state_jacobian() } -> std::convertible_to<Mat>;
  { m.steady(p) } -> std::convertible_to<Setpoint>;
  { m.steady_state_jacobian() } -> std::convertible_to<Mat>;
  { m.steady_params(std::declval<const Setpoint&>()) } -> std::convertible_to<Vec>;
};

class BicycleModel {
 public:
  explicit BicycleModel(BicycleParams params = {}) : params_(params) { params_.validate(); }

  const BicycleParams& params() const { return params_; }
  int state_dim() const { return 5; }
  int input_dim() const { return 2; }
  int output_dim() const { return 2; }

  Vec step(const Vec& x, const Vec& u) const { return bicycle_step(x, u, params_); }

  /// A = df/dx, B = df/du of the Euler map.
  void jacobians(const Vec& x, const Vec& u, Mat& A, Mat& B) const {
    require_dim(x, 5, "bicycle state");
    require_dim(u, 2, "bicycle input");
    const double h = params_.sample_time;
    const double v = x[3];
    const double c = std::cos(x[2] + x[4]);
    const double s = std::sin(x[2] + x[4]);
    A.setIdentity(5, 5);
    A(0, 2) = -h * v * s;
    A(0, 3) = h * c;
    A(0, 4) = -h * v * s;
    A(1, 2) = h * v * c;
    A(1, 3) = h * s;
    A(1, 4) = h * v * c;
    A(2, 3) = h * std::sin(x[4]) / params_.l_r;
    A(2, 4) = h * v * std::cos(x[4]) / params_.l_r;
    B.setZero(5, 2);
    B(3, 0) = h;
    B(4, 1) = h;
  }

  /// Output is the planar position of the center of mass.
  Vec output(const Vec& x, const Vec& /*u*/) const { return x.head<2>(); }
  Mat output_state_jacobian() const {
    Mat C = Mat::Zero(2, 5);
    C(0, 0) = 1.0;
    C(1, 1) = 1.0;
    return C;
  }

  // Steady states of the Euler map have v = 0 and u = 0; position, heading
  // and slip angle are free. Parameters p = [x1, x2, psi, beta].
  int steady_param_dim() const { return 4; }
  Setpoint steady(const Vec& p) const {
    require_dim(p, 4, "bicycle steady parameters");
    Setpoint r{Vec::Zero(5), Vec::Zero(2)};
    r.x << p[0], p[1], p[2], 0.0, p[3];
    return r;
  }
  /// d x_s / d p (u_s is constant).
  Mat steady_state_jacobian() const {
    Mat J = Mat::Zero(5, 4);
    J(0, 0) = 1.0;
    J(1, 1) = 1.0;
    J(2, 2) = 1.0;
    J(4, 3) = 1.0;
    return J;
  }
  Vec steady_params(const Setpoint& r) const { return make_vec({r.x[0], r.x[1], r.x[2], r.x[4]}); }
  /// Maps each steady parameter to the state coordinate it equals.
  std::vector<int> steady_param_state_index() const { return {0, 1, 2, 4}; }

  SystemModel as_system() const {
    SystemModel m;
    m.name = "bicycle";
    m.state_dim = 5;
    m.input_dim = 2;
    m.output_dim = 2;
    const BicycleParams p = params_;
    m.step_fn = [p](const Vec& x, const Vec& u) { return bicycle_step(x, u, p); };
    m.output_fn = [](const Vec& x, const Vec&) -> Vec { return x.head<2>(); };
    m.sample_time = p.sample_time;
    return m;
  }

 private:
  BicycleParams params_;
};

/// Planar single integrator x+ = x + h u, y = x. Small test plant for the
/// NLP back-end.
class SingleIntegrator2D {
 public:
  explicit SingleIntegrator2D(double sample_time = 1.0) : h_(sample_time) {
    if (!(h_ > 0.0)) throw ContractViolation("SingleIntegrator2D: sample_time must be positive");
  }
  int state_dim() const { return 2; }
  int input_dim() const { return 2; }
  int output_dim() const { return 2; }
  Vec step(const Vec& x, const Vec& u) const { return x + h_ * u; }
  void jacobians(const Vec&, const Vec&, Mat& A, Mat& B) const {
    A.setIdentity(2, 2);
    B = h_ * Mat::Identity(2, 2);
  }
  Vec output(const Vec& x, const Vec&) const { return x; }
  Mat output_state_jacobian() const { return Mat::Identity(2, 2); }
  int steady_param_dim() const { return 2; }
  Setpoint steady(const Vec& p) const { return {p, Vec::Zero(2)}; }
  Mat steady_state_jacobian() const { return Mat::Identity(2, 2); }
  Vec steady_params(const Setpoint& r) const { return r.x; }
  std::vector<int> steady_param_state_index() const { return {0, 1}; }

  SystemModel as_system() const {
    SystemModel m;
    m.name = "single_integrator";
    m.state_dim = 2;
    m.input_dim = 2;
    m.output_dim = 2;
    const double h = h_;
    m.step_fn = [h](const Vec& x, const Vec& u) -> Vec { return x + h * u; };
    m.output_fn = [](const Vec& x, const Vec&) -> Vec { return x; };
    m.sample_time = h;
    return m;
  }

 private:
  double h_;
};

// ─── Lattice models ─────────────────────────────────────────────────────────

/// x+ = u over integer vectors of dimension `dim` (the counter-example plant).
inline SystemModel lattice_shift_model(int dim = 1) {
  SystemModel m;
  m.name = "lattice_shift";
  m.state_dim = dim;
  m.input_dim = dim;
  m.output_dim = dim;
  m.step_fn = [](const Vec&, const Vec& u) -> Vec { return u; };
  m.output_fn = [](const Vec& x, const Vec&) -> Vec { return x; };
  m.discrete = true;
  return m;
}

/// x+ = x + u over integer vectors (grid worlds).
inline SystemModel lattice_increment_model(int dim) {
  SystemModel m;
  m.name = "lattice_increment";
  m.state_dim = dim;
  m.input_dim = dim;
  m.output_dim = dim;
  m.step_fn = [](const Vec& x, const Vec& u) -> Vec { return x + u; };
  m.output_fn = [](const Vec& x, const Vec&) -> Vec { return x; };
  m.discrete = true;
  return m;
}

// ─── Trajectory utilities ───────────────────────────────────────────────────

inline Trajectory rollout(const SystemModel& model, const Vec& x0, const std::vector<Vec>& inputs) {
  if (inputs.empty()) throw ContractViolation("rollout: input sequence is empty");
  require_dim(x0, model.state_dim, "rollout initial state");
  Trajectory traj;
  traj.states.reserve(inputs.size() + 1);
  traj.inputs = inputs;
  traj.states.push_back(x0);
  for (const Vec& u : inputs) traj.states.push_back(model.step(traj.states.back(), u));
  return traj;
}

template <DifferentiableModel M>
Trajectory rollout(const M& model, const Vec& x0, const std::vector<Vec>& inputs) {
  if (inputs.empty()) throw ContractViolation("rollout: input sequence is empty");
  require_dim(x0, model.state_dim(), "rollout initial state");
  Trajectory traj;
  traj.inputs = inputs;
  traj.states.push_back(x0);
  for (const Vec& u : inputs) {
    require_dim(u, model.input_dim(), "rollout input");
    traj.states.push_back(model.step(traj.states.back(), u));
  }
  return traj;
}

/// max_k ||x_{k+1} - f(x_k, u_k)||_inf; exactly zero for consistent lattice
/// trajectories.
inline double dynamic_inconsistency(const SystemModel& model, const Trajectory& traj) {
  if (traj.states.size() != traj.inputs.size() + 1) {
    throw ContractViolation("trajectory must have one more state than inputs");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    worst = std::max(worst, (model.step(traj.states[k], traj.inputs[k]) - traj.states[k + 1]).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

/// ||f(x_s, u_s) - x_s|| (Euclidean).
inline double steady_residual(const SystemModel& model, const Setpoint& r) {
  return (model.step(r.x, r.u) - r.x).norm();
}

/// Tolerance used to call a setpoint steady: exact for lattice models.
inline double steady_tolerance(const SystemModel& model) { return model.discrete ? 0.0 : 1e-8; }

}  // namespace safempc
