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

// Smooth constrained NLP back-end.
//
//   min f(z)  s.t.  c_E(z) = 0,  c_I(z) <= 0,  lower <= z <= upper
//
// Augmented Lagrangian (Powell-Hestenes-Rockafellar) outer loop around a
// bound-constrained limited-memory BFGS inner solver with projected
// backtracking. Constraint derivatives are supplied as vector-Jacobian
// products, which is what an adjoint rollout produces cheaply.

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "safempc/types.hpp"

namespace safempc {

struct VarBlock {
  std::string name;
  int offset = 0;
  int size = 0;
};

struct NlpSpec {
  int n = 0;
  std::vector<VarBlock> blocks;
  Vec lower;
  Vec upper;
  int num_eq = 0;
  int num_ineq = 0;
  /// f(z); writes the gradient when `grad` is non-null.
  std::function<double(const Vec& z, Vec* grad)> objective;
  /// Fills eq (size num_eq) and ineq (size num_ineq, g <= 0 convention).
  std::function<void(const Vec& z, Vec& eq, Vec& ineq)> constraints;
  /// out = J_eq(z)^T w_eq + J_ineq(z)^T w_ineq
  std::function<void(const Vec& z, const Vec& w_eq, const Vec& w_ineq, Vec& out)> constraint_vjp;
  /// Marks specs meant for the exact finite solver (no smooth functions).
  bool discrete = false;

  const VarBlock& block(const std::string& name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return b;
    }
    throw ContractViolation("NlpSpec: no block named " + name);
  }

  void validate() const {
    require_dim(lower, n, "NlpSpec lower");
    require_dim(upper, n, "NlpSpec upper");
    for (int i = 0; i < n; ++i) {
      if (!(lower[i] <= upper[i])) throw ContractViolation("NlpSpec: lower > upper at " + std::to_string(i));
    }
    if (!objective) throw ContractViolation("NlpSpec: objective missing");
    if ((num_eq > 0 || num_ineq > 0) && (!constraints || !constraint_vjp)) {
      throw ContractViolation("NlpSpec: constraints declared without evaluators");
    }
  }
};

struct SolverOptions {
  double feas_tol = 1e-6;
  double stat_tol = 1e-4;
  int max_outer = 30;
  int max_inner = 300;
  double penalty_init = 1000.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e12;
  int memory = 10;
  /// Dense BFGS up to this many variables, limited-memory BFGS above.
  int dense_limit = 600;
  /// Inner line searches reject points whose constraint-violation norm
  /// (Euclidean, over violated rows) exceeds this or the norm at the start
  /// of the inner solve, whichever is larger. Keeps iterates from a feasible
  /// start from tunnelling through obstacles.
  double step_violation_cap = 0.1;
  /// Budget on merit evaluations across all outer iterations.
  int max_evaluations = 6000;
  /// Print one line per outer iteration to stderr.
  bool verbose = false;
};

enum class SolveStatus { Converged, Feasible, Failed };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Failed: return "failed";
  }
  return "?";
}

/// Augmented-Lagrangian state: multiplier estimates and penalty.
struct Multipliers {
  Vec eq, ineq;
  double penalty = 0.0;
};

struct SolveReport {
  Vec point;
  /// Multipliers after the outer iteration that produced `point` (empty if
  /// `point` is the start).
  Multipliers multipliers;
  double objective = 0.0;
  double max_eq_residual = 0.0;
  double max_ineq_violation = 0.0;
  double stationarity = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::Failed;

  double max_violation() const { return std::max(max_eq_residual, max_ineq_violation); }
};

namespace detail {

inline void check_finite(double v, int index, const char* what) {
  if (!std::isfinite(v)) throw NumericalDomainError(std::string("non-finite ") + what, index);
}

struct Residuals {
  Vec eq, ineq;
  double eq_max = 0.0, ineq_max = 0.0;
};

inline Residuals residuals(const NlpSpec& spec, const Vec& z) {
  Residuals r;
  r.eq = Vec::Zero(spec.num_eq);
  r.ineq = Vec::Zero(spec.num_ineq);
  if (spec.num_eq + spec.num_ineq > 0) spec.constraints(z, r.eq, r.ineq);
  for (int i = 0; i < spec.num_eq; ++i) {
    check_finite(r.eq[i], i, "equality constraint");
    r.eq_max = std::max(r.eq_max, std::abs(r.eq[i]));
  }
  for (int i = 0; i < spec.num_ineq; ++i) {
    check_finite(r.ineq[i], spec.num_eq + i, "inequality constraint");
    r.ineq_max = std::max(r.ineq_max, r.ineq[i]);
  }
  return r;
}

inline Vec project(const Vec& z, const Vec& lo, const Vec& hi) { return z.cwiseMax(lo).cwiseMin(hi); }

inline double projected_gradient_norm(const Vec& z, const Vec& g, const Vec& lo, const Vec& hi) {
  return (z - project(z - g, lo, hi)).lpNorm<Eigen::Infinity>();
}

/// Merit function for the inner loop: value, gradient when non-null, and
/// the squared norm of the constraint violation.
using MeritFn = std::function<double(const Vec&, Vec*, double&)>;

/// Curvature of the penalty term at a point (rho * J_A^T J_A over the active
/// rows), used as the known part of a structured Hessian approximation.
using PenaltyCurvatureFn = std::function<Mat(const Vec&)>;

/// Limited-memory BFGS two-loop product H * q.
class LbfgsMemory {
 public:
  explicit LbfgsMemory(int memory) : memory_(memory) {}

  void reset() {
    S_.clear();
    Y_.clear();
    rho_.clear();
  }

  bool empty() const { return S_.empty(); }

  Vec apply(const Vec& q) const {
    Vec r = q;
    std::vector<double> a(S_.size());
    for (int j = static_cast<int>(S_.size()) - 1; j >= 0; --j) {
      const auto sj = static_cast<std::size_t>(j);
      a[sj] = rho_[sj] * S_[sj].dot(r);
      r -= a[sj] * Y_[sj];
    }
    if (!S_.empty()) r *= S_.back().dot(Y_.back()) / Y_.back().squaredNorm();
    for (std::size_t j = 0; j < S_.size(); ++j) r += (a[j] - rho_[j] * Y_[j].dot(r)) * S_[j];
    return r;
  }

  void update(const Vec& s, const Vec& y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-12 * s.norm() * y.norm())) return;
    S_.push_back(s);
    Y_.push_back(y);
    rho_.push_back(1.0 / sy);
    if (static_cast<int>(S_.size()) > memory_) {
      S_.pop_front();
      Y_.pop_front();
      rho_.pop_front();
    }
  }

 private:
  int memory_;
  std::deque<Vec> S_, Y_;
  std::deque<double> rho_;
};

/// Dense Hessian approximation B + G(z): G is the exact penalty curvature,
/// B a BFGS estimate of the rest, updated with the structured secant
/// y - G(z+) s.
class StructuredHessian {
 public:
  explicit StructuredHessian(int n) : n_(n) {}

  void reset() { B_.resize(0, 0); }

  bool empty() const { return B_.size() == 0; }

  /// Solves (B + G) d = -g on the free variables; d = 0 elsewhere. Returns
  /// false when the reduced system is not positive definite.
  bool direction(const Mat& G, const Vec& g, const Eigen::Array<bool, Eigen::Dynamic, 1>& free, Vec& d) const {
    std::vector<int> idx;
    for (int i = 0; i < n_; ++i) {
      if (free[i]) idx.push_back(i);
    }
    const int nf = static_cast<int>(idx.size());
    d = Vec::Zero(n_);
    if (nf == 0) return true;
    Mat K(nf, nf);
    Vec rhs(nf);
    for (int a = 0; a < nf; ++a) {
      rhs[a] = -g[idx[static_cast<std::size_t>(a)]];
      for (int b = 0; b < nf; ++b) {
        const int i = idx[static_cast<std::size_t>(a)], j = idx[static_cast<std::size_t>(b)];
        K(a, b) = G(i, j) + (empty() ? (i == j ? 1.0 : 0.0) : B_(i, j));
      }
    }
    const Eigen::LLT<Mat> llt(K);
    if (llt.info() != Eigen::Success) return false;
    const Vec df = llt.solve(rhs);
    if (!df.allFinite()) return false;
    for (int a = 0; a < nf; ++a) d[idx[static_cast<std::size_t>(a)]] = df[a];
    return true;
  }

  void update(const Vec& s, const Vec& y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-10 * s.norm() * y.norm())) return;
    if (B_.size() == 0) B_ = Mat::Identity(n_, n_) * (y.squaredNorm() / sy);
    const Vec Bs = B_ * s;
    const double sBs = s.dot(Bs);
    if (!(sBs > 0.0)) return;
    B_ += y * y.transpose() / sy - Bs * Bs.transpose() / sBs;
  }

 private:
  int n_;
  Mat B_;
};

/// Bound-constrained minimization with projected Armijo backtracking. With
/// `curvature` it takes structured quasi-Newton steps, otherwise L-BFGS
/// steps. Trial points whose squared violation exceeds max(viol_cap^2,
/// squared violation at entry) fail the line search. Returns the number of
/// iterations.
inline int minimize_bounded(const MeritFn& phi, Vec& z, const Vec& lo, const Vec& hi, double tol, int max_iter,
                            int memory, const PenaltyCurvatureFn& curvature = {},
                            double viol_cap = std::numeric_limits<double>::infinity(), int* evals_left = nullptr) {
  auto spend = [&]() { return evals_left == nullptr || (*evals_left)-- > 0; };
  const int n = static_cast<int>(z.size());
  LbfgsMemory lbfgs(memory);
  StructuredHessian hess(n);
  const bool structured = static_cast<bool>(curvature);
  Vec g(n);
  double hz = 0.0;
  double fz = phi(z, &g, hz);
  const double cap = std::max(viol_cap * viol_cap, hz);
  Mat G = structured ? curvature(z) : Mat();
  int it = 0;
  int stall = 0;
  for (; it < max_iter; ++it) {
    if (projected_gradient_norm(z, g, lo, hi) <= tol) break;
    if (evals_left != nullptr && *evals_left <= 0) break;
    // Variables pinned at a bound by the gradient stay fixed this iteration.
    Eigen::Array<bool, Eigen::Dynamic, 1> free(n);
    for (int i = 0; i < n; ++i) {
      free[i] = !((z[i] <= lo[i] && g[i] > 0.0) || (z[i] >= hi[i] && g[i] < 0.0));
    }
    const Vec gf = free.select(g, 0.0);
    Vec d;
    bool fresh;
    if (structured) {
      fresh = hess.empty();
      if (!hess.direction(G, g, free, d) || !(g.dot(d) < 0.0)) {
        hess.reset();
        fresh = true;
        if (!hess.direction(G, g, free, d) || !(g.dot(d) < 0.0)) d = -gf;
      }
    } else {
      d = free.select(-lbfgs.apply(gf), 0.0);
      if (!(g.dot(d) < 0.0)) {
        lbfgs.reset();
        d = -gf;
      }
      fresh = lbfgs.empty();
    }
    double t = 1.0;
    if (fresh && !structured) t = std::min(1.0, 1.0 / std::max(1e-12, d.lpNorm<Eigen::Infinity>()));
    Vec zt, gt(n);
    double ft = fz;
    bool accepted = false;
    for (int ls = 0; ls < 40 && spend(); ++ls) {
      zt = project(z + t * d, lo, hi);
      double ht = 0.0;
      ft = phi(zt, nullptr, ht);
      if (ht <= cap && ft <= fz + 1e-4 * g.dot(zt - z)) {
        accepted = true;
        phi(zt, &gt, ht);
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (fresh) break;
      hess.reset();
      lbfgs.reset();
      continue;
    }
    const Vec sv = zt - z;
    if (structured) {
      const Mat Gt = curvature(zt);
      hess.update(sv, gt - g - Gt * sv);
      G = Gt;
    } else {
      lbfgs.update(sv, gt - g);
    }
    stall = (fz - ft <= 1e-15 * (1.0 + std::abs(fz))) ? stall + 1 : 0;
    z = zt;
    g = gt;
    fz = ft;
    if (stall >= 3) break;
  }
  return it;
}

}  // namespace detail

/// Recomputes objective and residuals at `z` from scratch.
inline SolveReport evaluate_point(const NlpSpec& spec, const Vec& z) {
  SolveReport rep;
  rep.point = z;
  rep.objective = spec.objective(z, nullptr);
  detail::check_finite(rep.objective, -1, "objective");
  const auto r = detail::residuals(spec, z);
  rep.max_eq_residual = r.eq_max;
  rep.max_ineq_violation = r.ineq_max;
  return rep;
}

/// Augmented-Lagrangian solve from `start` (which must satisfy the bounds).
/// The returned point is the best iterate that meets feas_tol, with the start
/// itself as a candidate, so a feasible start is never made worse.
/// `warm` seeds the multipliers and penalty (when its dimensions match);
/// otherwise they start at zero and penalty_init.
inline SolveReport solve_nlp(const NlpSpec& spec, const Vec& start, const SolverOptions& opt = {},
                             const Multipliers* warm = nullptr) {
  spec.validate();
  require_dim(start, spec.n, "solve_nlp start");
  for (int i = 0; i < spec.n; ++i) {
    if (start[i] < spec.lower[i] || start[i] > spec.upper[i]) {
      throw ContractViolation("solve_nlp: start violates bound " + std::to_string(i));
    }
  }
  const int me = spec.num_eq;
  const int mi = spec.num_ineq;
  Vec lam = Vec::Zero(me);
  Vec mu = Vec::Zero(mi);
  double penalty = opt.penalty_init;
  if (warm && warm->eq.size() == me && warm->ineq.size() == mi && warm->penalty > 0.0) {
    lam = warm->eq;
    mu = warm->ineq.cwiseMax(0.0);
    penalty = std::min(warm->penalty, opt.penalty_max);
  }

  auto lagrangian_grad = [&](const Vec& z, const Vec& weq, const Vec& win, Vec& g) {
    spec.objective(z, &g);
    if (me + mi > 0) {
      Vec jt(spec.n);
      spec.constraint_vjp(z, weq, win, jt);
      g += jt;
    }
  };

  auto phi = [&](const Vec& z, Vec* g, double& h) -> double {
    double f = spec.objective(z, g);
    detail::check_finite(f, -1, "objective");
    const auto r = detail::residuals(spec, z);
    h = r.eq.squaredNorm() + r.ineq.cwiseMax(0.0).squaredNorm();
    const Vec weq = lam + penalty * r.eq;
    const Vec win = (mu + penalty * r.ineq).cwiseMax(0.0);
    f += lam.dot(r.eq) + 0.5 * penalty * r.eq.squaredNorm() + (win.squaredNorm() - mu.squaredNorm()) / (2.0 * penalty);
    if (g && me + mi > 0) {
      Vec jt(spec.n);
      spec.constraint_vjp(z, weq, win, jt);
      *g += jt;
    }
    return f;
  };

  // rho * J^T J over equality rows and inequality rows inside the penalty
  // region, with Jacobian rows taken from unit-weight VJPs.
  auto curvature = [&](const Vec& z) -> Mat {
    const auto r = detail::residuals(spec, z);
    Mat G = Mat::Zero(spec.n, spec.n);
    Vec weq = Vec::Zero(me), win = Vec::Zero(mi), row(spec.n);
    auto add_row = [&](Vec& w, int i) {
      w[i] = 1.0;
      spec.constraint_vjp(z, weq, win, row);
      w[i] = 0.0;
      G.selfadjointView<Eigen::Lower>().rankUpdate(row, penalty);
    };
    for (int i = 0; i < me; ++i) add_row(weq, i);
    for (int i = 0; i < mi; ++i) {
      if (mu[i] + penalty * r.ineq[i] > 0.0) add_row(win, i);
    }
    return Mat(G.selfadjointView<Eigen::Lower>());
  };

  SolveReport best = evaluate_point(spec, start);
  bool have_feasible = best.max_violation() <= opt.feas_tol;
  Vec z = start;
  double prev_viol = best.max_violation();
  int total_iter = 0;
  SolveReport last = best;
  bool converged = false;
  int evals_left = opt.max_evaluations;
  for (int outer = 0; outer < opt.max_outer && evals_left > 0; ++outer) {
    const double inner_tol = std::max(0.1 * opt.stat_tol, std::min(1e-1, 1.0 / penalty));
    total_iter += detail::minimize_bounded(phi, z, spec.lower, spec.upper, inner_tol, opt.max_inner, opt.memory,
                                           spec.n <= opt.dense_limit ? curvature : detail::PenaltyCurvatureFn{},
                                           opt.step_violation_cap, &evals_left);
    last = evaluate_point(spec, z);
    const auto r = detail::residuals(spec, z);
    const Vec lam_next = lam + penalty * r.eq;
    const Vec mu_next = (mu + penalty * r.ineq).cwiseMax(0.0);
    Vec g(spec.n);
    lagrangian_grad(z, lam_next, mu_next, g);
    last.stationarity = detail::projected_gradient_norm(z, g, spec.lower, spec.upper);
    last.multipliers = {lam_next, mu_next, penalty};
    const double viol = last.max_violation();
    if (opt.verbose) {
      std::fprintf(stderr, "outer %2d  f=%.8g  viol=%.3e  stat=%.3e  rho=%.1e  inner_total=%d\n", outer, last.objective,
                   viol, last.stationarity, penalty, total_iter);
    }
    if (viol <= opt.feas_tol && (!have_feasible || last.objective < best.objective)) {
      best = last;
      have_feasible = true;
    }
    if (viol <= opt.feas_tol && last.stationarity <= opt.stat_tol) {
      converged = true;
      best = last.objective <= best.objective ? last : best;
      break;
    }
    lam = lam_next;
    mu = mu_next;
    if (viol > opt.feas_tol && viol > 0.25 * prev_viol) penalty = std::min(opt.penalty_max, penalty * opt.penalty_growth);
    prev_viol = viol;
  }
  SolveReport out = have_feasible ? best : last;
  const SolveReport fresh = evaluate_point(spec, out.point);
  out.objective = fresh.objective;
  out.max_eq_residual = fresh.max_eq_residual;
  out.max_ineq_violation = fresh.max_ineq_violation;
  out.iterations = total_iter;
  if (!have_feasible) {
    out.status = SolveStatus::Failed;
  } else {
    out.status = converged ? SolveStatus::Converged : SolveStatus::Feasible;
  }
  return out;
}

struct GradientCheck {
  double objective_deviation = 0.0;
  double jacobian_deviation = 0.0;
  int worst_variable = -1;
  int worst_constraint = -1;

  double max_deviation() const { return std::max(objective_deviation, jacobian_deviation); }
};

/// Compares supplied derivatives to central differences with step
/// 1e-6 * max(1, |z_j|). Deviation per entry is |a - b| / max(1, |a|, |b|).
inline GradientCheck check_gradients(const NlpSpec& spec, const Vec& z) {
  spec.validate();
  require_dim(z, spec.n, "check_gradients point");
  auto dev = [](double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); };
  GradientCheck out;
  Vec g(spec.n);
  spec.objective(z, &g);
  const int mc = spec.num_eq + spec.num_ineq;
  Mat J(mc, spec.n);
  for (int i = 0; i < mc; ++i) {
    Vec weq = Vec::Zero(spec.num_eq), win = Vec::Zero(spec.num_ineq);
    if (i < spec.num_eq) {
      weq[i] = 1.0;
    } else {
      win[i - spec.num_eq] = 1.0;
    }
    Vec row(spec.n);
    spec.constraint_vjp(z, weq, win, row);
    J.row(i) = row.transpose();
  }
  for (int j = 0; j < spec.n; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(z[j]));
    Vec zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    const double fd = (spec.objective(zp, nullptr) - spec.objective(zm, nullptr)) / (2.0 * h);
    if (dev(g[j], fd) > out.objective_deviation) {
      out.objective_deviation = dev(g[j], fd);
      out.worst_variable = j;
    }
    if (mc == 0) continue;
    Vec ep(spec.num_eq), ip(spec.num_ineq), em(spec.num_eq), im(spec.num_ineq);
    spec.constraints(zp, ep, ip);
    spec.constraints(zm, em, im);
    const Vec cp = concat(ep, ip);
    const Vec cm = concat(em, im);
    for (int i = 0; i < mc; ++i) {
      const double d = dev(J(i, j), (cp[i] - cm[i]) / (2.0 * h));
      if (d > out.jacobian_deviation) {
        out.jacobian_deviation = d;
        out.worst_constraint = i;
        out.worst_variable = j;
      }
    }
  }
  return out;
}

}  // namespace safempc
