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

// Continuous-scenario transcription of the learning/backup problem into an
// NlpSpec, by single shooting over the input sequences.
//
// Decision vector (blocks):
//   u0  shared first input
//   uL  learning inputs 1..N-1     (absent in baseline mode)
//   uB  backup inputs 1..N-1
//   pL  learning steady parameters (absent in baseline mode)
//   pB  backup steady parameters
//
// States are rolled out from x_t, so dynamics and the shared initial state
// hold by construction and the shared first input is one variable. Set
// membership of knots k = 1..N-1 and of the setpoints is imposed on one DNF
// branch per knot, chosen from a hint plan (the warm start). Terminal
// equality x_N = x_s(p) is an equality block. Derivatives come from an
// adjoint pass through the rollout.

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "safempc/costs.hpp"
#include "safempc/dynamics.hpp"
#include "safempc/knowledge.hpp"
#include "safempc/nlp.hpp"
#include "safempc/problem.hpp"

namespace safempc {

/// Index of the branch whose inside disks hold (x, u) deepest; branches
/// without inside disks score +inf. Ties keep the first branch.
inline int pick_branch(const std::vector<ConvexBranch>& branches, const Vec& x, const Vec& u) {
  if (branches.empty()) throw ContractViolation("pick_branch: region has no branches");
  int best = 0;
  double best_score = -kInf;
  for (int b = 0; b < static_cast<int>(branches.size()); ++b) {
    double score = kInf;
    for (const auto& d : branches[static_cast<std::size_t>(b)].inside) {
      score = std::min(score, d.radius - detail::disk_distance(d, x, u));
    }
    if (score > best_score) {
      best_score = score;
      best = b;
    }
  }
  return best;
}

namespace detail {

template <DifferentiableModel M>
class TranscriptionImpl {
 public:
  enum class RowKind { Lower, Upper, Outside, Inside };
  /// Owners 0/1 are learning/backup knots, 2/3 learning/backup setpoints.
  struct Row {
    RowKind kind;
    int owner;
    int knot;
    int coord;
    double bound;
    std::array<int, 2> coords{0, 1};
    double cx = 0.0, cy = 0.0;
  };

  /// `bound` is S_t + F_hat_t when the storage constraint is active.
  TranscriptionImpl(const M& model, const KnowledgeState& k, const MpcConfig& cfg, const CostConfig& costs,
                          const Vec& x_t, std::optional<double> bound, const TrajectoryPair& hint)
      : model_(model), cfg_(cfg), costs_(costs), x_t_(x_t), bound_(bound) {
    cfg_.validate();
    n_ = model.state_dim();
    m_ = model.input_dim();
    np_ = model.steady_param_dim();
    N_ = cfg.N;
    require_dim(x_t, n_, "transcription initial state");
    learning_ = cfg.has_learning();
    if (cfg.mode != MpcMode::Proposed) bound_.reset();
    Js_ = model.steady_state_jacobian();
    C_ = model.output_state_jacobian();
    const Setpoint r0 = model.steady(Vec::Zero(np_));
    us_ = r0.u;

    const auto safe_br = to_branches(k.safe(), n_ + m_);
    const auto safe_sp = to_branches(k.setpoint_region(k.safe()), n_ + m_);
    std::vector<ConvexBranch> est_br, est_sp;
    if (learning_) {
      est_br = to_branches(k.estimated(), n_ + m_);
      est_sp = to_branches(k.setpoint_region(k.estimated()), n_ + m_);
    }
    if (safe_br.empty() || (learning_ && est_br.empty())) throw InfeasibleStart("transcription: empty region");

    // Layout.
    int off = 0;
    auto add_block = [&](const char* name, int size) {
      spec_.blocks.push_back({name, off, size});
      off += size;
    };
    add_block("u0", m_);
    if (learning_) add_block("uL", (N_ - 1) * m_);
    add_block("uB", (N_ - 1) * m_);
    if (learning_) add_block("pL", np_);
    add_block("pB", np_);
    spec_.n = off;
    spec_.lower = Vec::Constant(off, -kInf);
    spec_.upper = Vec::Constant(off, kInf);

    const Vec ulo_b = safe_br.front().lower.tail(m_), uhi_b = safe_br.front().upper.tail(m_);
    Vec ulo_l = ulo_b, uhi_l = uhi_b;
    if (learning_) {
      ulo_l = est_br.front().lower.tail(m_);
      uhi_l = est_br.front().upper.tail(m_);
    }
    spec_.lower.segment(0, m_) = ulo_b.cwiseMax(ulo_l);
    spec_.upper.segment(0, m_) = uhi_b.cwiseMin(uhi_l);
    for (int k2 = 1; k2 < N_; ++k2) {
      spec_.lower.segment(input_offset(1, k2), m_) = ulo_b;
      spec_.upper.segment(input_offset(1, k2), m_) = uhi_b;
      if (learning_) {
        spec_.lower.segment(input_offset(0, k2), m_) = ulo_l;
        spec_.upper.segment(input_offset(0, k2), m_) = uhi_l;
      }
    }

    // Knot rows.
    for (int owner = learning_ ? 0 : 1; owner <= 1; ++owner) {
      const auto& br = owner == 0 ? est_br : safe_br;
      const Trajectory& h = owner == 0 ? hint.learning : hint.backup;
      for (int kk = 1; kk < N_; ++kk) {
        const bool have_hint = static_cast<int>(h.inputs.size()) > kk;
        const int b = have_hint ? pick_branch(br, h.states[static_cast<std::size_t>(kk)], h.inputs[static_cast<std::size_t>(kk)]) : 0;
        add_branch_rows(br[static_cast<std::size_t>(b)], owner, kk, cfg.backoff, /*state_box=*/true);
      }
    }
    // Setpoint rows and parameter bounds.
    for (int owner = learning_ ? 2 : 3; owner <= 3; ++owner) {
      const auto& br = owner == 2 ? est_sp : safe_sp;
      const Setpoint& r = owner == 2 ? hint.learning_setpoint : hint.backup_setpoint;
      const int b = r.x.size() == n_ ? pick_branch(br, r.x, r.u) : 0;
      const auto& branch = br[static_cast<std::size_t>(b)];
      add_branch_rows(branch, owner, 0, cfg.lambda + cfg.backoff, /*state_box=*/false);
      set_param_bounds(branch, owner == 2 ? "pL" : "pB", cfg.lambda + cfg.backoff);
    }
    num_rows_ = static_cast<int>(rows_.size());
    spec_.num_eq = (learning_ ? 2 : 1) * n_;
    spec_.num_ineq = num_rows_ + (bound_ ? 1 : 0);

    cache_ = std::make_shared<Cache>();
  }

  const NlpSpec& layout() const { return spec_; }
  const std::vector<Row>& rows() const { return rows_; }
  bool has_learning() const { return learning_; }

  /// Decision vector for a plan pair, clamped into the variable bounds.
  Vec pack(const TrajectoryPair& pair) const {
    Vec z(spec_.n);
    if (pair.backup.horizon() != N_ || (learning_ && pair.learning.horizon() != N_)) {
      throw ContractViolation("pack: plan horizon differs from N");
    }
    z.segment(0, m_) = pair.backup.inputs[0];
    for (int kk = 1; kk < N_; ++kk) {
      z.segment(input_offset(1, kk), m_) = pair.backup.inputs[static_cast<std::size_t>(kk)];
      if (learning_) z.segment(input_offset(0, kk), m_) = pair.learning.inputs[static_cast<std::size_t>(kk)];
    }
    z.segment(spec_.block("pB").offset, np_) = model_.steady_params(pair.backup_setpoint);
    if (learning_) z.segment(spec_.block("pL").offset, np_) = model_.steady_params(pair.learning_setpoint);
    return detail::project(z, spec_.lower, spec_.upper);
  }

  /// Plan pair for a decision vector (baseline: backup copied into learning).
  TrajectoryPair unpack(const Vec& z) const {
    TrajectoryPair out;
    out.backup = rollout(model_, x_t_, inputs_of(z, 1));
    out.backup_setpoint = model_.steady(z.segment(spec_.block("pB").offset, np_));
    if (learning_) {
      out.learning = rollout(model_, x_t_, inputs_of(z, 0));
      out.learning_setpoint = model_.steady(z.segment(spec_.block("pL").offset, np_));
    } else {
      out.learning = out.backup;
      out.learning_setpoint = out.backup_setpoint;
    }
    return out;
  }

 private:
  struct Cache {
    Vec z;
    bool valid = false;
    std::array<std::vector<Vec>, 2> x, u;
    std::array<std::vector<Mat>, 2> A, B;
    std::array<Setpoint, 2> r;
  };

 private:
  int input_offset(int owner, int kk) const {
    if (kk == 0) return 0;
    if (owner == 0) return m_ + (kk - 1) * m_;
    return m_ + (learning_ ? (N_ - 1) * m_ : 0) + (kk - 1) * m_;
  }
  int param_offset(int owner) const { return spec_.block(owner == 0 ? "pL" : "pB").offset; }

  std::vector<Vec> inputs_of(const Vec& z, int owner) const {
    std::vector<Vec> us(static_cast<std::size_t>(N_));
    for (int kk = 0; kk < N_; ++kk) us[static_cast<std::size_t>(kk)] = z.segment(input_offset(owner, kk), m_);
    return us;
  }

  void add_branch_rows(const ConvexBranch& b, int owner, int knot, double margin, bool state_box) {
    if (state_box) {
      for (int i = 0; i < n_; ++i) {
        if (std::isfinite(b.lower[i])) rows_.push_back({RowKind::Lower, owner, knot, i, b.lower[i] + margin});
        if (std::isfinite(b.upper[i])) rows_.push_back({RowKind::Upper, owner, knot, i, b.upper[i] - margin});
      }
    }
    for (const auto& d : b.outside) {
      const double rr = d.radius + margin;
      rows_.push_back({RowKind::Outside, owner, knot, -1, rr * rr, d.coords, d.center[0], d.center[1]});
    }
    for (const auto& d : b.inside) {
      const double rr = std::max(0.0, d.radius - margin);
      rows_.push_back({RowKind::Inside, owner, knot, -1, rr * rr, d.coords, d.center[0], d.center[1]});
    }
  }

  /// Box rows of a setpoint become bounds on the steady parameters; box
  /// coordinates the parameters do not reach are checked once here.
  void set_param_bounds(const ConvexBranch& b, const char* block, double margin) {
    const auto idx = model_.steady_param_state_index();
    const int off = spec_.block(block).offset;
    const Setpoint r0 = model_.steady(Vec::Zero(np_));
    std::vector<bool> covered(static_cast<std::size_t>(n_), false);
    for (int j = 0; j < np_; ++j) {
      const int i = idx[static_cast<std::size_t>(j)];
      covered[static_cast<std::size_t>(i)] = true;
      spec_.lower[off + j] = b.lower[i] + margin;
      spec_.upper[off + j] = b.upper[i] - margin;
      if (spec_.lower[off + j] > spec_.upper[off + j]) throw NoSteadySetpoint("setpoint box thinner than the margin");
    }
    for (int i = 0; i < n_; ++i) {
      if (covered[static_cast<std::size_t>(i)]) continue;
      if (r0.x[i] - b.lower[i] < margin || b.upper[i] - r0.x[i] < margin) {
        throw NoSteadySetpoint("steady state coordinate outside the admissible box");
      }
    }
    for (int j = 0; j < m_; ++j) {
      if (r0.u[j] - b.lower[n_ + j] < margin || b.upper[n_ + j] - r0.u[j] < margin) {
        throw NoSteadySetpoint("steady input outside the admissible box");
      }
    }
  }

  void ensure(const Vec& z) const {
    Cache& c = *cache_;
    if (c.valid && c.z.size() == z.size() && same_vec(c.z, z)) return;
    c.z = z;
    for (int owner = learning_ ? 0 : 1; owner <= 1; ++owner) {
      auto& xs = c.x[static_cast<std::size_t>(owner)];
      auto& us = c.u[static_cast<std::size_t>(owner)];
      auto& As = c.A[static_cast<std::size_t>(owner)];
      auto& Bs = c.B[static_cast<std::size_t>(owner)];
      us = inputs_of(z, owner);
      xs.resize(static_cast<std::size_t>(N_ + 1));
      As.resize(static_cast<std::size_t>(N_));
      Bs.resize(static_cast<std::size_t>(N_));
      xs[0] = x_t_;
      for (int kk = 0; kk < N_; ++kk) {
        const auto s = static_cast<std::size_t>(kk);
        model_.jacobians(xs[s], us[s], As[s], Bs[s]);
        xs[s + 1] = model_.step(xs[s], us[s]);
      }
      c.r[static_cast<std::size_t>(owner)] = model_.steady(z.segment(param_offset(owner), np_));
    }
    c.valid = true;
  }

  double offset_value(const Setpoint& r, Vec* gp) const {
    const Vec e = C_ * r.x - costs_.y_desired;
    const Vec Pe = costs_.P * e;
    if (gp) *gp = Js_.transpose() * (C_.transpose() * (2.0 * Pe));
    return e.dot(Pe);
  }

  /// V_N of one plan; accumulates scaled gradients into gx/gu/gp.
  double tracking_value(int owner, double scale, std::vector<Vec>* gx, std::vector<Vec>* gu, Vec* gp) const {
    const Cache& c = *cache_;
    const auto o = static_cast<std::size_t>(owner);
    const Setpoint& r = c.r[o];
    double v = 0.0;
    for (int kk = 0; kk < N_; ++kk) {
      const auto s = static_cast<std::size_t>(kk);
      const Vec dx = c.x[o][s] - r.x;
      const Vec du = c.u[o][s] - r.u;
      const Vec Qdx = costs_.Q * dx;
      const Vec Rdu = costs_.R * du;
      v += dx.dot(Qdx) + du.dot(Rdu);
      if (gx) {
        (*gx)[s] += 2.0 * scale * Qdx;
        (*gu)[s] += 2.0 * scale * Rdu;
        *gp -= 2.0 * scale * (Js_.transpose() * Qdx);
      }
    }
    return v;
  }

  /// Adjoint pass: input gradients from state and input sensitivities.
  void backprop(int owner, const std::vector<Vec>& gx, std::vector<Vec>& gu) const {
    const Cache& c = *cache_;
    const auto o = static_cast<std::size_t>(owner);
    Vec lam = gx[static_cast<std::size_t>(N_)];
    for (int kk = N_ - 1; kk >= 0; --kk) {
      const auto s = static_cast<std::size_t>(kk);
      gu[s] += c.B[o][s].transpose() * lam;
      lam = gx[s] + c.A[o][s].transpose() * lam;
    }
  }

  void scatter(int owner, const std::vector<Vec>& gu, const Vec& gp, Vec& out) const {
    for (int kk = 0; kk < N_; ++kk) out.segment(input_offset(owner, kk), m_) += gu[static_cast<std::size_t>(kk)];
    out.segment(param_offset(owner), np_) += gp;
  }

  double storage_value(Vec* g) const {
    // eps * V_N(backup) + T(r_B) - bound + storage_backoff
    std::vector<Vec> gx, gu;
    Vec gp = Vec::Zero(np_), gT;
    if (g) {
      gx.assign(static_cast<std::size_t>(N_ + 1), Vec::Zero(n_));
      gu.assign(static_cast<std::size_t>(N_), Vec::Zero(m_));
    }
    const double V = tracking_value(1, cfg_.epsilon, g ? &gx : nullptr, g ? &gu : nullptr, g ? &gp : nullptr);
    const double T = offset_value(cache_->r[1], g ? &gT : nullptr);
    if (g) {
      backprop(1, gx, gu);
      gp += gT;
      scatter(1, gu, gp, *g);
    }
    return cfg_.epsilon * V + T - *bound_ + cfg_.storage_backoff;
  }

 public:
  double objective(const Vec& z, Vec* g) const {
    ensure(z);
    if (g) g->setZero(spec_.n);
    if (learning_) {
      std::vector<Vec> gx(static_cast<std::size_t>(N_ + 1), Vec::Zero(n_)), gu(static_cast<std::size_t>(N_), Vec::Zero(m_));
      Vec gp = Vec::Zero(np_), gTL, gTB;
      const double V = tracking_value(0, 1.0, g ? &gx : nullptr, g ? &gu : nullptr, g ? &gp : nullptr);
      const double TL = offset_value(cache_->r[0], g ? &gTL : nullptr);
      const double TB = offset_value(cache_->r[1], g ? &gTB : nullptr);
      if (g) {
        backprop(0, gx, gu);
        scatter(0, gu, gp + gTL, *g);
        g->segment(param_offset(1), np_) += cfg_.epsilon * gTB;
      }
      return V + TL + cfg_.epsilon * TB;
    }
    std::vector<Vec> gx(static_cast<std::size_t>(N_ + 1), Vec::Zero(n_)), gu(static_cast<std::size_t>(N_), Vec::Zero(m_));
    Vec gp = Vec::Zero(np_), gT;
    const double V = tracking_value(1, cfg_.epsilon, g ? &gx : nullptr, g ? &gu : nullptr, g ? &gp : nullptr);
    const double T = offset_value(cache_->r[1], g ? &gT : nullptr);
    if (g) {
      backprop(1, gx, gu);
      scatter(1, gu, gp + gT, *g);
    }
    return cfg_.epsilon * V + T;
  }

  Vec knot_vector(int owner, int knot) const {
    const Cache& c = *cache_;
    if (owner <= 1) {
      const auto o = static_cast<std::size_t>(owner);
      return concat(c.x[o][static_cast<std::size_t>(knot)], c.u[o][static_cast<std::size_t>(knot)]);
    }
    const Setpoint& r = c.r[static_cast<std::size_t>(owner - 2)];
    return concat(r.x, r.u);
  }

  static double row_value(const Row& row, const Vec& v, Vec* gv) {
    switch (row.kind) {
      case RowKind::Lower:
        if (gv) (*gv)[row.coord] -= 1.0;
        return row.bound - v[row.coord];
      case RowKind::Upper:
        if (gv) (*gv)[row.coord] += 1.0;
        return v[row.coord] - row.bound;
      case RowKind::Outside:
      case RowKind::Inside: {
        const double dx = v[row.coords[0]] - row.cx;
        const double dy = v[row.coords[1]] - row.cy;
        const double s = row.kind == RowKind::Outside ? -1.0 : 1.0;
        if (gv) {
          (*gv)[row.coords[0]] += s * 2.0 * dx;
          (*gv)[row.coords[1]] += s * 2.0 * dy;
        }
        return row.kind == RowKind::Outside ? row.bound - (dx * dx + dy * dy) : dx * dx + dy * dy - row.bound;
      }
    }
    return 0.0;
  }

  void constraints(const Vec& z, Vec& eq, Vec& in) const {
    ensure(z);
    const Cache& c = *cache_;
    eq.resize(spec_.num_eq);
    in.resize(spec_.num_ineq);
    int e = 0;
    for (int owner = learning_ ? 0 : 1; owner <= 1; ++owner) {
      const auto o = static_cast<std::size_t>(owner);
      eq.segment(e, n_) = c.x[o][static_cast<std::size_t>(N_)] - c.r[o].x;
      e += n_;
    }
    for (int i = 0; i < num_rows_; ++i) {
      const Row& row = rows_[static_cast<std::size_t>(i)];
      in[i] = row_value(row, knot_vector(row.owner, row.knot), nullptr);
    }
    if (bound_) in[num_rows_] = storage_value(nullptr);
  }

  void vjp(const Vec& z, const Vec& we, const Vec& wi, Vec& out) const {
    ensure(z);
    out.setZero(spec_.n);
    std::array<std::vector<Vec>, 2> gx, gu;
    std::array<Vec, 2> gp;
    for (std::size_t o = 0; o < 2; ++o) {
      gx[o].assign(static_cast<std::size_t>(N_ + 1), Vec::Zero(n_));
      gu[o].assign(static_cast<std::size_t>(N_), Vec::Zero(m_));
      gp[o] = Vec::Zero(np_);
    }
    int e = 0;
    for (int owner = learning_ ? 0 : 1; owner <= 1; ++owner) {
      const auto o = static_cast<std::size_t>(owner);
      const Vec w = we.segment(e, n_);
      gx[o][static_cast<std::size_t>(N_)] += w;
      gp[o] -= Js_.transpose() * w;
      e += n_;
    }
    Vec gv(n_ + m_);
    for (int i = 0; i < num_rows_; ++i) {
      if (wi[i] == 0.0) continue;
      const Row& row = rows_[static_cast<std::size_t>(i)];
      gv.setZero();
      row_value(row, knot_vector(row.owner, row.knot), &gv);
      gv *= wi[i];
      if (row.owner <= 1) {
        const auto o = static_cast<std::size_t>(row.owner);
        gx[o][static_cast<std::size_t>(row.knot)] += gv.head(n_);
        gu[o][static_cast<std::size_t>(row.knot)] += gv.tail(m_);
      } else {
        gp[static_cast<std::size_t>(row.owner - 2)] += Js_.transpose() * gv.head(n_);
      }
    }
    for (int owner = learning_ ? 0 : 1; owner <= 1; ++owner) {
      const auto o = static_cast<std::size_t>(owner);
      backprop(owner, gx[o], gu[o]);
      scatter(owner, gu[o], gp[o], out);
    }
    if (bound_ && wi[num_rows_] != 0.0) {
      Vec g = Vec::Zero(spec_.n);
      storage_value(&g);
      out += wi[num_rows_] * g;
    }
  }

 private:
  M model_;
  MpcConfig cfg_;
  CostConfig costs_;
  Vec x_t_;
  std::optional<double> bound_;
  int n_ = 0, m_ = 0, np_ = 0, N_ = 0;
  bool learning_ = true;
  Mat Js_, C_;
  Vec us_;
  std::vector<Row> rows_;
  int num_rows_ = 0;
  std::shared_ptr<Cache> cache_;
  NlpSpec spec_;
};

}  // namespace detail

template <DifferentiableModel M>
class ContinuousTranscription {
 public:
  using Row = typename detail::TranscriptionImpl<M>::Row;
  using RowKind = typename detail::TranscriptionImpl<M>::RowKind;

  /// `bound` is S_t + F_hat_t when the storage constraint is active.
  ContinuousTranscription(const M& model, const KnowledgeState& k, const MpcConfig& cfg, const CostConfig& costs,
                          const Vec& x_t, std::optional<double> bound, const TrajectoryPair& hint)
      : impl_(std::make_shared<const detail::TranscriptionImpl<M>>(model, k, cfg, costs, x_t, bound, hint)) {
    spec_ = impl_->layout();
    auto impl = impl_;
    spec_.objective = [impl](const Vec& z, Vec* g) { return impl->objective(z, g); };
    spec_.constraints = [impl](const Vec& z, Vec& eq, Vec& in) { impl->constraints(z, eq, in); };
    spec_.constraint_vjp = [impl](const Vec& z, const Vec& we, const Vec& wi, Vec& out) { impl->vjp(z, we, wi, out); };
  }

  const NlpSpec& spec() const { return spec_; }
  const std::vector<Row>& rows() const { return impl_->rows(); }
  bool has_learning() const { return impl_->has_learning(); }
  Vec pack(const TrajectoryPair& pair) const { return impl_->pack(pair); }
  TrajectoryPair unpack(const Vec& z) const { return impl_->unpack(z); }

 private:
  std::shared_ptr<const detail::TranscriptionImpl<M>> impl_;
  NlpSpec spec_;
};

}  // namespace safempc
