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

// Ground truth, the verified safe set and the optimistic estimated set, and
// how sensing grows them.
//
// An Environment is the static description of a world: known limits (box or
// finite set), a list of obstacles that are unknown until sensed, and the
// sensing radius. A KnowledgeState is what the controller knows at time t.

#include <algorithm>
#include <memory>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "safempc/dynamics.hpp"
#include "safempc/region.hpp"

namespace safempc {

struct Obstacle {
  Vec center;  ///< output-space 2-vector
  double radius = 1.0;
};

/// When an obstacle counts as discovered from a sensing position.
enum class DiscoveryRule {
  Intersection,   ///< any part of the obstacle lies in the closed sense disk
  CenterInRange,  ///< the obstacle center lies in the closed sense disk
};

struct Environment {
  /// Known static limits (the box of internal constraints, or the finite set
  /// of admissible moves of a grid world).
  RegionExpr base;
  std::vector<Obstacle> obstacles;
  std::array<int, 2> output_coords{0, 1};
  double sense_radius = 2.5;
  DiscoveryRule rule = DiscoveryRule::Intersection;
  /// Worlds whose knowledge never changes (the counter-example) give the
  /// safe and estimated sets explicitly; sensing is then a no-op.
  std::optional<RegionExpr> static_safe;
  std::optional<RegionExpr> static_estimated;
  /// Extra restriction on admissible setpoints, intersected with the set the
  /// setpoint must belong to (e.g. a terminal set {0}).
  std::optional<RegionExpr> setpoint_restriction;

  RegionExpr obstacle_disk(int i) const {
    const auto& o = obstacles.at(static_cast<std::size_t>(i));
    return RegionExpr::disk(o.center, o.radius, DiskSense::Outside, output_coords);
  }

  /// Z: the known limits minus the open interiors of every obstacle.
  RegionExpr truth() const {
    std::vector<RegionExpr> parts{base};
    for (int i = 0; i < static_cast<int>(obstacles.size()); ++i) parts.push_back(obstacle_disk(i));
    return RegionExpr::intersection(std::move(parts));
  }
};

struct SensingReport {
  Vec center;
  std::vector<int> newly_discovered;
};

class KnowledgeState {
 public:
  KnowledgeState() = default;
  KnowledgeState(std::shared_ptr<const Environment> env, double lambda_margin)
      : env_(std::move(env)), lambda_margin_(lambda_margin) {
    if (!env_) throw ContractViolation("KnowledgeState: null environment");
    if (!(env_->sense_radius > 0.0)) throw ContractViolation("KnowledgeState: sense radius must be positive");
    if (!(lambda_margin_ >= 0.0)) throw ContractViolation("KnowledgeState: lambda must be nonnegative");
    truth_ = env_->truth();
    rebuild();
  }

  const Environment& environment() const { return *env_; }
  std::shared_ptr<const Environment> environment_ptr() const { return env_; }
  const RegionExpr& truth() const { return truth_; }
  /// E_t
  const RegionExpr& safe() const { return safe_; }
  /// Z_t
  const RegionExpr& estimated() const { return estimated_; }
  const std::set<int>& discovered_obstacles() const { return discovered_; }
  /// Obstacles that meet some sensed disk; these are cut out of the safe set
  /// whatever the discovery rule says.
  const std::set<int>& sensed_obstacles() const { return touched_; }
  const std::vector<Vec>& sensed_centers() const { return centers_; }
  double sense_radius() const { return env_->sense_radius; }
  double lambda_margin() const { return lambda_margin_; }
  bool is_static() const { return env_->static_safe.has_value(); }

  /// Setpoint-admissibility region derived from a trajectory region.
  RegionExpr setpoint_region(const RegionExpr& region) const {
    if (!env_->setpoint_restriction) return region;
    return RegionExpr::intersection({region, *env_->setpoint_restriction});
  }

  Vec output_of(const Vec& x, const Vec& u) const {
    return make_vec({detail::coord(x, u, env_->output_coords[0]), detail::coord(x, u, env_->output_coords[1])});
  }

  bool disk_meets_obstacle(const Vec& c, int i) const {
    const auto& o = env_->obstacles[static_cast<std::size_t>(i)];
    return (o.center - c).norm() <= env_->sense_radius + o.radius;
  }

  friend SensingReport sense(const KnowledgeState& k, const Vec& x, const Vec& u);
  friend KnowledgeState update_knowledge(const KnowledgeState& k, const SensingReport& report);

 private:
  void rebuild() {
    if (env_->static_safe) {
      safe_ = *env_->static_safe;
      estimated_ = env_->static_estimated.value_or(truth_);
      return;
    }
    std::vector<RegionExpr> est{env_->base};
    for (int i : discovered_) est.push_back(env_->obstacle_disk(i));
    estimated_ = RegionExpr::intersection(est);

    std::vector<RegionExpr> disks;
    for (const auto& c : centers_) {
      disks.push_back(RegionExpr::disk(c, env_->sense_radius, DiskSense::Inside, env_->output_coords));
    }
    std::vector<RegionExpr> safe{env_->base, RegionExpr::union_of(std::move(disks))};
    std::set<int> cut = discovered_;
    cut.insert(touched_.begin(), touched_.end());
    for (int i : cut) safe.push_back(env_->obstacle_disk(i));
    safe_ = RegionExpr::intersection(std::move(safe));
  }

  std::shared_ptr<const Environment> env_;
  double lambda_margin_ = 0.01;
  RegionExpr truth_;
  RegionExpr safe_ = RegionExpr::empty();
  RegionExpr estimated_;
  std::set<int> discovered_;
  std::set<int> touched_;
  std::vector<Vec> centers_;
};

/// Sense from the current (x, u). Throws SafetyBreach when z is outside Z.
inline SensingReport sense(const KnowledgeState& k, const Vec& x, const Vec& u) {
  if (!contains(k.truth(), x, u)) throw SafetyBreach("sense: the system is outside the true constraint set");
  SensingReport rep{k.output_of(x, u), {}};
  if (k.is_static()) return rep;
  const auto& env = k.environment();
  for (int i = 0; i < static_cast<int>(env.obstacles.size()); ++i) {
    if (k.discovered_.contains(i)) continue;
    const bool seen = env.rule == DiscoveryRule::Intersection
                          ? k.disk_meets_obstacle(rep.center, i)
                          : (env.obstacles[static_cast<std::size_t>(i)].center - rep.center).norm() <= env.sense_radius;
    if (seen) rep.newly_discovered.push_back(i);
  }
  return rep;
}

inline KnowledgeState update_knowledge(const KnowledgeState& k, const SensingReport& report) {
  KnowledgeState next = k;
  if (k.is_static()) return next;
  require_dim(report.center, 2, "sensing center");
  const bool dup = std::any_of(next.centers_.begin(), next.centers_.end(),
                               [&](const Vec& c) { return same_vec(c, report.center); });
  if (!dup) next.centers_.push_back(report.center);
  next.discovered_.insert(report.newly_discovered.begin(), report.newly_discovered.end());
  for (int i = 0; i < static_cast<int>(k.environment().obstacles.size()); ++i) {
    if (next.disk_meets_obstacle(report.center, i)) next.touched_.insert(i);
  }
  next.rebuild();
  return next;
}

/// Steady and the closed lambda-ball around (x_s, u_s) inside the region.
inline bool is_steady_admissible(const SystemModel& model, const Setpoint& r, const RegionExpr& region,
                                 double lambda) {
  if (steady_residual(model, r) > steady_tolerance(model)) return false;
  return contains_ball(region, r.x, r.u, lambda);
}

/// Whether every knot of a plan and its setpoint lie in the region (used for
/// the retention check of the previous backup after a knowledge update).
inline bool plan_inside(const RegionExpr& region, const Trajectory& traj, const Setpoint& r) {
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    if (!contains(region, traj.states[k], traj.inputs[k])) return false;
  }
  return contains(region, r.x, r.u);
}

}  // namespace safempc
