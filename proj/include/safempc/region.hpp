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

// Symbolic set algebra over the joint (x, u) space.
//
// A RegionExpr is an immutable expression tree: boxes, disks in two chosen
// coordinates of (x, u) (the planar output), finite point sets, and
// intersections / unions of those. Membership is exact for finite sets and
// exact up to floating arithmetic otherwise.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "safempc/types.hpp"

namespace safempc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class DiskSense { Inside, Outside };

/// Axis-aligned box over the concatenated (x, u) vector; +-inf allowed.
struct HyperBox {
  Vec lower;
  Vec upper;
};

/// Disk in two coordinates of (x, u). Outside-disks exclude the open interior
/// (the boundary circle is admissible); inside-disks are closed.
struct OutputDisk {
  Vec center;  ///< 2-vector
  double radius = 1.0;
  DiskSense sense = DiskSense::Outside;
  std::array<int, 2> coords{0, 1};
};

/// Exact set of (x, u) pairs, stored as concatenated vectors.
struct FinitePointSet {
  std::set<std::vector<double>> points;
};

class RegionExpr;
struct Intersection {
  std::vector<RegionExpr> parts;
};
struct Union {
  std::vector<RegionExpr> parts;
};

class RegionExpr {
 public:
  using Node = std::variant<HyperBox, OutputDisk, FinitePointSet, Intersection, Union>;

  RegionExpr() : node_(std::make_shared<const Node>(Intersection{})) {}  // everything

  static RegionExpr box(Vec lower, Vec upper) {
    if (lower.size() != upper.size()) throw ContractViolation("HyperBox: bound dimensions differ");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (!(lower[i] <= upper[i])) throw ContractViolation("HyperBox: lower > upper at coordinate " + std::to_string(i));
    }
    return RegionExpr(HyperBox{std::move(lower), std::move(upper)});
  }
  static RegionExpr disk(Vec center, double radius, DiskSense sense, std::array<int, 2> coords = {0, 1}) {
    require_dim(center, 2, "OutputDisk center");
    if (!(radius > 0.0)) throw ContractViolation("OutputDisk: radius must be positive");
    return RegionExpr(OutputDisk{std::move(center), radius, sense, coords});
  }
  static RegionExpr points(const std::vector<StateInput>& pts) {
    FinitePointSet set;
    for (const auto& z : pts) set.points.insert(key(z.x, z.u));
    return RegionExpr(std::move(set));
  }
  static RegionExpr intersection(std::vector<RegionExpr> parts) { return RegionExpr(Intersection{std::move(parts)}); }
  static RegionExpr union_of(std::vector<RegionExpr> parts) { return RegionExpr(Union{std::move(parts)}); }
  /// The empty set.
  static RegionExpr empty() { return RegionExpr(Union{}); }

  const Node& node() const { return *node_; }

  static std::vector<double> key(const Vec& x, const Vec& u) {
    std::vector<double> k(static_cast<std::size_t>(x.size() + u.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) k[static_cast<std::size_t>(i)] = x[i];
    for (Eigen::Index i = 0; i < u.size(); ++i) k[static_cast<std::size_t>(x.size() + i)] = u[i];
    return k;
  }

 private:
  explicit RegionExpr(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}
  std::shared_ptr<const Node> node_;
};

namespace detail {

inline double coord(const Vec& x, const Vec& u, int i) { return i < x.size() ? x[i] : u[i - x.size()]; }

inline double disk_distance(const OutputDisk& d, const Vec& x, const Vec& u) {
  const double dx = coord(x, u, d.coords[0]) - d.center[0];
  const double dy = coord(x, u, d.coords[1]) - d.center[1];
  return std::hypot(dx, dy);
}

}  // namespace detail

/// Membership of z in the region, shrunk by `margin` for boxes and disks
/// (the closed margin-ball around z must lie in the region). Finite point
/// sets ignore the margin. A union contains the ball if one member does.
inline bool contains_ball(const RegionExpr& region, const Vec& x, const Vec& u, double margin) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, HyperBox>) {
          if (n.lower.size() != x.size() + u.size()) throw ContractViolation("HyperBox: dimension mismatch with (x,u)");
          for (Eigen::Index i = 0; i < n.lower.size(); ++i) {
            const double c = detail::coord(x, u, static_cast<int>(i));
            if (c - n.lower[i] < margin || n.upper[i] - c < margin) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<T, OutputDisk>) {
          const double d = detail::disk_distance(n, x, u);
          return n.sense == DiskSense::Outside ? d >= n.radius + margin : d <= n.radius - margin;
        } else if constexpr (std::is_same_v<T, FinitePointSet>) {
          return n.points.contains(RegionExpr::key(x, u));
        } else if constexpr (std::is_same_v<T, Intersection>) {
          return std::all_of(n.parts.begin(), n.parts.end(),
                             [&](const RegionExpr& r) { return contains_ball(r, x, u, margin); });
        } else {
          return std::any_of(n.parts.begin(), n.parts.end(),
                             [&](const RegionExpr& r) { return contains_ball(r, x, u, margin); });
        }
      },
      region.node());
}

inline bool contains(const RegionExpr& region, const Vec& x, const Vec& u) { return contains_ball(region, x, u, 0.0); }
inline bool contains(const RegionExpr& region, const StateInput& z) { return contains(region, z.x, z.u); }

/// True when the region tree contains a finite point set anywhere.
inline bool is_finite_region(const RegionExpr& region) {
  return std::visit(
      [](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, FinitePointSet>) {
          return true;
        } else if constexpr (std::is_same_v<T, Intersection> || std::is_same_v<T, Union>) {
          return std::any_of(n.parts.begin(), n.parts.end(), [](const RegionExpr& r) { return is_finite_region(r); });
        } else {
          return false;
        }
      },
      region.node());
}

/// Enumerate the members of a region built from finite point sets. For an
/// intersection, at least one part must be finite; its points are filtered
/// by the remaining parts.
inline std::vector<StateInput> enumerate_points(const RegionExpr& region, int state_dim) {
  auto split = [state_dim](const std::vector<double>& k) {
    StateInput z{Vec(state_dim), Vec(static_cast<Eigen::Index>(k.size()) - state_dim)};
    for (int i = 0; i < state_dim; ++i) z.x[i] = k[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i < z.u.size(); ++i) z.u[i] = k[static_cast<std::size_t>(state_dim + i)];
    return z;
  };
  std::set<std::vector<double>> out;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, FinitePointSet>) {
          out = n.points;
        } else if constexpr (std::is_same_v<T, Union>) {
          for (const auto& part : n.parts) {
            for (const auto& z : enumerate_points(part, state_dim)) out.insert(RegionExpr::key(z.x, z.u));
          }
        } else if constexpr (std::is_same_v<T, Intersection>) {
          auto it = std::find_if(n.parts.begin(), n.parts.end(), [](const RegionExpr& r) { return is_finite_region(r); });
          if (it == n.parts.end()) throw ContractViolation("enumerate_points: intersection has no finite part");
          for (const auto& z : enumerate_points(*it, state_dim)) {
            if (contains(region, z)) out.insert(RegionExpr::key(z.x, z.u));
          }
        } else {
          throw ContractViolation("enumerate_points: region is not finite");
        }
      },
      region.node());
  std::vector<StateInput> pts;
  pts.reserve(out.size());
  for (const auto& k : out) pts.push_back(split(k));
  return pts;
}

/// One conjunctive branch of a continuous region in disjunctive normal form:
/// box ∩ (inside disks) ∩ (outside disks).
struct ConvexBranch {
  Vec lower;
  Vec upper;
  std::vector<OutputDisk> inside;
  std::vector<OutputDisk> outside;
};

/// Disjunctive normal form of a continuous region over a (x,u) space of
/// dimension `dim`. Intersections distribute over unions.
inline std::vector<ConvexBranch> to_branches(const RegionExpr& region, int dim) {
  return std::visit(
      [&](const auto& n) -> std::vector<ConvexBranch> {
        using T = std::decay_t<decltype(n)>;
        ConvexBranch all{Vec::Constant(dim, -kInf), Vec::Constant(dim, kInf), {}, {}};
        if constexpr (std::is_same_v<T, HyperBox>) {
          require_dim(n.lower, dim, "HyperBox");
          all.lower = n.lower;
          all.upper = n.upper;
          return {all};
        } else if constexpr (std::is_same_v<T, OutputDisk>) {
          (n.sense == DiskSense::Inside ? all.inside : all.outside).push_back(n);
          return {all};
        } else if constexpr (std::is_same_v<T, FinitePointSet>) {
          throw ContractViolation("to_branches: finite point sets have no continuous branches");
        } else if constexpr (std::is_same_v<T, Union>) {
          std::vector<ConvexBranch> out;
          for (const auto& p : n.parts) {
            auto b = to_branches(p, dim);
            out.insert(out.end(), b.begin(), b.end());
          }
          return out;
        } else {
          std::vector<ConvexBranch> acc{all};
          for (const auto& p : n.parts) {
            const auto sub = to_branches(p, dim);
            std::vector<ConvexBranch> next;
            for (const auto& a : acc) {
              for (const auto& b : sub) {
                ConvexBranch c = a;
                c.lower = a.lower.cwiseMax(b.lower);
                c.upper = a.upper.cwiseMin(b.upper);
                c.inside.insert(c.inside.end(), b.inside.begin(), b.inside.end());
                c.outside.insert(c.outside.end(), b.outside.begin(), b.outside.end());
                next.push_back(std::move(c));
              }
            }
            acc = std::move(next);
          }
          return acc;
        }
      },
      region.node());
}

}  // namespace safempc
