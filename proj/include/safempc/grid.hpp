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

// Finite grid worlds for the exact back-end.
//
// A map is a list of text rows. Cell (col, row) is the state [col, row] of
// the plant x+ = x + u, and the admissible moves are a fixed set of integer
// steps:
//   '.'  free cell, the plant may stop here (a steady setpoint)
//   '~'  passable cell where stopping is not allowed (a gap in the manifold)
//   '#'  blocked
// (x, u) belongs to the region when x is passable, x + u is passable, and
// u != 0 unless x is a '.' cell.

#include <random>
#include <string>
#include <vector>

#include "safempc/costs.hpp"
#include "safempc/dynamics.hpp"
#include "safempc/region.hpp"

namespace safempc {

struct GridWorld {
  std::vector<std::string> rows;
  std::vector<Vec> moves;

  int width() const { return rows.empty() ? 0 : static_cast<int>(rows.front().size()); }
  int height() const { return static_cast<int>(rows.size()); }

  char cell(int c, int r) const {
    if (r < 0 || r >= height() || c < 0 || c >= width()) return '#';
    return rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  char cell(const Vec& x) const { return cell(static_cast<int>(to_int(x[0])), static_cast<int>(to_int(x[1]))); }
  bool passable(const Vec& x) const { return cell(x) == '.' || cell(x) == '~'; }

  void validate() const {
    if (rows.empty()) throw ContractViolation("GridWorld: no rows");
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != width()) throw ContractViolation("GridWorld: ragged rows");
      for (char ch : r) {
        if (ch != '.' && ch != '~' && ch != '#') throw ContractViolation(std::string("GridWorld: unknown cell '") + ch + "'");
      }
    }
    if (moves.empty()) throw ContractViolation("GridWorld: no moves");
    for (const auto& m : moves) require_dim(m, 2, "GridWorld move");
  }

  RegionExpr region() const {
    validate();
    std::vector<StateInput> pts;
    for (int r = 0; r < height(); ++r) {
      for (int c = 0; c < width(); ++c) {
        const Vec x = make_vec({static_cast<double>(c), static_cast<double>(r)});
        if (!passable(x)) continue;
        for (const Vec& u : moves) {
          if (u.isZero(0.0) && cell(x) != '.') continue;
          if (passable(x + u)) pts.push_back({x, u});
        }
      }
    }
    return RegionExpr::points(pts);
  }

  /// Zero move plus the four unit steps.
  static std::vector<Vec> four_moves() {
    return {make_vec({0, 0}), make_vec({1, 0}), make_vec({-1, 0}), make_vec({0, 1}), make_vec({0, -1})};
  }
};

/// Steady setpoint of the grid plant at a cell.
inline Setpoint grid_setpoint(int c, int r) {
  return {make_vec({static_cast<double>(c), static_cast<double>(r)}), Vec::Zero(2)};
}

/// Random map of the given size; each cell is blocked with probability
/// `p_block`.
inline GridWorld random_grid(int width, int height, double p_block, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution blocked(p_block);
  GridWorld g;
  g.moves = GridWorld::four_moves();
  for (int r = 0; r < height; ++r) {
    std::string row;
    for (int c = 0; c < width; ++c) row.push_back(blocked(rng) ? '#' : '.');
    g.rows.push_back(row);
  }
  return g;
}

/// Cells whose own setpoint and all four neighbours' setpoints are steady
/// admissible in the region: the interior of the grid manifold.
inline std::vector<Setpoint> interior_setpoints(const GridWorld& g) {
  const RegionExpr region = g.region();
  auto steady = [&](int c, int r) { return contains(region, grid_setpoint(c, r).x, Vec::Zero(2)); };
  std::vector<Setpoint> out;
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      if (steady(c, r) && steady(c + 1, r) && steady(c - 1, r) && steady(c, r + 1) && steady(c, r - 1)) {
        out.push_back(grid_setpoint(c, r));
      }
    }
  }
  return out;
}

}  // namespace safempc
