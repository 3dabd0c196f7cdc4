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

// YAML scenario files. See scenarios/README.md for the schema.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <yaml-cpp/yaml.h>

#include "safempc/simulator.hpp"

namespace safempc {

namespace yamlio {

/// Rejects keys outside `allowed`, so typos fail loudly.
inline void check_keys(const YAML::Node& n, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!n.IsMap()) throw ParseError(where + ": expected a mapping");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!ok.contains(key)) throw ParseError(where + ": unknown key '" + key + "'");
  }
}

inline YAML::Node need(const YAML::Node& n, const char* key, const std::string& where) {
  const YAML::Node v = n[key];
  if (!v) throw ParseError(where + ": missing '" + key + "'");
  return v;
}

/// Numbers may be written as plain floats, "inf" / "-inf", or degrees
/// ("37deg").
inline double number(const YAML::Node& n, const std::string& where) {
  if (!n.IsScalar()) throw ParseError(where + ": expected a number");
  std::string s = n.Scalar();
  double scale = 1.0;
  if (s.size() > 3 && s.ends_with("deg")) {
    s = s.substr(0, s.size() - 3);
    scale = M_PI / 180.0;
  }
  if (s == "inf" || s == "+inf" || s == ".inf") return kInf;
  if (s == "-inf" || s == "-.inf") return -kInf;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v * scale;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + n.Scalar() + "'");
  }
}

inline int integer(const YAML::Node& n, const std::string& where) {
  const double v = number(n, where);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ParseError(where + ": expected an integer");
  return static_cast<int>(v);
}

inline Vec vec(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) throw ParseError(where + ": expected a list");
  Vec v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(n[i], where);
  return v;
}

/// A flat list is a diagonal; a list of rows is a full matrix.
inline Mat matrix(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence() || n.size() == 0) throw ParseError(where + ": expected a non-empty list");
  if (n[0].IsScalar()) return vec(n, where).asDiagonal();
  const auto rows = static_cast<Eigen::Index>(n.size());
  Mat M(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vec r = vec(n[static_cast<std::size_t>(i)], where);
    if (r.size() != rows) throw ParseError(where + ": matrix must be square");
    M.row(i) = r.transpose();
  }
  return M;
}

inline Rational rational(const YAML::Node& n, const std::string& where) {
  if (!n.IsScalar()) throw ParseError(where + ": expected a number");
  try {
    if (n.Scalar().find('/') != std::string::npos) return Rational::parse(n.Scalar());
    return rational_from_double(number(n, where));
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline std::vector<StateInput> point_list(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) throw ParseError(where + ": expected a list of {x, u}");
  std::vector<StateInput> out;
  for (const auto& p : n) {
    check_keys(p, where, {"x", "u"});
    out.push_back({vec(need(p, "x", where), where + ".x"), vec(need(p, "u", where), where + ".u")});
  }
  return out;
}

inline GridWorld grid(const YAML::Node& n, const std::string& where) {
  check_keys(n, where, {"rows", "moves"});
  GridWorld g;
  for (const auto& r : need(n, "rows", where)) g.rows.push_back(r.as<std::string>());
  if (n["moves"]) {
    for (const auto& m : n["moves"]) g.moves.push_back(vec(m, where + ".moves"));
  } else {
    g.moves = GridWorld::four_moves();
  }
  try {
    g.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(where + ": " + e.what());
  }
  return g;
}

/// One of {box: {lower, upper}}, {points: [...]}, {grid: {...}}.
inline RegionExpr region(const YAML::Node& n, const std::string& where, std::optional<GridWorld>* grid_out = nullptr) {
  check_keys(n, where, {"box", "points", "grid"});
  if (n.size() != 1) throw ParseError(where + ": give exactly one of box, points, grid");
  if (n["box"]) {
    const auto b = n["box"];
    check_keys(b, where + ".box", {"lower", "upper"});
    try {
      return RegionExpr::box(vec(need(b, "lower", where), where + ".lower"), vec(need(b, "upper", where), where + ".upper"));
    } catch (const ContractViolation& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (n["points"]) return RegionExpr::points(point_list(n["points"], where + ".points"));
  GridWorld g = grid(n["grid"], where + ".grid");
  if (grid_out) *grid_out = g;
  return g.region();
}

inline PlantModel model(const YAML::Node& n) {
  const std::string where = "model";
  check_keys(n, where, {"type", "l_r", "sample_time", "dim"});
  const auto type = need(n, "type", where).as<std::string>();
  if (type == "bicycle") {
    BicycleParams p;
    if (n["l_r"]) p.l_r = number(n["l_r"], "model.l_r");
    if (n["sample_time"]) p.sample_time = number(n["sample_time"], "model.sample_time");
    try {
      return BicycleModel(p);
    } catch (const ContractViolation& e) {
      throw ParseError(std::string("model: ") + e.what());
    }
  }
  if (type == "single_integrator") {
    return SingleIntegrator2D(n["sample_time"] ? number(n["sample_time"], "model.sample_time") : 1.0);
  }
  const int dim = n["dim"] ? integer(n["dim"], "model.dim") : 1;
  if (dim < 1) throw ParseError("model.dim must be >= 1");
  if (type == "lattice_shift") return lattice_shift_model(dim);
  if (type == "lattice_increment") return lattice_increment_model(dim);
  throw ParseError("model.type: unknown model '" + type + "'");
}

inline SolverOptions solver(const YAML::Node& n, SolverOptions o) {
  const std::string w = "mpc.solver";
  check_keys(n, w, {"feas_tol", "stat_tol", "max_outer", "max_inner", "penalty_init", "penalty_growth", "penalty_max",
                    "memory", "max_evaluations", "step_violation_cap"});
  if (n["feas_tol"]) o.feas_tol = number(n["feas_tol"], w);
  if (n["stat_tol"]) o.stat_tol = number(n["stat_tol"], w);
  if (n["max_outer"]) o.max_outer = integer(n["max_outer"], w);
  if (n["max_inner"]) o.max_inner = integer(n["max_inner"], w);
  if (n["penalty_init"]) o.penalty_init = number(n["penalty_init"], w);
  if (n["penalty_growth"]) o.penalty_growth = number(n["penalty_growth"], w);
  if (n["penalty_max"]) o.penalty_max = number(n["penalty_max"], w);
  if (n["memory"]) o.memory = integer(n["memory"], w);
  if (n["max_evaluations"]) o.max_evaluations = integer(n["max_evaluations"], w);
  if (n["step_violation_cap"]) o.step_violation_cap = number(n["step_violation_cap"], w);
  return o;
}

inline MpcConfig mpc(const YAML::Node& n) {
  const std::string w = "mpc";
  check_keys(n, w, {"N", "epsilon", "alpha", "lambda", "mode", "S0", "F_hat0", "max_starts", "shooting_rollouts", "seed", "backoff",
                    "storage_backoff", "plan_tol", "solver"});
  MpcConfig c;
  if (n["N"]) c.N = integer(n["N"], "mpc.N");
  if (n["epsilon"]) c.epsilon = number(n["epsilon"], "mpc.epsilon");
  if (n["alpha"]) c.alpha = number(n["alpha"], "mpc.alpha");
  if (n["lambda"]) c.lambda = number(n["lambda"], "mpc.lambda");
  if (n["mode"]) {
    try {
      c.mode = parse_mode(n["mode"].as<std::string>());
    } catch (const ContractViolation& e) {
      throw ParseError(std::string("mpc.mode: ") + e.what());
    }
  }
  if (n["S0"]) c.S0 = number(n["S0"], "mpc.S0");
  if (n["F_hat0"] && n["F_hat0"].Scalar() != "unbounded") c.F_hat0 = number(n["F_hat0"], "mpc.F_hat0");
  if (n["max_starts"]) c.max_starts = integer(n["max_starts"], "mpc.max_starts");
  if (n["shooting_rollouts"]) c.shooting_rollouts = integer(n["shooting_rollouts"], "mpc.shooting_rollouts");
  if (n["seed"]) c.seed = static_cast<std::uint64_t>(integer(n["seed"], "mpc.seed"));
  if (n["backoff"]) c.backoff = number(n["backoff"], "mpc.backoff");
  if (n["storage_backoff"]) c.storage_backoff = number(n["storage_backoff"], "mpc.storage_backoff");
  if (n["plan_tol"]) c.plan_tol = number(n["plan_tol"], "mpc.plan_tol");
  if (n["solver"]) c.solver = solver(n["solver"], c.solver);
  return c;
}

/// Cost tables map (x, u) pairs to rationals.
inline std::map<std::vector<double>, Rational> cost_table(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) throw ParseError(where + ": expected a list of {x, u, cost}");
  std::map<std::vector<double>, Rational> out;
  for (const auto& e : n) {
    check_keys(e, where, {"x", "u", "cost"});
    const Rational v = rational(need(e, "cost", where), where + ".cost");
    if (v < Rational(0)) throw ParseError(where + ": negative cost");
    out[RegionExpr::key(vec(need(e, "x", where), where + ".x"), vec(need(e, "u", where), where + ".u"))] = v;
  }
  return out;
}

inline DiscreteCost discrete_cost(const YAML::Node& n) {
  const std::string w = "costs";
  check_keys(n, w, {"table", "offset", "quadratic"});
  if (n["quadratic"]) {
    const auto q = n["quadratic"];
    check_keys(q, "costs.quadratic", {"q", "r", "p", "y_desired"});
    std::vector<Rational> qs, rs;
    for (const auto& v : need(q, "q", w)) qs.push_back(rational(v, "costs.quadratic.q"));
    for (const auto& v : need(q, "r", w)) rs.push_back(rational(v, "costs.quadratic.r"));
    const Rational p = q["p"] ? rational(q["p"], "costs.quadratic.p") : Rational(1);
    return lattice_quadratic_cost(qs, rs, p, vec(need(q, "y_desired", w), "costs.quadratic.y_desired"));
  }
  TabularCost tc;
  tc.table = cost_table(need(n, "table", w), "costs.table");
  DiscreteCost c = tc.as_cost();
  if (n["offset"]) {
    c.offset = [t = cost_table(n["offset"], "costs.offset")](const Setpoint& r) {
      auto it = t.find(RegionExpr::key(r.x, r.u));
      if (it == t.end()) throw ContractViolation("offset table: no entry for the requested setpoint");
      return it->second;
    };
  }
  return c;
}

inline CostConfig smooth_cost(const YAML::Node& n, int N) {
  const std::string w = "costs";
  check_keys(n, w, {"Q", "R", "P", "y_desired"});
  CostConfig c;
  c.Q = matrix(need(n, "Q", w), "costs.Q");
  c.R = matrix(need(n, "R", w), "costs.R");
  c.P = matrix(need(n, "P", w), "costs.P");
  c.y_desired = vec(need(n, "y_desired", w), "costs.y_desired");
  c.N = N;
  return c;
}

}  // namespace yamlio

/// Parses a scenario document. `name` is used when the file has none.
inline Scenario parse_scenario(const std::string& text, const std::string& name = "scenario") {
  using namespace yamlio;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  try {
    check_keys(root, "scenario",
               {"name", "model", "constraints", "obstacles", "sensing", "safe", "estimated", "setpoint_restriction",
                "initial", "costs", "mpc", "max_steps", "stop_on_convergence", "events", "discrete"});
    Scenario sc;
    sc.name = root["name"] ? root["name"].as<std::string>() : name;
    sc.model = model(need(root, "model", "scenario"));
    const SystemModel sys = sc.system();

    auto env = std::make_shared<Environment>();
    env->base = region(need(root, "constraints", "scenario"), "constraints", &sc.grid);
    if (root["obstacles"]) {
      for (const auto& o : root["obstacles"]) {
        check_keys(o, "obstacles", {"center", "radius"});
        Obstacle ob{vec(need(o, "center", "obstacles"), "obstacles.center"), number(need(o, "radius", "obstacles"), "obstacles.radius")};
        if (ob.center.size() != 2 || !(ob.radius > 0.0)) throw ParseError("obstacles: need a 2-D center and a positive radius");
        env->obstacles.push_back(ob);
      }
    }
    if (root["sensing"]) {
      const auto s = root["sensing"];
      check_keys(s, "sensing", {"radius", "rule", "output_coords"});
      if (s["radius"]) env->sense_radius = number(s["radius"], "sensing.radius");
      if (s["rule"]) {
        const auto rule = s["rule"].as<std::string>();
        if (rule == "intersection") {
          env->rule = DiscoveryRule::Intersection;
        } else if (rule == "center_in_range") {
          env->rule = DiscoveryRule::CenterInRange;
        } else {
          throw ParseError("sensing.rule: unknown rule '" + rule + "'");
        }
      }
      if (s["output_coords"]) {
        const Vec c = vec(s["output_coords"], "sensing.output_coords");
        if (c.size() != 2) throw ParseError("sensing.output_coords: need two indices");
        env->output_coords = {static_cast<int>(c[0]), static_cast<int>(c[1])};
      }
    }
    if (root["safe"]) env->static_safe = region(root["safe"], "safe");
    if (root["estimated"]) env->static_estimated = region(root["estimated"], "estimated");
    if (root["setpoint_restriction"]) env->setpoint_restriction = region(root["setpoint_restriction"], "setpoint_restriction");
    if (env->static_estimated && !env->static_safe) throw ParseError("estimated: needs a static 'safe' set too");
    sc.env = env;

    const auto init = need(root, "initial", "scenario");
    check_keys(init, "initial", {"state", "input"});
    sc.x0 = vec(need(init, "state", "initial"), "initial.state");
    sc.initial_input = init["input"] ? vec(init["input"], "initial.input") : Vec(Vec::Zero(sys.input_dim));

    sc.cfg = root["mpc"] ? mpc(root["mpc"]) : MpcConfig{};
    const auto costs = need(root, "costs", "scenario");
    if (sys.discrete) {
      sc.discrete_cost = discrete_cost(costs);
    } else {
      sc.costs = smooth_cost(costs, sc.cfg.N);
    }
    if (root["max_steps"]) sc.max_steps = integer(root["max_steps"], "max_steps");
    if (root["stop_on_convergence"]) sc.stop_on_convergence = root["stop_on_convergence"].as<bool>();
    if (root["events"]) {
      for (const auto& e : root["events"]) {
        check_keys(e, "events", {"t", "y_desired"});
        sc.events.push_back({integer(need(e, "t", "events"), "events.t"), vec(need(e, "y_desired", "events"), "events.y_desired")});
      }
    }
    if (root["discrete"]) {
      const auto d = root["discrete"];
      check_keys(d, "discrete", {"guard", "shuffle_seed"});
      if (d["guard"]) sc.discrete_options.guard = number(d["guard"], "discrete.guard");
      if (d["shuffle_seed"]) sc.discrete_options.shuffle_seed = static_cast<std::uint64_t>(integer(d["shuffle_seed"], "discrete.shuffle_seed"));
    }
    sc.validate();
    return sc;
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot read scenario " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string file = path.filename().string();
  return parse_scenario(ss.str(), file.substr(0, file.find('.')));
}

}  // namespace safempc
