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

// Per-step closed-loop records and their on-disk forms.
//
// steps.jsonl  first line: header object; then one object per step. Doubles
//              are written with round-trip precision, so a parsed log is
//              bit-identical to the in-memory one.
// trajectory.csv  t,x1..xn,u1..um,y1..yp,S,F_hat,F_star
// geometry.json   obstacles, sense radius and the sensed centers per step.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "safempc/knowledge.hpp"
#include "safempc/mpc.hpp"

namespace safempc {

struct LogHeader {
  std::string scenario;
  std::string mode;
  std::uint64_t seed = 0;
  int N = 0;
  double epsilon = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double S0 = 0.0;
  std::optional<double> F_hat0;
  std::string model;
  int state_dim = 0;
  int input_dim = 0;
  int output_dim = 0;
};

struct StepLog {
  int t = 0;
  Vec x, u, y;
  /// Storage state the step was solved with (S_t, F_hat_t).
  double S = 0.0;
  std::optional<double> F_hat;
  double F_star = 0.0;
  double objective = 0.0;
  /// l(x_t, u_t, r_B) of the returned plan.
  double stage0 = 0.0;
  TrajectoryPair pair;
  Vec sensed_center;
  std::vector<int> newly_discovered;
  SolutionStatus status = SolutionStatus::CandidateFallback;
  int starts = 0;
  int chosen_start = -1;
  double wall_ms = 0.0;
};

struct RunLog {
  LogHeader header;
  std::vector<StepLog> steps;
  /// Set when the run aborted; the steps up to the failure are kept.
  std::optional<std::string> abort_reason;
};

namespace detail {

using nlohmann::json;

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec json_vec(const json& j) {
  if (!j.is_array()) throw ParseError("expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline json traj_json(const Trajectory& t) {
  json s = json::array(), u = json::array();
  for (const auto& x : t.states) s.push_back(vec_json(x));
  for (const auto& v : t.inputs) u.push_back(vec_json(v));
  return {{"states", s}, {"inputs", u}};
}

inline Trajectory json_traj(const json& j) {
  Trajectory t;
  for (const auto& x : j.at("states")) t.states.push_back(json_vec(x));
  for (const auto& u : j.at("inputs")) t.inputs.push_back(json_vec(u));
  return t;
}

inline json setpoint_json(const Setpoint& r) { return {{"x", vec_json(r.x)}, {"u", vec_json(r.u)}}; }
inline Setpoint json_setpoint(const json& j) { return {json_vec(j.at("x")), json_vec(j.at("u"))}; }

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline std::optional<double> json_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const LogHeader& h) {
  return {{"kind", "header"},     {"scenario", h.scenario},   {"mode", h.mode},
          {"seed", h.seed},       {"N", h.N},                 {"epsilon", h.epsilon},
          {"alpha", h.alpha},     {"lambda", h.lambda},       {"S0", h.S0},
          {"F_hat0", detail::opt_json(h.F_hat0)},             {"model", h.model},
          {"state_dim", h.state_dim}, {"input_dim", h.input_dim}, {"output_dim", h.output_dim}};
}

inline LogHeader header_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "header") throw ParseError("first log line is not a header");
    LogHeader h;
    h.scenario = j.at("scenario").get<std::string>();
    h.mode = j.at("mode").get<std::string>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.N = j.at("N").get<int>();
    h.epsilon = j.at("epsilon").get<double>();
    h.alpha = j.at("alpha").get<double>();
    h.lambda = j.at("lambda").get<double>();
    h.S0 = j.at("S0").get<double>();
    h.F_hat0 = detail::json_opt(j.at("F_hat0"));
    h.model = j.at("model").get<std::string>();
    h.state_dim = j.at("state_dim").get<int>();
    h.input_dim = j.at("input_dim").get<int>();
    h.output_dim = j.at("output_dim").get<int>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("log header: ") + e.what());
  }
}

inline nlohmann::json to_json(const StepLog& s) {
  using namespace detail;
  json disc = json::array();
  for (int i : s.newly_discovered) disc.push_back(i);
  return {{"kind", "step"},
          {"t", s.t},
          {"x", vec_json(s.x)},
          {"u", vec_json(s.u)},
          {"y", vec_json(s.y)},
          {"S", s.S},
          {"F_hat", opt_json(s.F_hat)},
          {"F_star", s.F_star},
          {"objective", s.objective},
          {"stage0", s.stage0},
          {"learning", traj_json(s.pair.learning)},
          {"backup", traj_json(s.pair.backup)},
          {"learning_setpoint", setpoint_json(s.pair.learning_setpoint)},
          {"backup_setpoint", setpoint_json(s.pair.backup_setpoint)},
          {"sensed_center", vec_json(s.sensed_center)},
          {"newly_discovered", disc},
          {"status", to_string(s.status)},
          {"starts", s.starts},
          {"chosen_start", s.chosen_start},
          {"wall_ms", s.wall_ms}};
}

inline StepLog step_from_json(const nlohmann::json& j) {
  using namespace detail;
  try {
    if (j.at("kind") != "step") throw ParseError("log line is not a step record");
    StepLog s;
    s.t = j.at("t").get<int>();
    s.x = json_vec(j.at("x"));
    s.u = json_vec(j.at("u"));
    s.y = json_vec(j.at("y"));
    s.S = j.at("S").get<double>();
    s.F_hat = json_opt(j.at("F_hat"));
    s.F_star = j.at("F_star").get<double>();
    s.objective = j.at("objective").get<double>();
    s.stage0 = j.at("stage0").get<double>();
    s.pair.learning = json_traj(j.at("learning"));
    s.pair.backup = json_traj(j.at("backup"));
    s.pair.learning_setpoint = json_setpoint(j.at("learning_setpoint"));
    s.pair.backup_setpoint = json_setpoint(j.at("backup_setpoint"));
    s.sensed_center = json_vec(j.at("sensed_center"));
    for (const auto& i : j.at("newly_discovered")) s.newly_discovered.push_back(i.get<int>());
    s.status = parse_solution_status(j.at("status").get<std::string>());
    s.starts = j.at("starts").get<int>();
    s.chosen_start = j.at("chosen_start").get<int>();
    s.wall_ms = j.at("wall_ms").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("log step: ") + e.what());
  }
}

inline void write_jsonl(const RunLog& log, std::ostream& os) {
  nlohmann::json h = to_json(log.header);
  if (log.abort_reason) h["abort_reason"] = *log.abort_reason;
  os << h.dump() << '\n';
  for (const auto& s : log.steps) os << to_json(s).dump() << '\n';
}

inline RunLog read_jsonl(std::istream& is) {
  RunLog log;
  std::string line;
  bool have_header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("log line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      log.header = header_from_json(j);
      if (j.contains("abort_reason")) log.abort_reason = j["abort_reason"].get<std::string>();
      have_header = true;
    } else {
      log.steps.push_back(step_from_json(j));
    }
  }
  if (!have_header) throw ParseError("log is empty");
  return log;
}

inline void write_jsonl(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_jsonl(log, os);
}

inline RunLog read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot read " + path.string());
  return read_jsonl(is);
}

// ─── Plot data ──────────────────────────────────────────────────────────────

inline std::string csv_header(const LogHeader& h) {
  std::ostringstream os;
  os << "t";
  for (int i = 1; i <= h.state_dim; ++i) os << ",x" << i;
  for (int i = 1; i <= h.input_dim; ++i) os << ",u" << i;
  for (int i = 1; i <= h.output_dim; ++i) os << ",y" << i;
  os << ",S,F_hat,F_star";
  return os.str();
}

inline void write_csv(const RunLog& log, std::ostream& os) {
  os << csv_header(log.header) << '\n';
  os << std::setprecision(17);
  for (const auto& s : log.steps) {
    os << s.t;
    for (Eigen::Index i = 0; i < s.x.size(); ++i) os << ',' << s.x[i];
    for (Eigen::Index i = 0; i < s.u.size(); ++i) os << ',' << s.u[i];
    for (Eigen::Index i = 0; i < s.y.size(); ++i) os << ',' << s.y[i];
    os << ',' << s.S << ',';
    if (s.F_hat) os << *s.F_hat;
    os << ',' << s.F_star << '\n';
  }
}

inline nlohmann::json geometry_json(const RunLog& log, const Environment& env) {
  using detail::json;
  json obstacles = json::array();
  for (std::size_t i = 0; i < env.obstacles.size(); ++i) {
    obstacles.push_back({{"index", i},
                         {"center", detail::vec_json(env.obstacles[i].center)},
                         {"radius", env.obstacles[i].radius}});
  }
  json steps = json::array();
  for (const auto& s : log.steps) {
    json d = json::array();
    for (int i : s.newly_discovered) d.push_back(i);
    steps.push_back({{"t", s.t}, {"sensed_center", detail::vec_json(s.sensed_center)}, {"newly_discovered", d}});
  }
  return {{"obstacles", obstacles}, {"sense_radius", env.sense_radius}, {"steps", steps}};
}

/// Writes trajectory.csv and geometry.json into `dir`.
inline void export_plot_data(const RunLog& log, const Environment& env, const std::filesystem::path& dir) {
  if (log.steps.empty()) throw ContractViolation("export_plot_data: empty log");
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "trajectory.csv");
  std::ofstream geo(dir / "geometry.json");
  if (!csv || !geo) throw std::runtime_error("export_plot_data: cannot write into " + dir.string());
  write_csv(log, csv);
  geo << geometry_json(log, env).dump(2) << '\n';
}

}  // namespace safempc
