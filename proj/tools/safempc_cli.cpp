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

// safempc command line:
//   run <scenario> [--mode M] [--steps K] [--seed S] [--out DIR]
//   compare <scenario> --modes a,b[,c]
//   verify <logdir>
//   transitory <grid-scenario> --eps E [--def 1|2]

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "safempc/safempc.hpp"
#include "safempc/scenario.hpp"

namespace fs = std::filesystem;
using namespace safempc;

namespace {

constexpr const char* kLogFile = "steps.jsonl";
constexpr const char* kScenarioCopy = "scenario.yaml";
constexpr const char* kVerdictFile = "verdict.txt";

void print_step(const StepLog& s) {
  std::cerr << "t=" << s.t << " y=(";
  for (Eigen::Index i = 0; i < s.y.size(); ++i) std::cerr << (i ? " " : "") << s.y[i];
  std::cerr << ") S=" << s.S << " F*=" << s.F_star << ' ' << to_string(s.status) << '\n';
}

VerifyContext context_for(const Scenario& sc, const LogHeader& h) {
  VerifyContext ctx = sc.verify_context();
  ctx.cfg.mode = parse_mode(h.mode);
  return ctx;
}

int cmd_run(const fs::path& scenario, const std::optional<std::string>& mode, std::optional<int> steps,
            std::optional<std::uint64_t> seed, const std::optional<fs::path>& out, bool quiet) {
  const Scenario sc = load_scenario(scenario);
  RunOptions opt;
  if (mode) opt.mode = parse_mode(*mode);
  opt.steps = steps;
  opt.seed = seed;
  if (!quiet) opt.on_step = print_step;
  const RunLog log = run_closed_loop(sc, opt);
  const RunVerdict verdict = verify_run(log, context_for(sc, log.header));

  if (out) {
    fs::create_directories(*out);
    write_jsonl(log, *out / kLogFile);
    fs::copy_file(scenario, *out / kScenarioCopy, fs::copy_options::overwrite_existing);
    if (!log.steps.empty()) export_plot_data(log, *sc.env, *out);
    std::ofstream(*out / kVerdictFile) << verdict.format();
  }
  std::cout << verdict.format();
  if (!log.steps.empty()) {
    const auto& last = log.steps.back();
    std::cout << "# steps=" << log.steps.size() << " final_y=(";
    for (Eigen::Index i = 0; i < last.y.size(); ++i) std::cout << (i ? " " : "") << last.y[i];
    std::cout << ")\n";
  }
  if (log.abort_reason) std::cout << "# aborted: " << *log.abort_reason << '\n';
  return verdict.passed() && !log.abort_reason ? 0 : 1;
}

int cmd_compare(const fs::path& scenario, const std::vector<std::string>& names, std::optional<int> steps) {
  const Scenario sc = load_scenario(scenario);
  std::vector<MpcMode> modes;
  for (const auto& n : names) modes.push_back(parse_mode(n));
  RunOptions opt;
  opt.steps = steps;
  std::cout << format_comparison(compare_modes(sc, modes, opt));
  return 0;
}

int cmd_verify(const fs::path& dir) {
  const RunLog log = read_jsonl(dir / kLogFile);
  const Scenario sc = load_scenario(dir / kScenarioCopy);
  const RunVerdict verdict = verify_run(log, context_for(sc, log.header));
  std::cout << verdict.format();
  const fs::path stored = dir / kVerdictFile;
  if (fs::exists(stored)) {
    std::ifstream is(stored);
    const auto before = parse_verdict(is);
    bool same = before.size() == verdict.results.size();
    for (std::size_t i = 0; same && i < before.size(); ++i) {
      same = before[i].name == verdict.results[i].name && before[i].status == verdict.results[i].status;
    }
    std::cout << "# stored verdict " << (same ? "matches" : "DIFFERS") << '\n';
    if (!same) return 1;
  }
  return verdict.passed() ? 0 : 1;
}

std::string cell_text(const Vec& v) {
  std::ostringstream os;
  os << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  os << ')';
  return os.str();
}

int cmd_transitory(const fs::path& scenario, double eps, int def) {
  const Scenario sc = load_scenario(scenario);
  if (!sc.is_discrete()) throw ContractViolation("transitory: needs a lattice scenario");
  const SystemModel sys = sc.system();
  const auto kind = def == 1 ? TransitoryDefinition::SinglePlan : TransitoryDefinition::LearningBackup;
  const RegionExpr& region = sc.env->base;
  std::cout << "setpoint,T,transitory,delta,probes,r2,lhs,rhs\n";
  for (const auto& r : steady_setpoints(sys, region, sc.cfg.lambda)) {
    const auto rep = is_transitory(kind, sys, *sc.discrete_cost, r, region, eps, sc.cfg.N, sc.cfg.lambda);
    std::cout << cell_text(r.x) << ',' << sc.discrete_cost->T(r) << ',' << (rep.is_transitory ? "yes" : "no") << ','
              << rep.delta_used << ',' << rep.probe_points << ',';
    if (rep.witness) std::cout << cell_text(rep.witness->r2.x) << ',' << rep.witness->lhs << ',' << rep.witness->rhs;
    else std::cout << ",,";
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe exploration MPC simulator"};
  app.require_subcommand(1);

  fs::path scenario;
  std::optional<std::string> mode;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Simulate a scenario and verify the run");
  run->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "proposed|no9j|baseline");
  run->add_option("--steps", steps, "Step limit");
  run->add_option("--seed", seed, "Seed for multi-start perturbations");
  run->add_option("--out", out, "Directory for steps.jsonl, trajectory.csv, geometry.json, verdict.txt");
  run->add_flag("-q,--quiet", quiet, "No per-step progress on stderr");

  std::vector<std::string> modes;
  auto* compare = app.add_subcommand("compare", "Run several modes and tabulate the outcome");
  compare->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  compare->add_option("--modes", modes, "Comma-separated modes")->required()->delimiter(',');
  compare->add_option("--steps", steps, "Step limit");

  fs::path logdir;
  auto* verify = app.add_subcommand("verify", "Re-check a log directory written by run --out");
  verify->add_option("logdir", logdir, "Log directory")->required()->check(CLI::ExistingDirectory);

  double eps = 0.0;
  int def = 2;
  auto* transitory = app.add_subcommand("transitory", "Classify every steady setpoint of a grid scenario");
  transitory->add_option("scenario", scenario, "Grid scenario file")->required()->check(CLI::ExistingFile);
  transitory->add_option("--eps", eps, "Tracking weight")->required()->check(CLI::PositiveNumber);
  transitory->add_option("--def", def, "1: single plan, 2: learning/backup")->check(CLI::IsMember({1, 2}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario, mode, steps, seed, out, quiet);
    if (*compare) return cmd_compare(scenario, modes, steps);
    if (*verify) return cmd_verify(logdir);
    if (*transitory) return cmd_transitory(scenario, eps, def);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
