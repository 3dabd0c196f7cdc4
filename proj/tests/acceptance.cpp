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

// Acceptance run: one PASS/FAIL line per criterion, exit code 1 if any fail.
//   acceptance [--only 1,2,...]

#include <chrono>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "safempc/safempc.hpp"
#include "safempc/scenario.hpp"

namespace fs = std::filesystem;
using namespace safempc;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Scenario load(const std::string& name) { return load_scenario(fs::path(SAFEMPC_SOURCE_DIR) / "scenarios" / name); }

RunLog run(const Scenario& sc, MpcMode mode, std::optional<int> steps = std::nullopt) {
  RunOptions o;
  o.mode = mode;
  o.steps = steps;
  o.record_wall_time = false;
  return run_closed_loop(sc, o);
}

std::string vec_text(const Vec& v) {
  std::ostringstream os;
  os << std::setprecision(6) << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

std::vector<double> first_coords(const Trajectory& t) {
  std::vector<double> out;
  for (const auto& x : t.states) out.push_back(x[0]);
  return out;
}

// 1 ─────────────────────────────────────────────────────────────────────────

Outcome toy_first_step() {
  const auto t0 = Clock::now();
  const auto sc = load("counterexample.toy.yaml");
  KnowledgeState k(sc.env, sc.cfg.lambda);
  const auto rep = solve_exact_discrete({sc.system(), k, sc.cfg, *sc.discrete_cost, sc.x0, std::nullopt});
  const double dt = seconds_since(t0);
  const bool ok = rep.feasible && rep.V_learning == Rational(4) && rep.V_backup == Rational(12) &&
                  first_coords(rep.pair.learning) == std::vector<double>{2, 2, 1, 0} &&
                  first_coords(rep.pair.backup) == std::vector<double>{2, 2, 0, 0} && dt < 1.0;
  std::ostringstream os;
  os << "V_learning=" << rep.V_learning << " V_backup=" << rep.V_backup << " learning 2,2,1,0 backup 2,2,0,0 "
     << (ok ? "match" : "mismatch");
  return {ok, os.str()};
}

// 2 ─────────────────────────────────────────────────────────────────────────

Outcome toy_stuck_without_storage() {
  const auto t0 = Clock::now();
  auto sc = load("counterexample.toy.yaml");
  std::ostringstream os;
  bool ok = true;
  for (int N : {3, 4, 5, 6}) {
    sc.cfg.N = N;
    const auto log = run(sc, MpcMode::ProposedWithout9j, 20);
    int at_two = 0;
    for (const auto& s : log.steps) at_two = s.x[0] == 2.0 ? at_two + 1 : 0;
    ok = ok && !log.abort_reason && at_two >= 20;
    os << "N=" << N << ":" << at_two << " ";
  }
  ok = ok && seconds_since(t0) < 5.0;
  os << "steps at x=2";
  return {ok, os.str()};
}

// 3 ─────────────────────────────────────────────────────────────────────────

// Worst case for leaving x = 2: while the plant sits at a non-setpoint every
// step drains at least eps * alpha * l_min from the storage, so after
// S0 / (eps alpha l_min) steps staying is infeasible; the backup then reaches
// the setpoint within N more steps. l_min is the smallest positive stage
// cost over the enumerated constraint set.
Outcome toy_escape_with_storage() {
  const auto t0 = Clock::now();
  const auto sc = load("counterexample.toy.yaml");
  std::optional<Rational> l_min;
  for (const auto& z : enumerate_points(sc.env->base, 1)) {
    const Rational l = sc.discrete_cost->stage(z.x, z.u, Setpoint{make_vec({0}), make_vec({0})});
    if (l > Rational(0) && (!l_min || l < *l_min)) l_min = l;
  }
  const Rational bound = rational_from_double(sc.cfg.S0) /
                             (rational_from_double(sc.cfg.epsilon) * rational_from_double(sc.cfg.alpha) * *l_min) +
                         Rational(sc.cfg.N);
  const auto log = run(sc, MpcMode::Proposed);
  int reached = -1;
  int stay = 0;
  for (const auto& s : log.steps) {
    if (s.x[0] == 0.0) {
      if (stay++ == 0) reached = s.t;
    } else {
      reached = -1;
      stay = 0;
    }
  }
  const bool ok = !log.abort_reason && reached >= 0 && Rational(reached) <= bound && stay >= 5 && seconds_since(t0) < 5.0;
  std::ostringstream os;
  os << "bound=" << bound << " reached x=0 at t=" << (reached >= 0 ? std::to_string(reached) : "never") << " stayed " << stay
     << " steps";
  return {ok, os.str()};
}

// 4 ─────────────────────────────────────────────────────────────────────────

struct CarRun {
  RunLog log;
  double seconds = 0.0;
};

CarRun car_run(MpcMode mode) {
  const auto t0 = Clock::now();
  CarRun r;
  r.log = run(load("car_partially_unknown.yaml"), mode);
  r.seconds = seconds_since(t0);
  return r;
}

int z_violations(const RunLog& log, const Environment& env) {
  KnowledgeState k(std::make_shared<Environment>(env), 0.0);
  int n = 0;
  for (const auto& s : log.steps) n += contains(k.truth(), s.x, s.u) ? 0 : 1;
  return n;
}

Outcome car_escape(const CarRun& prop, const CarRun& no9j) {
  const auto sc = load("car_partially_unknown.yaml");
  auto describe = [&](const char* name, const CarRun& r, const Vec& goal, double tol, bool& ok) {
    std::ostringstream os;
    if (r.log.steps.empty()) {
      ok = false;
      os << name << ": no steps";
      return os.str();
    }
    const Vec y = r.log.steps.back().y;
    const double d = (y - goal).norm();
    const int viol = z_violations(r.log, *sc.env);
    ok = !r.log.abort_reason && d <= tol && viol == 0 && r.seconds <= 600.0;
    os << std::setprecision(4) << name << ": y_final=" << vec_text(y) << " |y-" << vec_text(goal) << "|=" << d
       << " (tol " << tol << ") steps=" << r.log.steps.size() << " violations=" << viol << " time=" << r.seconds << "s";
    if (r.log.abort_reason) os << " aborted: " << *r.log.abort_reason;
    return os.str();
  };
  bool ok_p = false, ok_n = false;
  const std::string a = describe("proposed", prop, make_vec({12, 1}), 0.1, ok_p);
  const std::string b = describe("no9j", no9j, make_vec({3.5, 0}), 0.5, ok_n);
  return {ok_p && ok_n, a + "; " + b};
}

// 5 ─────────────────────────────────────────────────────────────────────────

const char* const kInvariantChecks[] = {"closed_loop_in_Z",   "storage_nonnegative", "storage_bound",
                                        "candidate_feasible", "decrease_chain",      "safe_set_monotone",
                                        "shared_first_input"};

/// Grid world with one hidden disk obstacle and local sensing.
Scenario random_grid_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Scenario sc;
  sc.name = "random_grid_" + std::to_string(seed);
  const GridWorld g = random_grid(6, 5, 0.15, seed);
  auto env = std::make_shared<Environment>();
  env->base = g.region();
  env->sense_radius = 1.5;
  std::vector<Vec> cells;
  for (const auto& r : steady_setpoints(lattice_increment_model(2), env->base, 0.0)) cells.push_back(r.x);
  if (cells.size() < 2) return sc;
  std::shuffle(cells.begin(), cells.end(), rng);
  env->obstacles.push_back({cells[1], 0.5});
  sc.env = env;
  sc.model = lattice_increment_model(2);
  sc.x0 = cells[0];
  sc.initial_input = Vec::Zero(2);
  sc.discrete_cost = lattice_quadratic_cost({1, 1}, {1, 1}, 1, make_vec({9, 8}));
  sc.cfg.N = 3;
  sc.cfg.epsilon = seed % 2 ? 1.0 : 0.1;
  sc.cfg.alpha = 1.0;
  sc.cfg.lambda = 0.0;
  sc.cfg.S0 = 1.0 + static_cast<double>(seed % 4);
  sc.cfg.mode = seed % 3 ? MpcMode::Proposed : MpcMode::ProposedWithout9j;
  sc.max_steps = 15;
  sc.grid = g;
  return sc;
}

Outcome invariant_suite(const std::vector<std::pair<Scenario, RunLog>>& car_logs) {
  int runs = 0, violations = 0, aborted = 0;
  std::set<std::string> failed;
  auto check = [&](const Scenario& sc, const RunLog& log, MpcMode mode) {
    ++runs;
    if (log.abort_reason) ++aborted;
    auto ctx = sc.verify_context();
    ctx.cfg.mode = mode;
    const auto v = verify_run(log, ctx);
    for (const char* name : kInvariantChecks) {
      if (v.at(name).status == CheckStatus::Fail) {
        ++violations;
        failed.insert(sc.name + ":" + name);
      }
    }
  };
  for (const auto& name : {"counterexample.toy.yaml", "gap_grid.yaml"}) {
    const auto sc = load(name);
    for (MpcMode m : {MpcMode::Proposed, MpcMode::ProposedWithout9j, MpcMode::Baseline}) check(sc, run(sc, m), m);
  }
  for (const auto& [sc, log] : car_logs) check(sc, log, sc.cfg.mode);
  int grids = 0;
  for (std::uint64_t seed = 1; grids < 50; ++seed) {
    const Scenario sc = random_grid_scenario(seed);
    if (!sc.env) continue;
    check(sc, run(sc, sc.cfg.mode), sc.cfg.mode);
    ++grids;
  }
  std::ostringstream os;
  os << runs << " runs (" << grids << " random grids), " << violations << " invariant violations, " << aborted
     << " aborted";
  for (const auto& f : failed) os << ' ' << f;
  return {violations == 0 && aborted == 0, os.str()};
}

// 6 ─────────────────────────────────────────────────────────────────────────

Outcome interior_points_transitory() {
  const auto t0 = Clock::now();
  const auto sys = lattice_increment_model(2);
  int checked = 0, counter = 0, grids = 0;
  for (std::uint64_t seed = 100; grids < 10; ++seed) {
    const GridWorld g = random_grid(7, 6, 0.1, seed);
    const auto interior = interior_setpoints(g);
    if (interior.empty()) continue;
    ++grids;
    // Target outside the grid: T falls strictly toward the top-right corner.
    const auto cost = lattice_quadratic_cost({1, 1}, {1, 1}, 1, make_vec({40, 30}));
    const RegionExpr region = g.region();
    for (const auto& r : interior) {
      for (double eps : {1.0, 0.1, 0.01}) {
        const auto rep = is_transitory_def2(sys, cost, r, region, eps, 3);
        ++checked;
        if (!rep.is_transitory ||
            !witness_holds(TransitoryDefinition::LearningBackup, sys, cost, r, region, eps, 3, *rep.witness)) {
          ++counter;
        }
      }
    }
  }
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << grids << " grids, " << checked << " (setpoint, eps) pairs, " << counter << " counterexamples";
  return {counter == 0 && checked > 0 && dt < 60.0, os.str()};
}

// 7 ─────────────────────────────────────────────────────────────────────────

Outcome gap_grid_flip() {
  const auto t0 = Clock::now();
  const auto sc = load("gap_grid.yaml");
  const auto sys = sc.system();
  const Setpoint r1 = grid_setpoint(3, 0);
  const auto& region = sc.env->base;
  const auto coarse = is_transitory_def2(sys, *sc.discrete_cost, r1, region, 1.0, sc.cfg.N);
  const auto fine = is_transitory_def2(sys, *sc.discrete_cost, r1, region, 0.1, sc.cfg.N);
  const bool verified = fine.witness && witness_holds(TransitoryDefinition::LearningBackup, sys, *sc.discrete_cost, r1,
                                                      region, 0.1, sc.cfg.N, *fine.witness);
  std::ostringstream os;
  os << "setpoint (3,0): eps=1 " << (coarse.is_transitory ? "transitory" : "not transitory") << ", eps=0.1 "
     << (fine.is_transitory ? "transitory" : "not transitory");
  if (fine.witness) os << " (lhs " << fine.witness->lhs << " < rhs " << fine.witness->rhs << ")";
  os << ", witness " << (verified ? "re-verified" : "NOT verified");
  return {!coarse.is_transitory && fine.is_transitory && verified && seconds_since(t0) < 30.0, os.str()};
}

// 8 ─────────────────────────────────────────────────────────────────────────

Outcome numerical_hygiene() {
  double worst = 0.0;
  {
    fixtures::CarFixture f(50);
    const auto hint = braking_plan(f.model, f.k.safe(), f.x0, f.cfg.N);
    const ContinuousTranscription<BicycleModel> tr(f.model, f.k, f.cfg, f.costs, f.x0, 80.0, hint);
    const Vec base = tr.pack(hint);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.2);
    for (int i = 0; i < 100; ++i) {
      Vec z = base;
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] += noise(rng);
      z = z.cwiseMax(tr.spec().lower).cwiseMin(tr.spec().upper);
      worst = std::max(worst, check_gradients(tr.spec(), z).max_deviation());
    }
  }
  int tested = 0, bad = 0;
  {
    fixtures::PlanarFixture f;
    const auto sys = f.model.as_system();
    const auto ce = make_evaluator(f.costs, sys);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> pos(0.2, 5.8);
    for (int attempt = 0; tested < 100 && attempt < 10000; ++attempt) {
      const Vec x = make_vec({pos(rng), pos(rng)});
      const Vec r = make_vec({pos(rng), pos(rng)});
      if ((r - x).lpNorm<Eigen::Infinity>() > 0.9 * (f.cfg.N - 1)) continue;
      if (!f.segment_clear(x, r, 0.05)) continue;
      const auto k = f.sensed_at(x);
      const auto pair = f.line_plan(x, r);
      const double bound = pair_F(ce, f.cfg, pair) + 0.5;
      if (!check_pair(sys, k, f.cfg, ce, x, pair, bound, 1e-9).ok) continue;
      const ContinuousTranscription<SingleIntegrator2D> tr(f.model, k, f.cfg, f.costs, x, bound, pair);
      const Vec z0 = tr.pack(pair);
      const double f0 = tr.spec().objective(z0, nullptr);
      const auto rep = solve_nlp(tr.spec(), z0, f.cfg.solver);
      if (rep.status == SolveStatus::Failed || rep.max_violation() > f.cfg.solver.feas_tol || rep.objective > f0 + 1e-12) {
        ++bad;
      }
      ++tested;
    }
  }
  std::ostringstream os;
  os << std::setprecision(3) << "worst gradient deviation " << worst << " over 100 points (tol 1e-4); " << tested
     << " warm starts, " << bad << " not feasible-monotone";
  return {worst <= 1e-4 && tested == 100 && bad == 0, os.str()};
}

// 9 ─────────────────────────────────────────────────────────────────────────

Outcome assumption_sandwich() {
  const auto sc = load("car_partially_unknown.yaml");
  const auto& model = std::get<BicycleModel>(sc.model);
  const Mat& Q = sc.costs->Q;
  const double lmin = Eigen::SelfAdjointEigenSolver<Mat>(Q).eigenvalues().minCoeff();
  const auto k = estimate_assumption_constants(model, *sc.costs, sc.env->truth(), make_vec({0, -3, -M_PI, -0.6}),
                                               make_vec({12, 2, M_PI, 0.6}), 10000);
  std::ostringstream os;
  os << std::setprecision(12) << "a1=" << k.a1 << " lambda_min(Q)=" << lmin << " samples=" << k.samples_used;
  return {std::abs(k.a1 - lmin) <= 1e-12 && std::abs(lmin - 1e-5) <= 1e-12 && k.samples_used >= 10000, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  if (argc == 3 && std::string(argv[1]) == "--only") {
    std::stringstream ss(argv[2]);
    for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
  } else if (argc != 1) {
    std::cerr << "usage: acceptance [--only 1,2,...]\n";
    return 2;
  }
  auto wanted = [&](int c) { return only.empty() || only.contains(c); };

  int failures = 0;
  auto report = [&](int c, const std::string& title, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << c << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail << " ["
              << std::fixed << std::setprecision(2) << seconds_since(t0) << "s]" << std::defaultfloat << std::endl;
  };

  report(1, "counter-example first step", toy_first_step);
  report(2, "stuck without storage", toy_stuck_without_storage);
  report(3, "escape with storage", toy_escape_with_storage);

  std::vector<std::pair<Scenario, RunLog>> car_logs;
  // The car logs feed the invariant suite as well.
  auto car_runs = [&] {
    const CarRun prop = car_run(MpcMode::Proposed);
    const CarRun no9j = car_run(MpcMode::ProposedWithout9j);
    auto sc = load("car_partially_unknown.yaml");
    sc.cfg.mode = MpcMode::Proposed;
    car_logs.push_back({sc, prop.log});
    sc.cfg.mode = MpcMode::ProposedWithout9j;
    car_logs.push_back({sc, no9j.log});
    return car_escape(prop, no9j);
  };
  if (wanted(4)) {
    report(4, "car escape", car_runs);
  } else if (wanted(5)) {
    car_runs();
  }
  report(5, "invariant suite", [&] { return invariant_suite(car_logs); });
  report(6, "interior setpoints transitory", interior_points_transitory);
  report(7, "epsilon flips the gap setpoint", gap_grid_flip);
  report(8, "numerical hygiene", numerical_hygiene);
  report(9, "stage cost lower constant", assumption_sandwich);

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << '\n';
  return failures ? 1 : 0;
}
