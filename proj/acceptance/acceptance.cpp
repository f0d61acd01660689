// Runs the nine acceptance criteria and prints one PASS/FAIL line each.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mixedctrl/cli.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace mixedctrl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream notes;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 8) failures.push_back(what);
    else if (!ok) failures.push_back("");
  }
  template <class T>
  void note(const std::string& key, const T& value) {
    notes << ' ' << key << '=' << value;
  }
};

std::string num(double v) { return cli::fmt_num(v); }

// Active-constraint records gathered from every solve in this run.
struct ActiveRecord {
  std::string scenario;
  double lambda, risk, bound;
};
std::vector<ActiveRecord> active_records;

template <class Policy>
void record_active(const std::string& name, const MixedSolution<Policy>& m, const Bounds& v) {
  active_records.push_back({name, m.dual[0], m.aggregate.c1(), v[0]});
}

PureCandidate<int> cand(double c0, double c1) { return {0, CostVector(c0, {c1})}; }

// ---------------------------------------------------------------------------

void criterion1(Check& c) {
  const auto t0 = Clock::now();
  auto p = scenarios::toy_problem();
  const auto r = solve_mixed(p.oracle, p.bounds);
  const double dt = seconds_since(t0);
  record_active("toy", r.mixed, p.bounds);
  c.note("lambda", num(r.mixed.dual[0]));
  c.note("cost", num(r.mixed.aggregate.c0));
  c.note("risk", num(r.mixed.aggregate.c1()));
  c.note("time_s", num(dt));
  c.expect(std::abs(r.mixed.dual[0] - 1000.0) <= 1e-3, "lambda* not within 1e-3 of 1000");
  c.expect(r.mixed.components.size() == 2, "expected two components");
  for (const auto& comp : r.mixed.components)
    c.expect(std::abs(comp.probability - 0.5) <= 1e-9, "probability not 0.5");
  c.expect(std::abs(r.mixed.aggregate.c0 - 15.0) <= 1e-9, "aggregate cost not 15");
  c.expect(std::abs(r.mixed.aggregate.c1() - 0.01) <= 1e-9, "aggregate risk not 0.01");
  c.expect(dt < 1.0, "runtime over 1 s");
}

// Probabilities of the (riskier, safer) components.
std::pair<double, double> replay(double c0a, double r_a, double c0b, double r_b, double v, double* cost) {
  const auto m = recover_mixture_scalar(cand(c0a, r_a), cand(c0b, r_b), Bounds{v});
  *cost = m.aggregate.c0;
  return {m.components[0].probability, m.components[1].probability};
}

void criterion2(Check& c) {
  double cost = 0.0;
  // (a) pure plans (3.692, 0.0278) and (4.175, 0.0021), V = 0.01.
  auto [pa, qa] = replay(3.692, 0.0278, 4.175, 0.0021, 0.01, &cost);
  c.note("a_p", num(pa) + "/" + num(qa));
  c.note("a_cost", num(cost));
  c.expect(std::abs(pa - 0.306) <= 1e-3 && std::abs(qa - 0.694) <= 1e-3,
           "(a) probabilities " + num(pa) + "/" + num(qa) + " not within 0.001 of 0.306/0.694");
  c.expect(std::abs(cost - 4.027) <= 1e-3, "(a) aggregate cost not within 0.001 of 4.027");

  // (b) grid paths (98.7, 0.0228) and (130.8, 0.0064), V = 0.02.
  auto [pb, qb] = replay(98.7, 0.0228, 130.8, 0.0064, 0.02, &cost);
  c.note("b_p", num(pb) + "/" + num(qb));
  c.note("b_cost", num(cost));
  c.expect(std::abs(pb - 0.83) <= 5e-3 && std::abs(qb - 0.17) <= 5e-3, "(b) probabilities off");
  c.expect(std::abs(cost - 104.2) <= 0.2, "(b) expected length not within 0.2 of 104.2");

  // (c) landing policies (641.02, 0.00574) and (645.49, 0.00016), V = 0.001.
  auto [pc, qc] = replay(641.02, 0.00574, 645.49, 0.00016, 0.001, &cost);
  c.note("c_p", num(pc) + "/" + num(qc));
  c.expect(std::abs(pc - 0.151) <= 2e-3 && std::abs(qc - 0.849) <= 2e-3, "(c) probabilities off");
}

void check_equivalence(Check& c, const std::string& tag, double mixed, double risk,
                       const std::vector<oracle::Point>& pts, double v, double* worst) {
  const double cp = oracle::pure_optimum(pts, v);
  const double cm = oracle::hull_optimum(pts, v);
  const double q = oracle::dual_optimum(pts, v);
  double lmax = 0.0;
  for (const auto& a : pts)
    for (const auto& b : pts)
      if (a.c1 != b.c1) lmax = std::max(lmax, std::abs((b.c0 - a.c0) / (a.c1 - b.c1)));
  const double qg = oracle::dual_optimum_grid(pts, v, 1.5 * lmax + 1.0, 20000);
  *worst = std::max({*worst, std::abs(mixed - cm), std::abs(mixed - q)});
  c.expect(std::abs(mixed - q) <= 1e-6, tag + ": mixed cost " + num(mixed) + " vs q* " + num(q));
  c.expect(std::abs(mixed - cm) <= 1e-6, tag + ": mixed cost " + num(mixed) + " vs hull " + num(cm));
  c.expect(mixed <= cp + 1e-9, tag + ": mixed cost above the pure optimum");
  c.expect(qg <= q + 1e-9, tag + ": grid dual above the exact dual");
  // Delta = c_P* - q* is the reduction mixing achieves.
  if (std::isfinite(cp)) c.expect(std::abs((cp - q) - (cp - mixed)) <= 1e-6, tag + ": gap mismatch");
  c.expect(risk <= v + 1e-12, tag + ": mixture violates the bound");
}

void criterion3(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> npts(2, 8);
  double worst = 0.0;
  int mixed_count = 0;
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<oracle::Point> pts;
    std::vector<CostVector> cvs;
    const int n = npts(rng);
    for (int j = 0; j < n; ++j) {
      // Integer-ish data on half the instances so ties and collinear points occur.
      double c0 = 100.0 * u(rng), c1 = 0.1 * u(rng);
      if (inst % 2) {
        c0 = std::round(c0 / 10.0);
        c1 = std::round(c1 * 100.0) / 1000.0;
      }
      pts.push_back({c0, c1});
      cvs.emplace_back(c0, std::vector<double>{c1});
    }
    double rmin = 1.0, rmax = 0.0;
    for (const auto& p : pts) {
      rmin = std::min(rmin, p.c1);
      rmax = std::max(rmax, p.c1);
    }
    const double v = rmin + (rmax - rmin) * u(rng);
    scenarios::FiniteSetOracle o(cvs);
    MixedSolveConfig cfg;
    cfg.scalar.breakpoint_steps = inst % 3 != 0;
    const auto r = solve_mixed(o, Bounds{v}, cfg);
    record_active("finite#" + std::to_string(inst), r.mixed, Bounds{v});
    if (r.mixed.components.size() == 2) ++mixed_count;
    check_equivalence(c, "finite#" + std::to_string(inst), r.mixed.aggregate.c0, r.mixed.aggregate.c1(), pts,
                      v, &worst);
  }
  for (int inst = 0; inst < 50; ++inst) {
    const auto t = oracle::random_tiny_mdp(rng);
    const auto m = oracle::to_mdp(t);
    const auto all = oracle::enumerate_policies(t);
    double rmin = 1.0, rmax = 0.0;
    for (const auto& p : all.costs) {
      rmin = std::min(rmin, p.c1);
      rmax = std::max(rmax, p.c1);
    }
    // Every policy has the same risk: V would sit within rounding of it.
    if (rmax - rmin < 1e-9) {
      --inst;
      continue;
    }
    const double v = rmin + (rmax - rmin) * u(rng);
    ccmdp::MdpOracle o(m);
    const auto r = solve_mixed(o, Bounds{v});
    record_active("mdp#" + std::to_string(inst), r.mixed, Bounds{v});
    if (r.mixed.components.size() == 2) ++mixed_count;
    check_equivalence(c, "mdp#" + std::to_string(inst), r.mixed.aggregate.c0, r.mixed.aggregate.c1(),
                      all.costs, v, &worst);
  }
  const double dt = seconds_since(t0);
  c.note("instances", 250);
  c.note("mixed", mixed_count);
  c.note("max_err", num(worst));
  c.note("time_s", num(dt));
  c.expect(dt < 120.0, "runtime over 2 min");
}

// Scenario solves shared between criteria.
struct GridRun {
  std::shared_ptr<const scenarios::GridScenario> scenario;
  MixedSolveResult<ccmdp::Policy> result;
  double solve_s = 0.0;
};

GridRun& grid_run() {
  static std::optional<GridRun> run;
  if (!run) {
    const auto cfg = cli::load_config(fs::path(MIXEDCTRL_CONFIG_DIR) / "grid.json");
    const auto t0 = Clock::now();
    auto problem = std::get<cli::MdpProblem>(cli::build_problem(cfg));
    ccmdp::MdpOracle o(problem.mdp());
    auto res = solve_mixed(o, problem.bounds, cfg.solver);
    run = GridRun{problem.grid, std::move(res), seconds_since(t0)};
  }
  return *run;
}

struct CorridorRun {
  scenarios::SmpcInstance inst;
  smpc::PwlCdf pwl;
  MixedSolveResult<smpc::ControlPlan> result;
  double solve_s = 0.0;
};

CorridorRun& corridor_run() {
  static std::optional<CorridorRun> run;
  if (!run) {
    auto inst = scenarios::corridor_smpc();
    auto pwl = smpc::build_pwl_cdf(inst.breakpoints);
    const auto t0 = Clock::now();
    smpc::SmpcOracle o(inst.model, pwl);
    auto res = solve_mixed(o, Bounds{inst.model.risk_bound});
    const double dt = seconds_since(t0);
    run = CorridorRun{std::move(inst), std::move(pwl), std::move(res), dt};
  }
  return *run;
}

void criterion4(Check& c) {
  {
    const auto sc = scenarios::edl_scenario(scenarios::default_edl_params());
    ccmdp::MdpOracle o(sc.mdp);
    record_active("edl", solve_mixed(o, Bounds{sc.params.risk_bound}).mixed, Bounds{sc.params.risk_bound});
  }
  record_active("grid", grid_run().result.mixed, Bounds{grid_run().scenario->params.risk_bound});
  const auto& cr = corridor_run();
  record_active("corridor", cr.result.mixed, Bounds{cr.inst.model.risk_bound});

  const double tol = 1e-6;  // lambda above this counts as active
  std::size_t active = 0;
  double worst = 0.0;
  for (const auto& r : active_records) {
    if (r.lambda <= tol) continue;
    ++active;
    const double err = std::abs(r.risk - r.bound);
    worst = std::max(worst, err);
    c.expect(err <= 1e-9, r.scenario + ": lambda " + num(r.lambda) + " but risk " + num(r.risk) +
                              " vs V " + num(r.bound));
  }
  c.note("solves", active_records.size());
  c.note("active", active);
  c.note("max_err", num(worst));
}

void criterion5(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> lam(0.0, 80.0);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const auto t = oracle::random_tiny_mdp(rng);
    const auto m = oracle::to_mdp(t);
    const auto all = oracle::enumerate_policies(t);
    for (int i = 0; i < 20; ++i) {
      const double l = i == 0 ? 0.0 : lam(rng);
      const auto got = ccmdp::lagrangian_dp(m, l);
      const double want = oracle::min_lagrangian(all, l);
      const double err = std::abs(got.cost.c0 + l * got.cost.c1() - want);
      worst = std::max(worst, err);
      c.expect(err <= 1e-9, "mdp#" + std::to_string(inst) + " lambda " + num(l) + ": error " + num(err));
    }
  }
  const double dt = seconds_since(t0);
  c.note("mdps", 50);
  c.note("lambdas_each", 20);
  c.note("max_err", num(worst));
  c.note("time_s", num(dt));
  c.expect(dt < 60.0, "runtime over 1 min");
}

void criterion6(Check& c) {
  const auto t0 = Clock::now();
  const auto& cr = corridor_run();
  const auto& model = cr.inst.model;
  c.expect(model.horizon <= 10 && model.obstacles.size() <= 2, "corridor instance too large");

  // Two modes: through the slot for small lambda, around the boxes for large.
  smpc::SmpcOracle o(model, cr.pwl);
  const auto risky = o.query(DualVector{0.1});
  const auto safe = o.query(DualVector{1e5});
  c.expect(risky.cost.c0 < safe.cost.c0 && risky.cost.c1() > safe.cost.c1(),
           "no risky-short / safe-long split across lambda");
  c.note("risky", num(risky.cost.c0) + "@" + num(risky.cost.c1()));
  c.note("safe", num(safe.cost.c0) + "@" + num(safe.cost.c1()));

  const auto& mixed = cr.result.mixed;
  double mix_rate = 0.0;
  for (std::size_t j = 0; j < mixed.components.size(); ++j) {
    const auto& comp = mixed.components[j];
    const auto est = smpc::estimate_risk_mc(model, comp.candidate.policy, stats::derive_seed(1, j), 1000000);
    const double bound = comp.candidate.cost.c1();
    c.expect(est.ci.lo <= bound, "plan " + std::to_string(j) + ": MC CI lower " + num(est.ci.lo) +
                                     " above Boole bound " + num(bound));
    c.note("plan" + std::to_string(j), num(est.rate) + "<=" + num(bound));
    mix_rate += comp.probability * est.rate;
  }
  c.note("mixture_rate", num(mix_rate));
  c.note("mixture_bound", num(mixed.aggregate.c1()));

  // PWL conservatism on 10^4 points.
  const auto f = smpc::build_pwl_cdf(smpc::uniform_breakpoints(24, -6.0, 0.0));
  const double lo = -6.0, hi = 0.0;
  std::size_t bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const double y = lo + (hi - lo) * i / 9999.0;
    if (f(y) < oracle::phi(y) - 1e-15) ++bad;
  }
  for (int i = 0; i < 10000; ++i) {
    const double y = -6.0 + 6.0 * i / 9999.0;
    if (cr.pwl(y) < oracle::phi(y) - 1e-15) ++bad;
  }
  c.expect(bad == 0, std::to_string(bad) + " sweep points below the normal CDF");
  const double dt = seconds_since(t0) + cr.solve_s;
  c.note("time_s", num(dt));
  c.expect(dt < 300.0, "runtime over 5 min");
}

void criterion7(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> dim(2, 6);
  double worst = 0.0;
  int lp_opt = 0, milp_opt = 0;
  for (int t = 0; t < 100; ++t) {
    const auto p = instances::random_lp(rng, dim(rng), dim(rng), t % 4 != 0, t % 3 == 0);
    const auto got = lp::solve_lp(p);
    const auto ref = oracle::enumerate_vertices(oracle::from_lp(p), 1e-9);
    if (!ref) {
      c.expect(got.status == lp::Status::infeasible, "lp#" + std::to_string(t) + ": expected infeasible");
      continue;
    }
    const double want = p.sense == lp::Sense::maximize ? -ref->objective : ref->objective;
    c.expect(got.status == lp::Status::optimal, "lp#" + std::to_string(t) + ": expected optimal");
    if (got.status != lp::Status::optimal) continue;
    ++lp_opt;
    worst = std::max(worst, std::abs(got.objective - want));
    c.expect(std::abs(got.objective - want) <= 1e-6, "lp#" + std::to_string(t) + ": objective off");
  }
  for (int t = 0; t < 100; ++t) {
    const auto p = instances::random_milp(rng, 3 + t % 6, 1 + t % 3, 3 + t % 3);
    milp::MilpConfig cfg;
    cfg.abs_gap = 1e-9;
    const auto got = milp::solve_milp(p, cfg);
    const auto ref = oracle::enumerate_assignments(oracle::from_lp(p.lp), p.binaries);
    if (!ref) {
      c.expect(got.status == milp::Status::infeasible, "milp#" + std::to_string(t) + ": expected infeasible");
      continue;
    }
    const double want = p.lp.sense == lp::Sense::maximize ? -ref->objective : ref->objective;
    c.expect(got.status == milp::Status::optimal, "milp#" + std::to_string(t) + ": expected optimal");
    if (got.status != milp::Status::optimal) continue;
    ++milp_opt;
    worst = std::max(worst, std::abs(got.objective - want));
    c.expect(std::abs(got.objective - want) <= 1e-6, "milp#" + std::to_string(t) + ": objective off");
  }
  const double dt = seconds_since(t0);
  c.note("lp_optimal", lp_opt);
  c.note("milp_optimal", milp_opt);
  c.note("max_err", num(worst));
  c.note("time_s", num(dt));
  c.expect(lp_opt > 50 && milp_opt > 50, "too few feasible instances to be meaningful");
  c.expect(dt < 120.0, "runtime over 2 min");
}

void criterion8(Check& c) {
  auto& g = grid_run();
  const auto& p = g.scenario->params;
  c.expect(p.map.width == 30 && p.map.height == 30 && p.horizon == 15 && p.risk_bound == 0.02,
           "grid config is not the 30x30, T = 15, V = 0.02 instance");
  const auto& m = g.result.mixed;
  c.note("solve_s", num(g.solve_s));
  c.note("components", m.components.size());
  c.note("lambda", num(m.dual[0]));
  c.note("cost", num(m.aggregate.c0));
  c.note("risk", num(m.aggregate.c1()));
  c.expect(g.solve_s < 60.0, "solve took over 60 s");
  ccmdp::MdpOracle o(g.scenario->mdp);
  const auto opt = check_optimality(m, Bounds{p.risk_bound}, o);
  c.expect(m.components.size() == 2 || (m.components.size() == 1 && opt.overall),
           "neither a two-component mixture nor a certified pure optimum");
  c.expect(opt.overall, "optimality conditions fail");
  const auto sim = ccmdp::simulate(g.scenario->mdp, m, 1, 100000);
  c.note("empirical_risk", num(sim.empirical_failure_rate));
  c.note("ci99", "[" + num(sim.failure_ci.lo) + "," + num(sim.failure_ci.hi) + "]");
  c.expect(sim.failure_ci.contains(m.aggregate.c1()), "99% CI misses the exact aggregate risk");
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void criterion9(Check& c) {
  const fs::path base = fs::temp_directory_path() / ("mixedctrl_accept_" + std::to_string(std::random_device{}()));
  std::ostringstream log;
  for (const char* name : {"toy.json", "finite.json", "smpc.json", "grid.json", "edl.json"}) {
    const auto cfg = cli::load_config(fs::path(MIXEDCTRL_CONFIG_DIR) / name);
    const auto a = base / (std::string(name) + ".a"), b = base / (std::string(name) + ".b");
    cli::run_solve(cfg, a, log);
    cli::run_solve(cfg, b, log);
    const bool same = slurp(a / "report.json") == slurp(b / "report.json") &&
                      slurp(a / "dual_trace.csv") == slurp(b / "dual_trace.csv");
    c.expect(same, std::string(name) + ": reports differ");
    c.note(name, same ? "identical" : "DIFFERENT");
  }
  std::error_code ec;
  fs::remove_all(base, ec);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> all{
      {1, "toy pipeline", criterion1},
      {2, "mixture recovery replays", criterion2},
      {3, "oracle equivalence (finite sets, tiny MDPs)", criterion3},
      {4, "active constraint met exactly", criterion4},
      {5, "DP against policy enumeration", criterion5},
      {6, "SMPC conservatism", criterion6},
      {7, "LP/MILP against enumeration", criterion7},
      {8, "grid scenario", criterion8},
      {9, "determinism", criterion9},
  };
  int failed = 0;
  for (const auto& cr : all) {
    Check c;
    const auto t0 = Clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool pass = c.failures.empty();
    if (!pass) ++failed;
    std::printf("[%s] %d %s (%.2f s):%s\n", pass ? "PASS" : "FAIL", cr.id, cr.title, seconds_since(t0),
                c.notes.str().c_str());
    std::size_t shown = 0;
    for (const auto& f : c.failures)
      if (!f.empty() && shown++ < 8) std::printf("       %s\n", f.c_str());
    if (c.failures.size() > shown) std::printf("       (%zu failures in total)\n", c.failures.size());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
