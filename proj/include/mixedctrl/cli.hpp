// Command-line front end. A run is described by a JSON config
// (schema_version 1); results go to an output directory as report.json,
// dual_trace.csv and one policy (MDP) or plan (SMPC) file per reported
// policy. Wall time is kept out of report.json so that repeated runs give
// identical bytes; it goes to timing.json.
//
// Exit codes: 0 success, 1 infeasible problem, 2 invalid config or usage,
// 3 solver failure or failed validation.

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mixedctrl/ccmdp.hpp"
#include "mixedctrl/core.hpp"
#include "mixedctrl/dual.hpp"
#include "mixedctrl/milp.hpp"
#include "mixedctrl/scenarios.hpp"
#include "mixedctrl/smpc.hpp"
#include "mixedctrl/stats.hpp"

namespace mixedctrl::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitInfeasible = 1, kExitInvalid = 2, kExitFailure = 3 };

struct ConfigError : InvalidInput {
  using InvalidInput::InvalidInput;
};

/// A solved plan or policy that the output gates refuse to report.
struct RejectedSolution : Error {
  using Error::Error;
};

/// Shortest round-trip decimal form.
inline std::string fmt_num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// Config field access
// ---------------------------------------------------------------------------

namespace detail {

inline const json* find(const json& j, const char* key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

inline std::string where(const std::string& ctx, const char* key) {
  return "config: '" + (ctx.empty() ? std::string() : ctx + ".") + key + "'";
}

inline double as_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(what + " must be finite");
  return d;
}

inline double number(const json& j, const std::string& ctx, const char* key, double def) {
  const json* v = find(j, key);
  return v ? as_number(*v, where(ctx, key)) : def;
}

inline double number(const json& j, const std::string& ctx, const char* key) {
  const json* v = find(j, key);
  if (!v) throw ConfigError(where(ctx, key) + " is required");
  return as_number(*v, where(ctx, key));
}

inline std::uint64_t count(const json& j, const std::string& ctx, const char* key,
                           std::uint64_t def) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
    throw ConfigError(where(ctx, key) + " must be a nonnegative integer");
  return v->get<std::uint64_t>();
}

inline bool flag(const json& j, const std::string& ctx, const char* key, bool def) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_boolean()) throw ConfigError(where(ctx, key) + " must be true or false");
  return v->get<bool>();
}

inline std::string text(const json& j, const std::string& ctx, const char* key,
                        const std::string& def) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_string()) throw ConfigError(where(ctx, key) + " must be a string");
  return v->get<std::string>();
}

inline std::vector<double> numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_number(e, what));
  return out;
}

inline Eigen::VectorXd vector(const json& v, const std::string& what) {
  const auto xs = numbers(v, what);
  return Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline Eigen::MatrixXd matrix(const json& v, const std::string& what) {
  if (!v.is_array() || v.empty()) throw ConfigError(what + " must be a nonempty array of rows");
  const std::size_t cols = numbers(v[0], what).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const auto row = numbers(v[r], what);
    if (row.size() != cols) throw ConfigError(what + " has rows of different lengths");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return m;
}

inline scenarios::Cell cell(const json& v, const std::string& what) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw ConfigError(what + " must be an [x, y] pair of integers");
  return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct MonteCarloSettings {
  std::uint64_t seed = 1;
  std::size_t samples = 0;  // 0: skip
};

struct RunConfig {
  std::string kind;  // toy | finite | grid | edl | smpc
  json scenario = json::object();
  fs::path base_dir;  // relative map paths resolve against this
  MixedSolveConfig solver;
  MonteCarloSettings monte_carlo;
  json sweep = json::object();
};

/// Command-line settings that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_lambda;
  std::optional<double> tol_risk;
};

inline RunConfig parse_config(const json& j, fs::path base_dir, const Overrides& ov = {}) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  const json* version = find(j, "schema_version");
  if (!version || !version->is_number_integer())
    throw ConfigError("config: 'schema_version' is required");
  if (version->get<int>() != kSchemaVersion)
    throw ConfigError("config: unsupported schema_version " + version->dump() + " (expected " +
                      std::to_string(kSchemaVersion) + ")");

  RunConfig cfg;
  cfg.base_dir = std::move(base_dir);
  cfg.kind = text(j, "", "kind", "");
  if (cfg.kind != "toy" && cfg.kind != "finite" && cfg.kind != "grid" && cfg.kind != "edl" &&
      cfg.kind != "smpc")
    throw ConfigError("config: 'kind' must be one of toy, finite, grid, edl, smpc");
  if (const json* s = find(j, "scenario")) {
    if (!s->is_object()) throw ConfigError("config: 'scenario' must be an object");
    cfg.scenario = *s;
  }

  const json solver = find(j, "solver") ? j.at("solver") : json::object();
  auto& sc = cfg.solver.scalar;
  sc.lambda_max = number(solver, "solver", "lambda_max", sc.lambda_max);
  sc.tol_lambda = number(solver, "solver", "tol_lambda", sc.tol_lambda);
  sc.tol_risk = number(solver, "solver", "tol_risk", sc.tol_risk);
  sc.max_iter = count(solver, "solver", "max_iter", sc.max_iter);
  sc.breakpoint_steps = flag(solver, "solver", "breakpoint_steps", sc.breakpoint_steps);
  auto& sg = cfg.solver.subgradient;
  sg.lambda_max = sc.lambda_max;
  sg.alpha0 = number(solver, "solver", "alpha0", sg.alpha0);
  sg.max_iter = count(solver, "solver", "subgradient_iterations", sg.max_iter);
  cfg.solver.recovery_tol = number(solver, "solver", "recovery_tol", cfg.solver.recovery_tol);
  if (ov.tol_lambda) sc.tol_lambda = *ov.tol_lambda;
  if (ov.tol_risk) sc.tol_risk = *ov.tol_risk;
  if (!(sc.lambda_max > 0.0)) throw ConfigError("config: 'solver.lambda_max' must be positive");
  if (!(sc.tol_lambda > 0.0)) throw ConfigError("config: 'solver.tol_lambda' must be positive");
  if (!(sc.tol_risk >= 0.0)) throw ConfigError("config: 'solver.tol_risk' must be nonnegative");

  const json mc = find(j, "monte_carlo") ? j.at("monte_carlo") : json::object();
  const bool has_dynamics = cfg.kind == "grid" || cfg.kind == "edl" || cfg.kind == "smpc";
  cfg.monte_carlo.seed = count(mc, "monte_carlo", "seed", 1);
  cfg.monte_carlo.samples = count(mc, "monte_carlo", "samples", has_dynamics ? 100000 : 0);
  if (ov.seed) cfg.monte_carlo.seed = *ov.seed;

  if (const json* s = find(j, "sweep")) {
    if (!s->is_object()) throw ConfigError("config: 'sweep' must be an object");
    cfg.sweep = *s;
  }
  return cfg;
}

inline RunConfig load_config(const fs::path& path, const Overrides& ov = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path(), ov);
}

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

using FiniteProblem = scenarios::FiniteSetProblem;

struct MdpProblem {
  std::shared_ptr<const scenarios::GridScenario> grid;
  std::shared_ptr<const scenarios::EdlScenario> edl;
  Bounds bounds;

  const ccmdp::Mdp& mdp() const { return grid ? grid->mdp : edl->mdp; }
};

struct SmpcProblem {
  smpc::SmpcModel model;
  smpc::PwlCdf pwl;
  milp::MilpConfig milp;
  Bounds bounds;
};

using Problem = std::variant<FiniteProblem, MdpProblem, SmpcProblem>;

namespace detail {

inline scenarios::GridMap map_from(const json& s, const std::string& ctx, const fs::path& base) {
  if (const json* path = find(s, "map")) {
    if (!path->is_string()) throw ConfigError(where(ctx, "map") + " must be a file path");
    const fs::path p = fs::path(path->get<std::string>());
    return scenarios::load_grid_map((p.is_absolute() ? p : base / p).string());
  }
  if (const json* syn = find(s, "synthetic")) {
    const std::string c = ctx + ".synthetic";
    return scenarios::synthetic_hazard_map(
        static_cast<int>(count(*syn, c, "width", 40)), static_cast<int>(count(*syn, c, "height", 40)),
        static_cast<int>(count(*syn, c, "blobs", 14)), number(*syn, c, "min_radius", 1.5),
        number(*syn, c, "max_radius", 4.5), count(*syn, c, "seed", 1));
  }
  return scenarios::GridMap(static_cast<int>(count(s, ctx, "width", 0)),
                            static_cast<int>(count(s, ctx, "height", 0)));
}

inline bool has_map(const json& s) {
  return find(s, "map") || find(s, "synthetic") || find(s, "width") || find(s, "height");
}

inline FiniteProblem finite_problem(const RunConfig& cfg) {
  const json& s = cfg.scenario;
  if (cfg.kind == "toy") {
    auto p = scenarios::toy_problem();
    if (find(s, "risk_bound")) p.bounds = Bounds{number(s, "scenario", "risk_bound")};
    return p;
  }
  const json* pts = find(s, "points");
  if (!pts || !pts->is_array() || pts->empty())
    throw ConfigError("config: 'scenario.points' must be a nonempty array of [c0, c1, ...]");
  std::vector<CostVector> points;
  for (const auto& p : *pts) {
    const auto xs = numbers(p, "config: 'scenario.points' entry");
    if (xs.size() < 2) throw ConfigError("config: each point needs c0 and at least one constraint");
    points.emplace_back(xs[0], std::vector<double>(xs.begin() + 1, xs.end()));
  }
  Bounds bounds;
  if (const json* b = find(s, "bounds")) bounds = Bounds(numbers(*b, "config: 'scenario.bounds'"));
  else bounds = Bounds{number(s, "scenario", "risk_bound")};
  if (bounds.k() != points.front().k())
    throw ConfigError("config: 'scenario.bounds' length differs from the point dimension");
  return {scenarios::FiniteSetOracle(std::move(points)), std::move(bounds)};
}

inline MdpProblem grid_problem(const RunConfig& cfg) {
  const json& s = cfg.scenario;
  const std::string preset = text(s, "scenario", "preset", "");
  scenarios::GridParams p;
  if (preset == "default") p = scenarios::default_grid_params();
  else if (!preset.empty()) throw ConfigError("config: unknown grid preset '" + preset + "'");
  if (has_map(s)) p.map = map_from(s, "scenario", cfg.base_dir);
  else if (preset.empty()) throw ConfigError("config: grid scenario needs 'map' or 'width'/'height'");
  if (const json* obs = find(s, "obstacles")) {
    if (!obs->is_array()) throw ConfigError("config: 'scenario.obstacles' must be an array");
    for (const auto& r : *obs) {
      const auto xs = numbers(r, "config: 'scenario.obstacles' entry");
      if (xs.size() != 4) throw ConfigError("config: obstacle rectangles are [x0, y0, x1, y1]");
      p.map.block_rect(static_cast<int>(xs[0]), static_cast<int>(xs[1]), static_cast<int>(xs[2]),
                       static_cast<int>(xs[3]));
    }
  }
  p.horizon = count(s, "scenario", "horizon", p.horizon);
  if (const json* c = find(s, "start")) p.start = cell(*c, "config: 'scenario.start'");
  if (const json* c = find(s, "goal")) p.goal = cell(*c, "config: 'scenario.goal'");
  p.max_step = static_cast<int>(count(s, "scenario", "max_step", static_cast<std::uint64_t>(p.max_step)));
  p.sigma = number(s, "scenario", "sigma", p.sigma);
  p.risk_bound = number(s, "scenario", "risk_bound", p.risk_bound);
  p.miss_penalty = number(s, "scenario", "miss_penalty", p.miss_penalty);
  Bounds bounds{p.risk_bound};
  auto sc = std::make_shared<const scenarios::GridScenario>(scenarios::grid_scenario(std::move(p)));
  return {std::move(sc), nullptr, std::move(bounds)};
}

inline MdpProblem edl_problem(const RunConfig& cfg) {
  const json& s = cfg.scenario;
  const std::string preset = text(s, "scenario", "preset", "");
  scenarios::EdlParams p;
  if (preset == "default") p = scenarios::default_edl_params(count(s, "scenario", "map_seed", 1));
  else if (!preset.empty()) throw ConfigError("config: unknown edl preset '" + preset + "'");
  if (has_map(s)) p.hazard = map_from(s, "scenario", cfg.base_dir);
  else if (preset.empty()) throw ConfigError("config: edl scenario needs 'map' or 'synthetic'");
  if (const json* c = find(s, "initial")) p.initial = cell(*c, "config: 'scenario.initial'");
  if (const json* t = find(s, "targets")) {
    if (!t->is_array() || t->size() != 2)
      throw ConfigError("config: 'scenario.targets' must hold two [x, y] cells");
    p.targets = {cell((*t)[0], "config: 'scenario.targets'"), cell((*t)[1], "config: 'scenario.targets'")};
  }
  if (const json* st = find(s, "stages")) {
    if (!st->is_array()) throw ConfigError("config: 'scenario.stages' must be an array");
    p.stages.clear();
    for (const auto& e : *st) {
      scenarios::EdlStage stage;
      stage.radius = number(e, "scenario.stages", "radius");
      if (const json* cov = find(e, "covariance")) {
        stage.sigma = matrix(*cov, "config: 'scenario.stages.covariance'");
      } else {
        const double sd = number(e, "scenario.stages", "sigma", 0.0);
        stage.sigma = Eigen::Matrix2d::Identity() * sd * sd;
      }
      if (const json* d = find(e, "shape")) stage.D = matrix(*d, "config: 'scenario.stages.shape'");
      if (stage.sigma.rows() != 2 || stage.sigma.cols() != 2 || stage.D.rows() != 2 ||
          stage.D.cols() != 2)
        throw ConfigError("config: stage matrices must be 2x2");
      p.stages.push_back(stage);
    }
  }
  p.cell_size = number(s, "scenario", "cell_size", p.cell_size);
  p.risk_bound = number(s, "scenario", "risk_bound", p.risk_bound);
  Bounds bounds{p.risk_bound};
  auto sc = std::make_shared<const scenarios::EdlScenario>(scenarios::edl_scenario(std::move(p)));
  return {nullptr, std::move(sc), std::move(bounds)};
}

inline SmpcProblem smpc_problem(const RunConfig& cfg) {
  const json& s = cfg.scenario;
  const std::string ctx = "scenario";
  const std::string preset = text(s, ctx, "preset", "");
  smpc::SmpcModel m;
  std::vector<double> breakpoints = smpc::uniform_breakpoints();
  if (preset == "corridor") {
    auto inst = scenarios::corridor_smpc(count(s, ctx, "horizon", 8), number(s, ctx, "half_gap", 0.4),
                                         number(s, ctx, "reach", 1.2));
    m = std::move(inst.model);
    breakpoints = std::move(inst.breakpoints);
  } else if (!preset.empty()) {
    throw ConfigError("config: unknown smpc preset '" + preset + "'");
  }
  if (const json* di = find(s, "double_integrator"))
    m = scenarios::double_integrator(number(*di, ctx + ".double_integrator", "dt", 1.0),
                                     number(*di, ctx + ".double_integrator", "sigma_w", 0.1));
  if (const json* v = find(s, "A")) m.A = matrix(*v, "config: 'scenario.A'");
  if (const json* v = find(s, "B")) m.B = matrix(*v, "config: 'scenario.B'");
  if (const json* v = find(s, "sigma_w")) m.sigma_w = matrix(*v, "config: 'scenario.sigma_w'");
  if (m.A.size() == 0 || m.B.size() == 0 || m.sigma_w.size() == 0)
    throw ConfigError("config: smpc scenario needs dynamics (preset, double_integrator or A/B/sigma_w)");
  const auto nx = m.A.rows(), nu = m.B.cols();
  if (const json* v = find(s, "u_max")) {
    const double u = as_number(*v, "config: 'scenario.u_max'");
    m.P = Eigen::MatrixXd(2 * nu, nu);
    m.P << Eigen::MatrixXd::Identity(nu, nu), -Eigen::MatrixXd::Identity(nu, nu);
    m.q = Eigen::VectorXd::Constant(2 * nu, u);
  }
  if (const json* v = find(s, "P")) m.P = matrix(*v, "config: 'scenario.P'");
  if (const json* v = find(s, "q")) m.q = vector(*v, "config: 'scenario.q'");
  if (m.P.size() == 0) {
    m.P = Eigen::MatrixXd::Zero(0, nu);
    m.q = Eigen::VectorXd::Zero(0);
  }
  if (const json* v = find(s, "x0")) m.x0 = vector(*v, "config: 'scenario.x0'");
  if (m.x0.size() == 0) m.x0 = Eigen::VectorXd::Zero(nx);
  if (const json* v = find(s, "sigma0")) m.sigma0 = matrix(*v, "config: 'scenario.sigma0'");
  if (const json* v = find(s, "terminal")) m.terminal = vector(*v, "config: 'scenario.terminal'");
  if (const json* v = find(s, "state_box")) {
    smpc::StateBox box;
    box.lower = vector(v->value("lower", json()), "config: 'scenario.state_box.lower'");
    box.upper = vector(v->value("upper", json()), "config: 'scenario.state_box.upper'");
    m.state_box = box;
  }
  if (const json* obs = find(s, "obstacles")) {
    if (!obs->is_array()) throw ConfigError("config: 'scenario.obstacles' must be an array");
    m.obstacles.clear();
    for (const auto& o : *obs) {
      if (const json* b = find(o, "box")) {
        const auto xs = numbers(*b, "config: obstacle 'box'");
        if (xs.size() != 4) throw ConfigError("config: obstacle 'box' is [x0, x1, y0, y1]");
        if (nx < 2) throw ConfigError("config: box obstacles need at least two state coordinates");
        m.obstacles.push_back(scenarios::box_obstacle(xs[0], xs[1], xs[2], xs[3], static_cast<std::size_t>(nx)));
      } else {
        smpc::Obstacle ob;
        ob.H = matrix(o.value("H", json()), "config: obstacle 'H'");
        ob.g = vector(o.value("g", json()), "config: obstacle 'g'");
        m.obstacles.push_back(std::move(ob));
      }
    }
  }
  m.horizon = count(s, ctx, "horizon", m.horizon);
  m.risk_bound = number(s, ctx, "risk_bound", m.risk_bound);
  if (const json* v = find(s, "breakpoints")) breakpoints = numbers(*v, "config: 'scenario.breakpoints'");
  m.validate();

  milp::MilpConfig mc;
  const json milp_cfg = find(s, "milp") ? s.at("milp") : json::object();
  mc.abs_gap = number(milp_cfg, ctx + ".milp", "abs_gap", mc.abs_gap);
  mc.max_nodes = count(milp_cfg, ctx + ".milp", "max_nodes", mc.max_nodes);
  Bounds bounds{m.risk_bound};
  return {std::move(m), smpc::build_pwl_cdf(std::move(breakpoints)), mc, std::move(bounds)};
}

}  // namespace detail

inline Problem build_problem(const RunConfig& cfg) {
  if (cfg.kind == "toy" || cfg.kind == "finite") return detail::finite_problem(cfg);
  if (cfg.kind == "grid") return detail::grid_problem(cfg);
  if (cfg.kind == "edl") return detail::edl_problem(cfg);
  return detail::smpc_problem(cfg);
}

// ---------------------------------------------------------------------------
// Query tracing
// ---------------------------------------------------------------------------

struct TraceEntry {
  std::vector<double> lambda;
  CostVector cost;
  double lagrangian = 0.0;
};

/// Forwards to an oracle and records every answer.
template <LagrangianOracle O>
class TracingOracle {
 public:
  using policy_type = typename O::policy_type;

  TracingOracle(O& inner, Bounds v) : inner_(&inner), v_(std::move(v)) {}

  std::size_t k_constraints() const { return inner_->k_constraints(); }

  PureCandidate<policy_type> query(const DualVector& lambda) {
    auto c = inner_->query(lambda);
    record(lambda, c.cost);
    return c;
  }

  std::vector<PureCandidate<policy_type>> query_all(const DualVector& lambda)
    requires EnumeratingOracle<O>
  {
    auto all = inner_->query_all(lambda);
    for (const auto& c : all) record(lambda, c.cost);
    return all;
  }

  CostVector evaluate(const policy_type& p) const
    requires EvaluatingOracle<O>
  {
    return inner_->evaluate(p);
  }

  const std::vector<TraceEntry>& trace() const noexcept { return trace_; }

 private:
  void record(const DualVector& lambda, const CostVector& c) {
    trace_.push_back({lambda.values(), c, lagrangian_value(c, lambda, v_)});
  }

  O* inner_;
  Bounds v_;
  std::vector<TraceEntry> trace_;
};

inline void write_trace_csv(std::ostream& os, const std::vector<TraceEntry>& trace, std::size_t k) {
  os << "iteration";
  if (k == 1) {
    os << ",lambda,c0,c1";
  } else {
    for (std::size_t i = 1; i <= k; ++i) os << ",lambda" << i;
    os << ",c0";
    for (std::size_t i = 1; i <= k; ++i) os << ",c" << i;
  }
  os << ",lagrangian_value\n";
  for (std::size_t it = 0; it < trace.size(); ++it) {
    const auto& e = trace[it];
    os << it;
    for (double l : e.lambda) os << ',' << fmt_num(l);
    os << ',' << fmt_num(e.cost.c0);
    for (double c : e.cost.rest) os << ',' << fmt_num(c);
    os << ',' << fmt_num(e.lagrangian) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

inline void write_policy_csv(std::ostream& os, const ccmdp::Policy& p) {
  os << "step,state,action\n";
  for (std::size_t k = 0; k < p.action.size(); ++k)
    for (std::size_t x = 0; x < p.action[k].size(); ++x)
      if (p.action[k][x] >= 0) os << k << ',' << x << ',' << p.action[k][x] << '\n';
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(what + ": bad integer '" + s + "'");
  return v;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(what + ": bad number '" + s + "'");
  return v;
}

inline std::ifstream open_input(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot open " + p.string());
  return f;
}

}  // namespace detail

inline ccmdp::Policy read_policy_csv(std::istream& is, const ccmdp::Mdp& mdp, const std::string& name) {
  ccmdp::Policy p;
  p.action.resize(mdp.horizon());
  for (std::size_t k = 0; k < mdp.horizon(); ++k) p.action[k].assign(mdp.num_states(k), -1);
  std::string line;
  if (!std::getline(is, line) || line != "step,state,action")
    throw ConfigError(name + ": expected header 'step,state,action'");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw ConfigError(name + ": expected three columns");
    const auto k = detail::parse_int(f[0], name), x = detail::parse_int(f[1], name),
               a = detail::parse_int(f[2], name);
    if (k < 0 || static_cast<std::size_t>(k) >= mdp.horizon() || x < 0 ||
        static_cast<std::size_t>(x) >= mdp.num_states(static_cast<std::size_t>(k)) || a < 0 ||
        static_cast<std::size_t>(a) >= mdp.num_actions(static_cast<std::size_t>(k), static_cast<std::size_t>(x)))
      throw ConfigError(name + ": entry out of range: " + line);
    p.action[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] = static_cast<std::int32_t>(a);
  }
  return p;
}

/// Controls of a plan written by smpc::write_plan_csv.
inline std::vector<Eigen::VectorXd> read_plan_controls(std::istream& is, std::size_t horizon,
                                                       const std::string& name) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError(name + ": empty plan file");
  const auto header = detail::split_csv(line);
  std::vector<std::size_t> ucols;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (!header[c].empty() && header[c][0] == 'u') ucols.push_back(c);
  std::vector<Eigen::VectorXd> u;
  while (std::getline(is, line) && u.size() < horizon) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != header.size()) throw ConfigError(name + ": ragged row");
    Eigen::VectorXd uk(static_cast<Eigen::Index>(ucols.size()));
    for (std::size_t d = 0; d < ucols.size(); ++d)
      uk(static_cast<Eigen::Index>(d)) = detail::parse_double(f[ucols[d]], name);
    u.push_back(std::move(uk));
  }
  if (u.size() != horizon) throw ConfigError(name + ": plan is shorter than the horizon");
  return u;
}

// ---------------------------------------------------------------------------
// Per-backend hooks used by the drivers
// ---------------------------------------------------------------------------

namespace detail {

inline json risk_json(const CostVector& c) { return json(c.rest); }

// Oracles.
inline ccmdp::MdpOracle make_oracle(const MdpProblem& p) { return ccmdp::MdpOracle(p.mdp()); }
inline smpc::SmpcOracle make_oracle(const SmpcProblem& p) {
  return smpc::SmpcOracle(p.model, p.pwl, p.milp);
}

// Policy ids.
inline std::string policy_id(const FiniteProblem&, const std::size_t& index, const std::string&) {
  return "point_" + std::to_string(index);
}
inline std::string policy_id(const MdpProblem&, const ccmdp::Policy&, const std::string& tag) {
  return "policy_" + tag;
}
inline std::string policy_id(const SmpcProblem&, const smpc::ControlPlan&, const std::string& tag) {
  return "plan_" + tag;
}

// Writes the policy file (if any) and returns the extra report fields.
inline json export_policy(const FiniteProblem&, const std::size_t& index, const std::string&,
                          const fs::path&) {
  json j;
  j["point_index"] = index;
  return j;
}

inline json export_policy(const MdpProblem& p, const ccmdp::Policy& policy, const std::string& id,
                          const fs::path& dir) {
  json j;
  const std::string file = id + ".csv";
  std::ofstream f(dir / file);
  write_policy_csv(f, policy);
  j["file"] = file;
  if (p.grid) {
    json path = json::array();
    for (const auto c : p.grid->nominal_path(policy)) path.push_back({c.x, c.y});
    j["nominal_path"] = std::move(path);
  } else {
    json aims = json::array();
    for (const auto c : p.edl->nominal_aims(policy)) aims.push_back({c.x, c.y});
    j["nominal_aims"] = std::move(aims);
  }
  return j;
}

inline json export_policy(const SmpcProblem&, const smpc::ControlPlan& plan, const std::string& id,
                          const fs::path& dir) {
  json j;
  const std::string file = id + ".csv";
  std::ofstream f(dir / file);
  smpc::write_plan_csv(f, plan);
  j["file"] = file;
  return j;
}

inline std::size_t import_policy(const FiniteProblem& p, const json& comp, const fs::path&) {
  const json* idx = find(comp, "point_index");
  if (!idx || !idx->is_number_unsigned() || idx->get<std::size_t>() >= p.oracle.points().size())
    throw ConfigError("report: component lacks a valid 'point_index'");
  return idx->get<std::size_t>();
}

inline ccmdp::Policy import_policy(const MdpProblem& p, const json& comp, const fs::path& dir) {
  const std::string file = text(comp, "report component", "file", "");
  if (file.empty()) throw ConfigError("report: component lacks a policy 'file'");
  auto f = open_input(dir / file);
  return read_policy_csv(f, p.mdp(), file);
}

inline smpc::ControlPlan import_policy(const SmpcProblem& p, const json& comp, const fs::path& dir) {
  const std::string file = text(comp, "report component", "file", "");
  if (file.empty()) throw ConfigError("report: component lacks a plan 'file'");
  auto f = open_input(dir / file);
  return smpc::evaluate_plan(p.model, p.pwl, read_plan_controls(f, p.model.horizon, file));
}

// Output gates beyond the common ones.
inline void check_solution(const FiniteProblem&, const MixedSolution<std::size_t>&) {}
inline void check_solution(const MdpProblem&, const MixedSolution<ccmdp::Policy>&) {}
inline void check_solution(const SmpcProblem& p, const MixedSolution<smpc::ControlPlan>& sol) {
  for (std::size_t j = 0; j < sol.components.size(); ++j) {
    const auto inside = smpc::mean_inside_obstacles(p.model, sol.components[j].candidate.policy);
    if (!inside.empty())
      throw RejectedSolution("SMPC: the mean trajectory of mixture component " + std::to_string(j) +
                             " enters obstacle " + std::to_string(inside.front().first) +
                             " at step " + std::to_string(inside.front().second) +
                             "; the Gaussian risk bound does not hold there");
  }
}

// Monte Carlo summaries.
inline json monte_carlo(const FiniteProblem&, const MixedSolution<std::size_t>&,
                        const MonteCarloSettings&, const std::vector<std::string>&) {
  return json();  // no dynamics to sample
}

inline json monte_carlo(const MdpProblem& p, const MixedSolution<ccmdp::Policy>& sol,
                        const MonteCarloSettings& mc, const std::vector<std::string>&) {
  if (mc.samples == 0) return json();
  const auto s = ccmdp::simulate(p.mdp(), sol, mc.seed, mc.samples);
  json j;
  j["seed"] = mc.seed;
  j["rollouts"] = s.rollouts;
  j["empirical_cost_mean"] = s.empirical_cost_mean;
  j["cost_ci99_halfwidth"] = s.cost_ci_halfwidth;
  j["empirical_failure_rate"] = s.empirical_failure_rate;
  j["failure_ci99"] = {s.failure_ci.lo, s.failure_ci.hi};
  j["exact_risk_in_ci"] = s.failure_ci.contains(sol.aggregate.c1());
  return j;
}

inline json monte_carlo(const SmpcProblem& p, const MixedSolution<smpc::ControlPlan>& sol,
                        const MonteCarloSettings& mc, const std::vector<std::string>& ids) {
  if (mc.samples == 0) return json();
  json j;
  j["seed"] = mc.seed;
  j["samples_per_plan"] = mc.samples;
  json comps = json::array();
  double mixture = 0.0;
  bool conservative = true;
  for (std::size_t c = 0; c < sol.components.size(); ++c) {
    const auto& comp = sol.components[c];
    const auto est = smpc::estimate_risk_mc(p.model, comp.candidate.policy,
                                            stats::derive_seed(mc.seed, c), mc.samples);
    const double bound = comp.candidate.cost.c1();
    json e;
    e["policy_id"] = ids[c];
    e["violations"] = est.violations;
    e["rate"] = est.rate;
    e["ci99"] = {est.ci.lo, est.ci.hi};
    e["risk_bound"] = bound;
    e["bound_not_exceeded"] = est.ci.lo <= bound;
    conservative = conservative && est.ci.lo <= bound;
    mixture += comp.probability * est.rate;
    comps.push_back(std::move(e));
  }
  j["plans"] = std::move(comps);
  j["mixture_rate"] = mixture;
  j["conservative"] = conservative;
  return j;
}

inline json optimality_json(const OptimalityReport& r) {
  auto cond = [](bool pass, double residual) {
    json c;
    c["pass"] = pass;
    c["residual"] = residual;
    return c;
  };
  json j;
  j["a_minimizers"] = cond(r.a_minimizers, r.residual_a);
  j["b_slackness"] = cond(r.b_slackness, r.residual_b);
  j["c_sum_to_one"] = cond(r.c_sum_to_one, r.residual_c);
  j["d_nonnegative"] = cond(r.d_nonnegative, r.residual_d);
  j["e_feasible"] = cond(r.e_feasible, r.residual_e);
  j["f_consistent"] = cond(r.f_consistent, r.residual_f);
  j["overall"] = r.overall;
  return j;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

inline constexpr double kSanityTol = 1e-9;

namespace detail {

template <class P, class O>
json solve_with(P& problem, O& oracle, const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  const Bounds& v = problem.bounds;
  TracingOracle<O> tracer(oracle, v);
  auto res = solve_mixed(tracer, v, cfg.solver);
  auto& mixed = res.mixed;

  check_solution(problem, mixed);
  if (res.best_pure &&
      mixed.aggregate.c0 > res.best_pure->cost.c0 + kSanityTol * (1.0 + std::abs(res.best_pure->cost.c0)))
    throw RejectedSolution("sanity gate: mixed cost " + fmt_num(mixed.aggregate.c0) +
                           " exceeds the best pure cost " + fmt_num(res.best_pure->cost.c0));
  const auto opt = check_optimality(mixed, v, oracle);

  {
    std::ofstream f(dir / "dual_trace.csv");
    write_trace_csv(f, tracer.trace(), v.k());
  }

  std::vector<std::string> ids;
  json comps = json::array();
  for (std::size_t j = 0; j < mixed.components.size(); ++j) {
    const auto& c = mixed.components[j];
    ids.push_back(policy_id(problem, c.candidate.policy, std::to_string(j)));
    json e;
    e["policy_id"] = ids.back();
    e["probability"] = c.probability;
    e["cost"] = c.candidate.cost.c0;
    e["risk"] = risk_json(c.candidate.cost);
    e.update(export_policy(problem, c.candidate.policy, ids.back(), dir));
    comps.push_back(std::move(e));
  }

  json pure;
  if (res.best_pure) {
    std::string id;
    for (std::size_t j = 0; j < mixed.components.size(); ++j)
      if (mixed.components[j].candidate.policy == res.best_pure->policy) id = ids[j];
    json extra;
    if (id.empty()) {
      id = policy_id(problem, res.best_pure->policy, "pure");
      extra = export_policy(problem, res.best_pure->policy, id, dir);
    }
    pure["policy_id"] = id;
    pure["cost"] = res.best_pure->cost.c0;
    pure["risk"] = risk_json(res.best_pure->cost);
    if (!extra.is_null()) pure.update(extra);
  }

  json report;
  report["schema_version"] = kSchemaVersion;
  report["kind"] = cfg.kind;
  report["status"] = mixed.components.size() > 1 ? "mixed" : "pure";
  report["converged"] = res.converged;
  report["bounds"] = v.values();
  report["lambda"] = mixed.dual.values();
  report["q_star"] = res.q_star;
  report["gap_estimate"] = mixed.gap_estimate;
  report["oracle_calls"] = tracer.trace().size();
  report["pure"] = pure;
  json m;
  m["components"] = std::move(comps);
  m["aggregate"] = {{"cost", mixed.aggregate.c0}, {"risk", risk_json(mixed.aggregate)}};
  report["mixed"] = std::move(m);
  report["optimality"] = optimality_json(opt);
  report["monte_carlo"] = monte_carlo(problem, mixed, cfg.monte_carlo, ids);
  report["dual_trace"] = "dual_trace.csv";

  log << "lambda* =";
  for (double l : mixed.dual.values()) log << ' ' << fmt_num(l);
  log << "\n";
  for (std::size_t j = 0; j < mixed.components.size(); ++j) {
    const auto& c = mixed.components[j];
    log << "  " << ids[j] << "  p=" << fmt_num(c.probability) << "  cost=" << fmt_num(c.candidate.cost.c0)
        << "  risk=" << fmt_num(c.candidate.cost.c1()) << "\n";
  }
  log << "aggregate cost=" << fmt_num(mixed.aggregate.c0) << " risk=" << fmt_num(mixed.aggregate.c1())
      << (opt.overall ? "  (optimality conditions hold)" : "  (optimality check FAILED)") << "\n";
  return report;
}

template <class P, class O>
json validate_with(P& problem, O& oracle, const RunConfig& cfg, const json& report, const fs::path& dir) {
  using Policy = typename O::policy_type;
  const Bounds& v = problem.bounds;
  if (text(report, "report", "kind", "") != cfg.kind)
    throw ConfigError("report: kind does not match the config");
  const json* lam = find(report, "lambda");
  const json* mixed_j = find(report, "mixed");
  if (!lam || !mixed_j || !find(*mixed_j, "components") || !find(*mixed_j, "aggregate"))
    throw ConfigError("report: missing 'lambda' or 'mixed'");

  MixedSolution<Policy> sol;
  sol.dual = DualVector(numbers(*lam, "report: 'lambda'"));
  std::vector<std::string> ids;
  for (const auto& c : mixed_j->at("components")) {
    MixtureComponent<Policy> comp;
    comp.candidate.policy = import_policy(problem, c, dir);
    comp.candidate.cost = CostVector(number(c, "component", "cost"), numbers(c.value("risk", json()), "report: 'risk'"));
    comp.probability = number(c, "component", "probability");
    ids.push_back(text(c, "component", "policy_id", ""));
    sol.components.push_back(std::move(comp));
  }
  const json& agg = mixed_j->at("aggregate");
  sol.aggregate = CostVector(number(agg, "aggregate", "cost"), numbers(agg.value("risk", json()), "report: 'risk'"));
  if (sol.dual.k() != v.k() || sol.aggregate.k() != v.k())
    throw ConfigError("report: dimensions do not match the config");

  const auto opt = check_optimality(sol, v, oracle);
  const CostVector mixed_again = aggregate_of(sol.components);
  double drift = std::abs(mixed_again.c0 - sol.aggregate.c0) / (1.0 + std::abs(sol.aggregate.c0));
  for (std::size_t i = 0; i < v.k(); ++i)
    drift = std::max(drift, std::abs(mixed_again.rest[i] - sol.aggregate.rest[i]));
  const bool consistent = drift <= 1e-9;

  json out;
  out["schema_version"] = kSchemaVersion;
  out["kind"] = cfg.kind;
  out["optimality"] = optimality_json(opt);
  out["aggregate_consistent"] = consistent;
  out["monte_carlo"] = monte_carlo(problem, sol, cfg.monte_carlo, ids);
  out["passed"] = opt.overall && consistent;
  return out;
}

inline std::vector<double> sweep_grid(const RunConfig& cfg) {
  const json& s = cfg.sweep;
  if (const json* l = find(s, "lambdas")) {
    auto xs = numbers(*l, "config: 'sweep.lambdas'");
    for (double x : xs)
      if (x < 0.0) throw ConfigError("config: 'sweep.lambdas' must be nonnegative");
    return xs;
  }
  const double lo = number(s, "sweep", "lambda_min", 1e-2);
  const double hi = number(s, "sweep", "lambda_max", 1e6);
  const auto n = count(s, "sweep", "points", 33);
  const std::string spacing = text(s, "sweep", "spacing", "log");
  if (n < 2 || !(hi > lo) || lo < 0.0) throw ConfigError("config: sweep needs 0 <= lambda_min < lambda_max and points >= 2");
  std::vector<double> out{0.0};
  for (std::uint64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    if (spacing == "log") {
      if (!(lo > 0.0)) throw ConfigError("config: log sweep needs lambda_min > 0");
      out.push_back(lo * std::pow(hi / lo, t));
    } else if (spacing == "linear") {
      out.push_back(lo + (hi - lo) * t);
    } else {
      throw ConfigError("config: 'sweep.spacing' must be log or linear");
    }
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <class P, class O>
std::size_t sweep_with(P& problem, O& oracle, const RunConfig& cfg, const fs::path& dir) {
  const Bounds& v = problem.bounds;
  if (v.k() != 1) throw ConfigError("sweep: only single-constraint problems are supported");
  const auto grid = sweep_grid(cfg);
  std::ofstream f(dir / "sweep.csv");
  f << "lambda,c0,c1,lagrangian_value,subgradient\n";
  for (double l : grid) {
    const auto dv = DualVector::scalar(l);
    const auto c = oracle.query(dv);
    f << fmt_num(l) << ',' << fmt_num(c.cost.c0) << ',' << fmt_num(c.cost.c1()) << ','
      << fmt_num(lagrangian_value(c.cost, dv, v)) << ',' << fmt_num(c.cost.c1() - v[0]) << '\n';
  }
  return grid.size();
}

// Runs fn(problem, oracle) with the backend's oracle.
template <class Fn>
decltype(auto) with_oracle(Problem& problem, Fn&& fn) {
  return std::visit(
      [&](auto& p) -> decltype(auto) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FiniteProblem>) {
          return fn(p, p.oracle);
        } else {
          auto oracle = make_oracle(p);
          return fn(p, oracle);
        }
      },
      problem);
}

}  // namespace detail

/// Solves the configured problem and writes report.json, dual_trace.csv,
/// policy files and timing.json into `dir`. Returns the report.
inline json run_solve(const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  detail::ensure_dir(dir);
  Problem problem = build_problem(cfg);
  json report = detail::with_oracle(problem, [&](auto& p, auto& oracle) {
    return detail::solve_with(p, oracle, cfg, dir, log);
  });
  detail::write_json(dir / "report.json", report);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_json(dir / "timing.json", json{{"wall_time_s", wall}});
  return report;
}

/// Re-checks a saved report (and its policy files) in `dir` against the
/// config; writes validation.json.
inline json run_validate(const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  std::ifstream f(dir / "report.json");
  if (!f) throw ConfigError("validate: no report.json in " + dir.string());
  json report;
  try {
    report = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("validate: report.json is not valid JSON: ") + e.what());
  }
  Problem problem = build_problem(cfg);
  json out = detail::with_oracle(problem, [&](auto& p, auto& oracle) {
    return detail::validate_with(p, oracle, cfg, report, dir);
  });
  detail::write_json(dir / "validation.json", out);
  log << "optimality conditions: " << (out["optimality"]["overall"].get<bool>() ? "hold" : "FAIL")
      << "; aggregate: " << (out["aggregate_consistent"].get<bool>() ? "consistent" : "INCONSISTENT")
      << "\n";
  return out;
}

/// Queries the oracle over a lambda grid; writes sweep.csv. Returns the
/// number of grid points.
inline std::size_t run_sweep(const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  detail::ensure_dir(dir);
  Problem problem = build_problem(cfg);
  const auto n = detail::with_oracle(problem, [&](auto& p, auto& oracle) {
    return detail::sweep_with(p, oracle, cfg, dir);
  });
  log << "wrote " << n << " samples to " << (dir / "sweep.csv").string() << "\n";
  return n;
}

/// Entry point behind the mixedctrl executable.
inline int execute(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Mixed-strategy solver for chance-constrained control problems", "mixedctrl"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = ".";
  Overrides ov;
  auto common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON run config")->required();
    sub->add_option("--seed", ov.seed, "Monte Carlo seed (overrides the config)");
    sub->add_option("--tol-lambda", ov.tol_lambda, "bisection tolerance on lambda");
    sub->add_option("--tol-risk", ov.tol_risk, "stop when an endpoint risk is this close to V");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
  };
  auto* solve = app.add_subcommand("solve", "solve and write report.json, dual_trace.csv and policies");
  auto* validate = app.add_subcommand("validate", "re-check a saved report: optimality and Monte Carlo");
  auto* sweep = app.add_subcommand("sweep", "sample q(lambda) on a grid into sweep.csv");
  common(solve);
  common(validate);
  common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    const RunConfig cfg = load_config(config_path, ov);
    if (solve->parsed()) {
      run_solve(cfg, out_dir, out);
      return kExitOk;
    }
    if (validate->parsed()) return run_validate(cfg, out_dir, out)["passed"].get<bool>() ? kExitOk : kExitFailure;
    run_sweep(cfg, out_dir, out);
    return kExitOk;
  } catch (const Infeasible& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InvalidInput& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace mixedctrl::cli
