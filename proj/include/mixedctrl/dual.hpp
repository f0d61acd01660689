// Dual solvers for the pure-strategy problem and recovery of the optimal
// mixed strategy from the dual solution.
//
// K = 1: the dual function q(lambda) is concave and c1(lambda) - V is a
// supergradient, so lambda* is a root of the monotone map lambda -> c1 - V.
// Bisection (interleaved with queries where the endpoint Lagrangians cross)
// keeps two endpoint candidates, one on each side of V; at
// convergence both minimize the Lagrangian at lambda* and mixing them so the
// aggregate risk is exactly V is optimal.
//
// K > 1: projected subgradient ascent collects candidates; the candidate
// pool is then closed by re-querying the oracle at the maximizer of the
// pool's piecewise-linear dual model until the model is exact there. The
// mixture is a vertex of a small LP over the pool.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mixedctrl/core.hpp"
#include "mixedctrl/lp.hpp"

namespace mixedctrl {

/// The candidate pool cannot be mixed to meet the bounds. Usually means the
/// pool misses members of C(lambda*).
struct MixtureNotRecoverable : Error {
  MixtureNotRecoverable(const std::string& what, std::vector<CostVector> pool_costs)
      : Error(what), pool(std::move(pool_costs)) {}
  std::vector<CostVector> pool;
};

/// Backends that can list every minimizer tied at lambda.
template <class O>
concept EnumeratingOracle = LagrangianOracle<O> &&
    requires(O& oracle, const DualVector& lambda) {
      { oracle.query_all(lambda) } -> std::same_as<std::vector<candidate_t<O>>>;
    };

// ---------------------------------------------------------------------------
// K = 1
// ---------------------------------------------------------------------------

struct ScalarDualConfig {
  double lambda_max = 1e9;
  double tol_lambda = 1e-6;
  double tol_risk = 1e-10;
  double monotone_tol = 1e-9;
  std::size_t max_iter = 200;
  /// Alternate bisection with a query at the crossing point of the two
  /// endpoint Lagrangian lines; when nothing beats them there, that point
  /// is the exact multiplier.
  bool breakpoint_steps = true;
  double breakpoint_tol = 1e-9;  // relative, on the Lagrangian value
};

template <class Policy>
struct ScalarDualResult {
  double lambda_star = 0.0;
  PureCandidate<Policy> lower;  // c1 >= V
  PureCandidate<Policy> upper;  // c1 <= V
  double q_star = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

template <LagrangianOracle O>
ScalarDualResult<typename O::policy_type> solve_dual_scalar(O& oracle, const Bounds& v,
                                                            const ScalarDualConfig& cfg = {}) {
  if (oracle.k_constraints() != 1 || v.k() != 1)
    throw InvalidInput("solve_dual_scalar: requires exactly one constraint");
  if (!(cfg.lambda_max > 0.0)) throw InvalidInput("solve_dual_scalar: lambda_max must be positive");

  const double bound = v[0];
  auto query = [&](double lambda) {
    auto c = oracle.query(DualVector::scalar(lambda));
    if (c.cost.k() != 1) throw InvalidInput("solve_dual_scalar: oracle returned K != 1");
    return c;
  };
  auto lagr = [&](const auto& cand, double lambda) {
    return cand.cost.c0 + lambda * (cand.cost.c1() - bound);
  };

  ScalarDualResult<typename O::policy_type> out;
  auto at_zero = query(0.0);
  out.iterations = 1;
  if (at_zero.cost.c1() <= bound) {
    out.lambda_star = 0.0;
    out.q_star = lagr(at_zero, 0.0);
    out.lower = at_zero;
    out.upper = std::move(at_zero);
    out.converged = true;
    return out;
  }

  // Bracket: c1(lo) > V >= c1(hi).
  double lo = 0.0;
  auto lo_cand = std::move(at_zero);
  double hi = std::min(1.0, cfg.lambda_max);
  auto hi_cand = query(hi);
  ++out.iterations;
  while (hi_cand.cost.c1() > bound) {
    if (hi_cand.cost.c1() > lo_cand.cost.c1() + cfg.monotone_tol)
      throw NonMonotoneOracle("solve_dual_scalar: risk increased with lambda during bracketing");
    if (hi >= cfg.lambda_max)
      throw Infeasible("no policy meets the risk bound for lambda up to lambda_max");
    lo = hi;
    lo_cand = std::move(hi_cand);
    hi = std::min(2.0 * hi, cfg.lambda_max);
    hi_cand = query(hi);
    ++out.iterations;
  }

  auto finish = [&](bool converged, std::optional<double> at = std::nullopt) {
    out.lambda_star = at ? *at : 0.5 * (lo + hi);
    out.q_star = std::min(lagr(lo_cand, out.lambda_star), lagr(hi_cand, out.lambda_star));
    out.lower = std::move(lo_cand);
    out.upper = std::move(hi_cand);
    out.converged = converged;
    return out;
  };

  // Places a new candidate queried at lambda into the bracket. Returns true
  // on an exact hit of the bound.
  auto absorb = [&](double lambda, auto cand) {
    const double r = cand.cost.c1();
    if (r > lo_cand.cost.c1() + cfg.monotone_tol || r < hi_cand.cost.c1() - cfg.monotone_tol)
      throw NonMonotoneOracle("solve_dual_scalar: risk is not monotone in lambda at lambda=" +
                              std::to_string(lambda));
    if (r > bound) {
      lo = lambda;
      lo_cand = std::move(cand);
    } else if (r < bound) {
      hi = lambda;
      hi_cand = std::move(cand);
    } else {
      lo = hi = lambda;
      lo_cand = cand;
      hi_cand = std::move(cand);
      return true;
    }
    return false;
  };

  bool crossing_turn = cfg.breakpoint_steps;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    if (hi - lo <= cfg.tol_lambda || std::abs(lo_cand.cost.c1() - bound) <= cfg.tol_risk ||
        std::abs(hi_cand.cost.c1() - bound) <= cfg.tol_risk)
      return finish(true);
    const double dr = lo_cand.cost.c1() - hi_cand.cost.c1();
    if (crossing_turn && dr > 0.0) {
      const double cross = (hi_cand.cost.c0 - lo_cand.cost.c0) / dr;
      if (cross > lo && cross < hi) {
        auto cand = query(cross);
        ++out.iterations;
        const double level = lagr(lo_cand, cross);
        if (lagr(cand, cross) >= level - cfg.breakpoint_tol * std::max(1.0, std::abs(level)))
          return finish(true, cross);
        if (absorb(cross, std::move(cand))) return finish(true);
        crossing_turn = false;
        continue;
      }
    }
    crossing_turn = cfg.breakpoint_steps;
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) return finish(true);  // interval exhausted in floating point
    auto mid_cand = query(mid);
    ++out.iterations;
    if (absorb(mid, std::move(mid_cand))) return finish(true);
  }
  return finish(false);
}

/// Mixes the two bisection endpoints so the aggregate risk equals V.
template <class Policy>
MixedSolution<Policy> recover_mixture_scalar(const PureCandidate<Policy>& lower,
                                             const PureCandidate<Policy>& upper,
                                             const Bounds& v, double lambda = 0.0) {
  if (v.k() != 1 || lower.cost.k() != 1 || upper.cost.k() != 1)
    throw InvalidInput("recover_mixture_scalar: requires K = 1");
  const double bound = v[0];
  const double rl = lower.cost.c1(), ru = upper.cost.c1();
  if (!(rl >= bound && bound >= ru))
    throw InvalidInput("recover_mixture_scalar: endpoints do not bracket the bound");

  double p_lower = 1.0;
  if (rl > ru) p_lower = (bound - ru) / (rl - ru);
  else if (rl != bound)
    throw InvalidInput("recover_mixture_scalar: flat risk at both endpoints differs from V");

  MixedSolution<Policy> out;
  out.components.push_back({lower, p_lower});
  out.components.push_back({upper, 1.0 - p_lower});
  out.aggregate = aggregate_of(out.components);
  out.dual = DualVector::scalar(lambda);
  return out;
}

// ---------------------------------------------------------------------------
// General K
// ---------------------------------------------------------------------------

struct SubgradientConfig {
  double alpha0 = 1.0;  // step alpha_t = alpha0 / sqrt(t)
  std::size_t max_iter = 200;
  double tol = 1e-9;
  double lambda_max = 1e9;
  std::size_t max_refine = 200;
};

template <class Policy>
struct SubgradientResult {
  DualVector lambda;
  std::vector<PureCandidate<Policy>> pool;
  double q = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

template <class Policy>
void add_to_pool(std::vector<PureCandidate<Policy>>& pool, const PureCandidate<Policy>& c) {
  for (const auto& p : pool)
    if (p.cost == c.cost) return;
  pool.push_back(c);
}

// max_{0 <= lambda <= lambda_max} min_j c0_j + lambda . (c_j - V)
template <class Policy>
std::pair<DualVector, double> pool_dual_model(const std::vector<PureCandidate<Policy>>& pool,
                                              const Bounds& v, double lambda_max) {
  const std::size_t k = v.k();
  lp::LpProblem m;
  m.sense = lp::Sense::maximize;
  for (std::size_t i = 0; i < k; ++i) m.add_variable(0.0, lambda_max, 0.0);
  const std::size_t t = m.add_variable(-lp::kInf, lp::kInf, 1.0);
  for (const auto& cand : pool) {
    lp::Terms terms{{t, 1.0}};
    for (std::size_t i = 0; i < k; ++i) terms.push_back({i, -(cand.cost.rest[i] - v[i])});
    m.add_row(std::move(terms), lp::RowSense::less_equal, cand.cost.c0);
  }
  auto sol = lp::solve_lp(m);
  if (sol.status != lp::Status::optimal) throw Error("dual model LP failed");
  std::vector<double> lambda(k);
  for (std::size_t i = 0; i < k; ++i) lambda[i] = std::clamp(sol.x[i], 0.0, lambda_max);
  return {DualVector(std::move(lambda)), sol.x[t]};
}

}  // namespace detail

template <LagrangianOracle O>
SubgradientResult<typename O::policy_type> solve_dual_subgradient(O& oracle, const Bounds& v,
                                                                  const SubgradientConfig& cfg = {}) {
  const std::size_t k = oracle.k_constraints();
  if (k < 1 || v.k() != k) throw InvalidInput("solve_dual_subgradient: dimension mismatch");

  SubgradientResult<typename O::policy_type> out;
  std::vector<double> lambda(k, 0.0);
  double best_q = -std::numeric_limits<double>::infinity();
  std::vector<double> best_lambda = lambda;

  for (std::size_t t = 1; t <= cfg.max_iter; ++t) {
    const DualVector dv(lambda);
    auto cand = oracle.query(dv);
    ++out.iterations;
    detail::add_to_pool(out.pool, cand);
    const double q = lagrangian_value(cand.cost, dv, v);
    if (q > best_q) {
      best_q = q;
      best_lambda = lambda;
    }
    bool kkt = true;
    for (std::size_t i = 0; i < k; ++i) {
      const double g = cand.cost.rest[i] - v[i];
      if (lambda[i] > 0.0 ? std::abs(g) > cfg.tol : g > cfg.tol) kkt = false;
    }
    if (kkt) {
      out.lambda = dv;
      out.q = q;
      out.converged = true;
      return out;
    }
    const double step = cfg.alpha0 / std::sqrt(static_cast<double>(t));
    for (std::size_t i = 0; i < k; ++i)
      lambda[i] = std::clamp(lambda[i] + step * (cand.cost.rest[i] - v[i]), 0.0, cfg.lambda_max);
  }

  out.lambda = DualVector(best_lambda);
  out.q = best_q;

  // Close the pool: the model over-estimates q everywhere and is exact
  // wherever the oracle's answer is already in the pool.
  for (std::size_t r = 0; r < cfg.max_refine; ++r) {
    auto [model_lambda, model_q] = detail::pool_dual_model(out.pool, v, cfg.lambda_max);
    auto cand = oracle.query(model_lambda);
    ++out.iterations;
    const double q = lagrangian_value(cand.cost, model_lambda, v);
    if (q > best_q) {
      best_q = q;
      out.lambda = model_lambda;
      out.q = q;
    }
    if (q >= model_q - cfg.tol * (1.0 + std::abs(model_q))) {
      out.lambda = model_lambda;
      out.q = q;
      out.converged = true;
      return out;
    }
    detail::add_to_pool(out.pool, cand);
  }
  return out;
}

/// Finds probabilities over the members of `pool` that minimize the
/// Lagrangian at lambda such that the mixture satisfies the bounds, with
/// equality on every constraint whose multiplier is positive.
template <class Policy>
MixedSolution<Policy> recover_mixture_general(const std::vector<PureCandidate<Policy>>& pool,
                                              const DualVector& lambda, const Bounds& v,
                                              double tol = 1e-6) {
  if (pool.empty()) throw InvalidInput("recover_mixture_general: empty pool");
  const std::size_t k = v.k();
  if (lambda.k() != k) throw InvalidInput("recover_mixture_general: dimension mismatch");

  std::vector<double> values;
  values.reserve(pool.size());
  for (const auto& c : pool) values.push_back(lagrangian_value(c.cost, lambda, v));
  const double qmin = *std::min_element(values.begin(), values.end());

  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < pool.size(); ++j)
    if (values[j] <= qmin + tol * (1.0 + std::abs(qmin))) keep.push_back(j);

  lp::LpProblem m;
  for (std::size_t j : keep) m.add_variable(0.0, lp::kInf, pool[j].cost.c0);
  lp::Terms ones;
  for (std::size_t s = 0; s < keep.size(); ++s) ones.push_back({s, 1.0});
  m.add_row(ones, lp::RowSense::equal, 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    lp::Terms terms;
    for (std::size_t s = 0; s < keep.size(); ++s) terms.push_back({s, pool[keep[s]].cost.rest[i]});
    m.add_row(std::move(terms), lambda[i] > tol ? lp::RowSense::equal : lp::RowSense::less_equal,
              v[i]);
  }
  auto sol = lp::solve_lp(m);
  if (sol.status != lp::Status::optimal) {
    std::vector<CostVector> costs;
    for (const auto& c : pool) costs.push_back(c.cost);
    throw MixtureNotRecoverable(
        "recover_mixture_general: no mixture of Lagrangian minimizers meets the bounds",
        std::move(costs));
  }

  MixedSolution<Policy> out;
  double total = 0.0;
  for (std::size_t s = 0; s < keep.size(); ++s)
    if (sol.x[s] > 1e-12) total += sol.x[s];
  for (std::size_t s = 0; s < keep.size(); ++s)
    if (sol.x[s] > 1e-12) out.components.push_back({pool[keep[s]], sol.x[s] / total});
  out.aggregate = aggregate_of(out.components);
  out.dual = lambda;
  out.gap_estimate = std::max(0.0, out.aggregate.c0 - qmin);
  return out;
}

// ---------------------------------------------------------------------------
// Optimality certificate
// ---------------------------------------------------------------------------

struct OptimalityReport {
  bool a_minimizers = false;
  bool b_slackness = false;
  bool c_sum_to_one = false;
  bool d_nonnegative = false;
  bool e_feasible = false;
  bool f_consistent = false;
  double residual_a = 0.0;
  double residual_b = 0.0;
  double residual_c = 0.0;
  double residual_d = 0.0;
  double residual_e = 0.0;
  double residual_f = 0.0;
  bool overall = false;
};

/// Checks the necessary and sufficient optimality conditions for a mixed
/// solution against the oracle at solution.dual. Failures are reported,
/// never thrown.
template <LagrangianOracle O>
OptimalityReport check_optimality(const MixedSolution<typename O::policy_type>& sol,
                                  const Bounds& v, O& oracle, double tol = 1e-6) {
  OptimalityReport r;
  const std::size_t k = v.k();
  const auto& lambda = sol.dual;

  const auto best = oracle.query(lambda);
  const double q = lagrangian_value(best.cost, lambda, v);
  for (const auto& comp : sol.components) {
    if (comp.probability <= tol) continue;
    r.residual_a =
        std::max(r.residual_a, lagrangian_value(comp.candidate.cost, lambda, v) - q);
  }
  r.a_minimizers = r.residual_a <= tol * (1.0 + std::abs(q));

  double slack = 0.0;
  for (std::size_t i = 0; i < k; ++i) slack += lambda[i] * (sol.aggregate.rest[i] - v[i]);
  r.residual_b = std::abs(slack);
  r.b_slackness = r.residual_b <= tol * std::max(1.0, std::abs(sol.aggregate.c0));

  double total = 0.0, most_negative = 0.0;
  for (const auto& comp : sol.components) {
    total += comp.probability;
    most_negative = std::min(most_negative, comp.probability);
  }
  r.residual_c = std::abs(total - 1.0);
  r.c_sum_to_one = r.residual_c <= std::max(tol, kProbabilitySumTol);
  r.residual_d = std::max(0.0, -most_negative);
  r.d_nonnegative = r.residual_d <= tol;

  r.residual_e = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    r.residual_e = std::max(r.residual_e, sol.aggregate.rest[i] - v[i]);
  r.e_feasible = r.residual_e <= tol;

  if constexpr (EvaluatingOracle<O>) {
    for (const auto& comp : sol.components) {
      const CostVector exact = oracle.evaluate(comp.candidate.policy);
      double d = std::abs(exact.c0 - comp.candidate.cost.c0) / (1.0 + std::abs(exact.c0));
      for (std::size_t i = 0; i < k; ++i)
        d = std::max(d, std::abs(exact.rest[i] - comp.candidate.cost.rest[i]));
      r.residual_f = std::max(r.residual_f, d);
    }
  }
  r.f_consistent = r.residual_f <= tol;

  r.overall = r.a_minimizers && r.b_slackness && r.c_sum_to_one && r.d_nonnegative &&
              r.e_feasible && r.f_consistent;
  return r;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct MixedSolveConfig {
  ScalarDualConfig scalar{};
  SubgradientConfig subgradient{};
  double recovery_tol = 1e-6;
};

template <class Policy>
struct MixedSolveResult {
  MixedSolution<Policy> mixed;
  /// Best candidate met along the dual path that satisfies the bounds.
  std::optional<PureCandidate<Policy>> best_pure;
  double q_star = 0.0;
  std::size_t oracle_calls = 0;
  bool converged = false;
};

template <LagrangianOracle O>
MixedSolveResult<typename O::policy_type> solve_mixed(O& oracle, const Bounds& v,
                                                      const MixedSolveConfig& cfg = {}) {
  using Policy = typename O::policy_type;
  MixedSolveResult<Policy> out;

  if (oracle.k_constraints() == 1) {
    auto dual = solve_dual_scalar(oracle, v, cfg.scalar);
    out.q_star = dual.q_star;
    out.oracle_calls = dual.iterations;
    out.converged = dual.converged;
    out.best_pure = dual.upper;
    if (dual.lambda_star == 0.0) {
      out.mixed.components.push_back({dual.upper, 1.0});
      out.mixed.aggregate = dual.upper.cost;
      out.mixed.dual = DualVector::scalar(0.0);
    } else {
      out.mixed = recover_mixture_scalar(dual.lower, dual.upper, v, dual.lambda_star);
      std::erase_if(out.mixed.components, [](const auto& c) { return c.probability == 0.0; });
    }
    out.mixed.gap_estimate = std::max(0.0, out.mixed.aggregate.c0 - dual.q_star);
    return out;
  }

  auto dual = solve_dual_subgradient(oracle, v, cfg.subgradient);
  out.q_star = dual.q;
  out.oracle_calls = dual.iterations;
  out.converged = dual.converged;
  auto pool = dual.pool;
  try {
    out.mixed = recover_mixture_general(pool, dual.lambda, v, cfg.recovery_tol);
  } catch (const MixtureNotRecoverable&) {
    if constexpr (EnumeratingOracle<O>) {
      for (const auto& c : oracle.query_all(dual.lambda)) detail::add_to_pool(pool, c);
      ++out.oracle_calls;
      out.mixed = recover_mixture_general(pool, dual.lambda, v, cfg.recovery_tol);
    } else {
      throw;
    }
  }
  for (const auto& c : pool) {
    bool feasible = true;
    for (std::size_t i = 0; i < v.k(); ++i) feasible = feasible && c.cost.rest[i] <= v[i];
    if (feasible && (!out.best_pure || c.cost.c0 < out.best_pure->cost.c0)) out.best_pure = c;
  }
  return out;
}

}  // namespace mixedctrl
