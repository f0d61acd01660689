// Shared domain types for mixed-strategy constrained stochastic control.
//
// A problem backend is anything satisfying the LagrangianOracle concept: it
// takes a nonnegative multiplier vector and returns a deterministic, exact
// minimizer of c0 + lambda . (c_rest - V) together with that policy's cost
// vector. Everything in dual.hpp is written against that contract only.

#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mixedctrl {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};

/// No policy satisfies the constraint bound (or the backend has no feasible
/// policy at all).
struct Infeasible : Error {
  using Error::Error;
};

/// Raised when c_rest is observed to increase with lambda, which an exact
/// minimizer can never do.
struct NonMonotoneOracle : Error {
  using Error::Error;
};

struct InvalidPolicy : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Cost vectors, bounds, multipliers
// ---------------------------------------------------------------------------

/// c = (c0, c1 .. cK). c0 is the objective expectation, c1..cK the
/// constraint expectations (failure probabilities for chance constraints).
struct CostVector {
  double c0 = 0.0;
  std::vector<double> rest;

  CostVector() = default;
  CostVector(double objective, std::vector<double> constraints)
      : c0(objective), rest(std::move(constraints)) {}

  std::size_t k() const noexcept { return rest.size(); }
  double c1() const { return rest.at(0); }

  bool operator==(const CostVector&) const = default;
};

/// Constraint thresholds V1..VK.
class Bounds {
 public:
  Bounds() = default;
  explicit Bounds(std::vector<double> v) : v_(std::move(v)) {
    for (double x : v_)
      if (!std::isfinite(x)) throw InvalidInput("bounds must be finite");
  }
  Bounds(std::initializer_list<double> v) : Bounds(std::vector<double>(v)) {}

  std::size_t k() const noexcept { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const noexcept { return v_; }

 private:
  std::vector<double> v_;
};

/// Lagrange multipliers, one per constraint, all nonnegative.
class DualVector {
 public:
  DualVector() = default;
  explicit DualVector(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    for (double x : lambda_)
      if (!(x >= 0.0) || !std::isfinite(x))
        throw InvalidInput("dual multipliers must be finite and nonnegative");
  }
  DualVector(std::initializer_list<double> lambda)
      : DualVector(std::vector<double>(lambda)) {}

  static DualVector zeros(std::size_t k) {
    return DualVector(std::vector<double>(k, 0.0));
  }
  static DualVector scalar(double lambda) { return DualVector({lambda}); }

  std::size_t k() const noexcept { return lambda_.size(); }
  double operator[](std::size_t i) const { return lambda_[i]; }
  const std::vector<double>& values() const noexcept { return lambda_; }

  bool operator==(const DualVector&) const = default;

 private:
  std::vector<double> lambda_;
};

template <class Policy>
struct PureCandidate {
  Policy policy;
  CostVector cost;
};

template <class Policy>
struct MixtureComponent {
  PureCandidate<Policy> candidate;
  double probability = 0.0;
};

/// Initial randomization over at most K+1 pure policies.
template <class Policy>
struct MixedSolution {
  std::vector<MixtureComponent<Policy>> components;
  CostVector aggregate;
  DualVector dual;
  double gap_estimate = 0.0;
};

// ---------------------------------------------------------------------------
// Oracle contract
// ---------------------------------------------------------------------------

/// A backend exposing exact inner minimization of the Lagrangian.
/// query() must be deterministic: identical lambda, identical answer.
template <class O>
concept LagrangianOracle = requires(O& oracle, const O& coracle,
                                    const DualVector& lambda) {
  typename O::policy_type;
  { coracle.k_constraints() } -> std::convertible_to<std::size_t>;
  { oracle.query(lambda) } -> std::same_as<PureCandidate<typename O::policy_type>>;
};

/// Backends that can re-evaluate a policy exactly (used for the
/// cost-consistency check in check_optimality).
template <class O>
concept EvaluatingOracle = LagrangianOracle<O> &&
    requires(const O& oracle, const typename O::policy_type& policy) {
      { oracle.evaluate(policy) } -> std::same_as<CostVector>;
    };

template <LagrangianOracle O>
using candidate_t = PureCandidate<typename O::policy_type>;

// ---------------------------------------------------------------------------
// Cost-vector algebra
// ---------------------------------------------------------------------------

inline constexpr double kProbabilitySumTol = 1e-9;

/// Probability-weighted sum of cost vectors.
inline CostVector mix_costs(const std::vector<std::pair<CostVector, double>>& components,
                            double prob_tol = kProbabilitySumTol) {
  if (components.empty()) throw InvalidInput("mix_costs: no components");
  const std::size_t k = components.front().first.k();
  double total = 0.0;
  for (const auto& [c, p] : components) {
    if (c.k() != k) throw InvalidInput("mix_costs: cost vector dimension mismatch");
    if (!(p >= 0.0)) throw InvalidInput("mix_costs: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > prob_tol)
    throw InvalidInput("mix_costs: probabilities do not sum to 1");

  CostVector out(0.0, std::vector<double>(k, 0.0));
  for (const auto& [c, p] : components) {
    out.c0 += p * c.c0;
    for (std::size_t i = 0; i < k; ++i) out.rest[i] += p * c.rest[i];
  }
  return out;
}

/// c0 + sum_i lambda_i (c_i - V_i)
inline double lagrangian_value(const CostVector& c, const DualVector& lambda,
                               const Bounds& v) {
  if (c.k() != lambda.k() || c.k() != v.k())
    throw InvalidInput("lagrangian_value: dimension mismatch");
  double value = c.c0;
  for (std::size_t i = 0; i < c.k(); ++i) value += lambda[i] * (c.rest[i] - v[i]);
  return value;
}

template <class Policy>
CostVector aggregate_of(const std::vector<MixtureComponent<Policy>>& components) {
  std::vector<std::pair<CostVector, double>> weighted;
  weighted.reserve(components.size());
  for (const auto& comp : components)
    weighted.emplace_back(comp.candidate.cost, comp.probability);
  return mix_costs(weighted);
}

}  // namespace mixedctrl
