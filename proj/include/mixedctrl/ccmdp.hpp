// Finite-horizon chance-constrained MDP backend.
//
// Steps are 0-based: states live at steps 0..T, decisions are taken at
// steps 0..T-1. Failure states are absorbing. Risk is first-passage
// probability of entering a failure state at any step, and no stage cost
// accrues after failure.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mixedctrl/core.hpp"
#include "mixedctrl/stats.hpp"

namespace mixedctrl::ccmdp {

class MdpBuilder;

/// Immutable time-varying MDP in compressed (CSR) layout.
class Mdp {
 public:
  std::size_t horizon() const noexcept { return stages_.size(); }
  std::size_t num_states(std::size_t k) const { return state_counts_.at(k); }

  std::size_t num_actions(std::size_t k, std::size_t x) const {
    const auto& s = stages_[k];
    return s.action_begin[x + 1] - s.action_begin[x];
  }
  double cost(std::size_t k, std::size_t x, std::size_t a) const {
    const auto& s = stages_[k];
    return s.action_cost[s.action_begin[x] + a];
  }
  std::span<const std::uint32_t> successors(std::size_t k, std::size_t x, std::size_t a) const {
    const auto& s = stages_[k];
    const std::size_t id = s.action_begin[x] + a;
    return {s.succ_state.data() + s.succ_begin[id], s.succ_begin[id + 1] - s.succ_begin[id]};
  }
  std::span<const double> probabilities(std::size_t k, std::size_t x, std::size_t a) const {
    const auto& s = stages_[k];
    const std::size_t id = s.action_begin[x] + a;
    return {s.succ_prob.data() + s.succ_begin[id], s.succ_begin[id + 1] - s.succ_begin[id]};
  }
  bool is_failure(std::size_t k, std::size_t x) const { return failure_[k][x] != 0; }
  const std::vector<double>& initial() const noexcept { return initial_; }

 private:
  friend class MdpBuilder;

  struct Stage {
    std::vector<std::size_t> action_begin{0};
    std::vector<double> action_cost;
    std::vector<std::size_t> succ_begin{0};
    std::vector<std::uint32_t> succ_state;
    std::vector<double> succ_prob;
  };

  std::vector<std::size_t> state_counts_;  // T + 1 entries
  std::vector<Stage> stages_;              // T entries
  std::vector<std::vector<char>> failure_;
  std::vector<double> initial_;
};

/// Appends actions stage by stage, state by state (states within a stage
/// in non-decreasing order). build() validates the model.
class MdpBuilder {
 public:
  MdpBuilder(std::vector<std::size_t> state_counts) {
    if (state_counts.size() < 2) throw InvalidInput("Mdp: horizon must be at least 1");
    for (std::size_t n : state_counts)
      if (n == 0) throw InvalidInput("Mdp: every step needs at least one state");
    mdp_.state_counts_ = std::move(state_counts);
    const std::size_t T = mdp_.state_counts_.size() - 1;
    mdp_.stages_.resize(T);
    mdp_.failure_.resize(T + 1);
    for (std::size_t k = 0; k <= T; ++k) mdp_.failure_[k].assign(mdp_.state_counts_[k], 0);
    cursor_.assign(T, 0);
    for (std::size_t k = 0; k < T; ++k)
      mdp_.stages_[k].action_begin.reserve(mdp_.state_counts_[k] + 1);
  }

  void set_initial(std::vector<double> dist) { mdp_.initial_ = std::move(dist); }
  void set_failure(std::size_t k, std::size_t x, bool failed = true) {
    mdp_.failure_.at(k).at(x) = failed ? 1 : 0;
  }

  /// Starts a new action for state x at step k.
  void add_action(std::size_t k, std::size_t x, double cost) {
    auto& s = mdp_.stages_.at(k);
    if (x >= mdp_.state_counts_[k]) throw InvalidInput("Mdp: state index out of range");
    if (x < cursor_[k]) throw InvalidInput("Mdp: actions must be added in state order");
    while (cursor_[k] < x) {
      s.action_begin.push_back(s.action_cost.size());
      ++cursor_[k];
    }
    if (!std::isfinite(cost)) throw InvalidInput("Mdp: stage cost must be finite");
    s.action_cost.push_back(cost);
    s.succ_begin.push_back(s.succ_state.size());
    last_stage_ = k;
  }

  /// Adds a successor to the most recently added action.
  void add_successor(std::size_t next, double prob) {
    auto& s = mdp_.stages_.at(last_stage_);
    if (s.action_cost.empty()) throw InvalidInput("Mdp: successor without an action");
    if (next >= mdp_.state_counts_[last_stage_ + 1])
      throw InvalidInput("Mdp: successor state out of range");
    if (!(prob >= 0.0)) throw InvalidInput("Mdp: negative transition probability");
    s.succ_state.push_back(static_cast<std::uint32_t>(next));
    s.succ_prob.push_back(prob);
    s.succ_begin.back() = s.succ_state.size();
  }

  Mdp build() {
    const std::size_t T = mdp_.stages_.size();
    for (std::size_t k = 0; k < T; ++k) {
      auto& s = mdp_.stages_[k];
      while (cursor_[k] < mdp_.state_counts_[k]) {
        s.action_begin.push_back(s.action_cost.size());
        ++cursor_[k];
      }
    }
    validate(mdp_);
    return std::move(mdp_);
  }

  static void validate(const Mdp& m) {
    const std::size_t T = m.horizon();
    if (m.initial_.size() != m.state_counts_[0])
      throw InvalidInput("Mdp: initial distribution has wrong size");
    double total = 0.0;
    for (double p : m.initial_) {
      if (!(p >= 0.0)) throw InvalidInput("Mdp: negative initial probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("Mdp: initial distribution must sum to 1");
    for (std::size_t k = 0; k < T; ++k) {
      for (std::size_t x = 0; x < m.state_counts_[k]; ++x) {
        if (m.is_failure(k, x)) continue;
        const std::size_t na = m.num_actions(k, x);
        if (na == 0)
          throw InvalidInput("Mdp: alive state " + std::to_string(x) + " at step " +
                             std::to_string(k) + " has no actions");
        for (std::size_t a = 0; a < na; ++a) {
          double row = 0.0;
          for (double p : m.probabilities(k, x, a)) row += p;
          if (std::abs(row - 1.0) > 1e-12)
            throw InvalidInput("Mdp: transition row does not sum to 1 at step " +
                               std::to_string(k) + ", state " + std::to_string(x));
        }
      }
    }
  }

 private:
  Mdp mdp_;
  std::vector<std::size_t> cursor_;
  std::size_t last_stage_ = 0;
};

/// Deterministic Markov policy: action index per (step, state). Entries for
/// failure states are unused.
struct Policy {
  std::vector<std::vector<std::int32_t>> action;

  bool operator==(const Policy&) const = default;
};

struct EvalResult {
  double expected_cost = 0.0;
  double failure_prob = 0.0;
};

/// Optional per-step mass bookkeeping from evaluate_policy.
struct MassTrace {
  std::vector<double> alive;   // alive mass at each step 0..T
  std::vector<double> failed;  // cumulative absorbed mass at each step 0..T
};

/// Exact forward propagation of the (state, alive) distribution.
inline EvalResult evaluate_policy(const Mdp& mdp, const Policy& policy, MassTrace* trace = nullptr) {
  const std::size_t T = mdp.horizon();
  if (policy.action.size() != T) throw InvalidPolicy("policy horizon does not match the model");
  EvalResult out;
  std::vector<double> dist(mdp.num_states(0), 0.0);
  for (std::size_t x = 0; x < dist.size(); ++x) {
    if (mdp.is_failure(0, x)) out.failure_prob += mdp.initial()[x];
    else dist[x] = mdp.initial()[x];
  }
  auto record = [&] {
    if (!trace) return;
    double alive = 0.0;
    for (double d : dist) alive += d;
    trace->alive.push_back(alive);
    trace->failed.push_back(out.failure_prob);
  };
  record();
  std::vector<double> next;
  for (std::size_t k = 0; k < T; ++k) {
    next.assign(mdp.num_states(k + 1), 0.0);
    if (policy.action[k].size() != mdp.num_states(k))
      throw InvalidPolicy("policy table size mismatch at step " + std::to_string(k));
    for (std::size_t x = 0; x < dist.size(); ++x) {
      const double mass = dist[x];
      if (mass == 0.0) continue;
      const auto a = policy.action[k][x];
      if (a < 0 || static_cast<std::size_t>(a) >= mdp.num_actions(k, x))
        throw InvalidPolicy("undefined action at reachable state " + std::to_string(x) +
                            ", step " + std::to_string(k));
      out.expected_cost += mass * mdp.cost(k, x, a);
      const auto succ = mdp.successors(k, x, a);
      const auto prob = mdp.probabilities(k, x, a);
      for (std::size_t s = 0; s < succ.size(); ++s) {
        if (mdp.is_failure(k + 1, succ[s])) out.failure_prob += mass * prob[s];
        else next[succ[s]] += mass * prob[s];
      }
    }
    dist.swap(next);
    record();
  }
  out.failure_prob = std::min(1.0, std::max(0.0, out.failure_prob));
  return out;
}

struct DpResult {
  Policy policy;
  /// value[k][x]: optimal cost-to-go of alive state x at step k under the
  /// penalized objective (0 for failure states).
  std::vector<std::vector<double>> value;
};

/// Backward induction on the absorbing-failure chain: entering a failure
/// state costs `lambda` once. Ties go to the lowest action index.
inline DpResult backward_induction(const Mdp& mdp, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidInput("lagrangian_dp: lambda must be nonnegative");
  const std::size_t T = mdp.horizon();
  DpResult out;
  out.policy.action.resize(T);
  out.value.resize(T + 1);
  out.value[T].assign(mdp.num_states(T), 0.0);
  for (std::size_t kk = T; kk-- > 0;) {
    const auto& next_value = out.value[kk + 1];
    const std::size_t n = mdp.num_states(kk);
    out.value[kk].assign(n, 0.0);
    out.policy.action[kk].assign(n, -1);
    for (std::size_t x = 0; x < n; ++x) {
      if (mdp.is_failure(kk, x)) continue;
      double best = std::numeric_limits<double>::infinity();
      std::int32_t best_a = -1;
      const std::size_t na = mdp.num_actions(kk, x);
      for (std::size_t a = 0; a < na; ++a) {
        double q = mdp.cost(kk, x, a);
        const auto succ = mdp.successors(kk, x, a);
        const auto prob = mdp.probabilities(kk, x, a);
        for (std::size_t s = 0; s < succ.size(); ++s)
          q += prob[s] * (mdp.is_failure(kk + 1, succ[s]) ? lambda : next_value[succ[s]]);
        if (q < best) {
          best = q;
          best_a = static_cast<std::int32_t>(a);
        }
      }
      out.value[kk][x] = best;
      out.policy.action[kk][x] = best_a;
    }
  }
  return out;
}

/// Lagrangian minimizer at lambda, with its exact cost vector.
inline PureCandidate<Policy> lagrangian_dp(const Mdp& mdp, double lambda) {
  auto dp = backward_induction(mdp, lambda);
  const auto eval = evaluate_policy(mdp, dp.policy);
  return {std::move(dp.policy), CostVector(eval.expected_cost, {eval.failure_prob})};
}

/// LagrangianOracle over all deterministic Markov policies of an Mdp.
class MdpOracle {
 public:
  using policy_type = Policy;

  explicit MdpOracle(const Mdp& mdp) : mdp_(&mdp) {}

  std::size_t k_constraints() const noexcept { return 1; }
  PureCandidate<Policy> query(const DualVector& lambda) {
    if (lambda.k() != 1) throw InvalidInput("MdpOracle: expects a scalar multiplier");
    return lagrangian_dp(*mdp_, lambda[0]);
  }
  CostVector evaluate(const Policy& policy) const {
    const auto e = evaluate_policy(*mdp_, policy);
    return CostVector(e.expected_cost, {e.failure_prob});
  }
  const Mdp& mdp() const noexcept { return *mdp_; }

 private:
  const Mdp* mdp_;
};

struct SimulationSummary {
  std::size_t rollouts = 0;
  double empirical_cost_mean = 0.0;
  double cost_ci_halfwidth = 0.0;
  double empirical_failure_rate = 0.0;
  stats::Interval failure_ci;  // 99% Wilson interval
};

/// Monte Carlo rollouts of a mixed strategy: one component draw per
/// rollout at time zero, then the chosen policy to the end.
inline SimulationSummary simulate(const Mdp& mdp, const MixedSolution<Policy>& solution,
                                  std::uint64_t seed, std::size_t n_rollouts) {
  if (n_rollouts == 0) throw InvalidInput("simulate: need at least one rollout");
  if (solution.components.empty()) throw InvalidInput("simulate: empty mixture");
  std::vector<double> probs;
  for (const auto& c : solution.components) probs.push_back(c.probability);

  std::vector<double> costs(n_rollouts, 0.0);
  std::vector<char> failed(n_rollouts, 0);
  const std::size_t T = mdp.horizon();

  stats::parallel_samples(seed, n_rollouts, [&](stats::Rng& rng, std::size_t i) {
    const auto& policy = solution.components[rng.discrete(probs)].candidate.policy;
    std::size_t x = rng.discrete(mdp.initial());
    if (mdp.is_failure(0, x)) {
      failed[i] = 1;
      return;
    }
    double cost = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
      const auto a = static_cast<std::size_t>(policy.action[k][x]);
      cost += mdp.cost(k, x, a);
      const auto succ = mdp.successors(k, x, a);
      x = succ[rng.discrete(mdp.probabilities(k, x, a))];
      if (mdp.is_failure(k + 1, x)) {
        failed[i] = 1;
        break;
      }
    }
    costs[i] = cost;
  });

  SimulationSummary out;
  out.rollouts = n_rollouts;
  double sum = 0.0, sumsq = 0.0;
  std::size_t fails = 0;
  for (std::size_t i = 0; i < n_rollouts; ++i) {
    sum += costs[i];
    sumsq += costs[i] * costs[i];
    fails += failed[i];
  }
  const double n = static_cast<double>(n_rollouts);
  out.empirical_cost_mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sumsq - n * out.empirical_cost_mean * out.empirical_cost_mean) / (n - 1)) : 0.0;
  out.cost_ci_halfwidth = stats::kZ99 * std::sqrt(var / n);
  out.empirical_failure_rate = static_cast<double>(fails) / n;
  out.failure_ci = stats::wilson_interval(fails, n_rollouts);
  return out;
}

}  // namespace mixedctrl::ccmdp
