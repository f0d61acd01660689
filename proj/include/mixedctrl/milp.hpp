// Best-first branch-and-bound over binary variables.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "mixedctrl/lp.hpp"

namespace mixedctrl::milp {

enum class Status { optimal, infeasible, unbounded, node_limit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::node_limit: return "node_limit";
  }
  return "unknown";
}

/// Proposes a full 0/1 assignment for the binaries from a relaxation
/// solution (indexed like MilpProblem::binaries). Optional.
using RoundingHeuristic =
    std::function<std::optional<std::vector<double>>(const std::vector<double>& relaxed_x)>;

struct MilpProblem {
  lp::LpProblem lp;
  std::vector<std::size_t> binaries;
  RoundingHeuristic heuristic;
};

struct MilpSolution {
  Status status = Status::infeasible;
  std::vector<double> x;
  double objective = 0.0;
  double root_bound = 0.0;
  std::size_t nodes = 0;
};

struct MilpConfig {
  double abs_gap = 1e-6;
  std::size_t max_nodes = 200000;
  double integrality_tol = 1e-6;
  lp::SimplexOptions lp_options{};
};

namespace detail {

struct Node {
  double bound;
  std::size_t id;
  std::vector<signed char> fixed;  // -1 free, 0, 1 per binary
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

}  // namespace detail

/// Solves p; the objective is treated in p.lp.sense.
inline MilpSolution solve_milp(const MilpProblem& p, const MilpConfig& cfg = {}) {
  const std::size_t nb = p.binaries.size();
  for (std::size_t b : p.binaries)
    if (b >= p.lp.num_vars()) throw InvalidInput("solve_milp: binary index out of range");

  // Internally minimize.
  const double sign = p.lp.sense == lp::Sense::maximize ? -1.0 : 1.0;

  lp::LpProblem work = p.lp;
  for (std::size_t b : p.binaries) {
    work.lower[b] = std::max(work.lower[b], 0.0);
    work.upper[b] = std::min(work.upper[b], 1.0);
  }

  auto solve_with = [&](const std::vector<signed char>& fixed) {
    for (std::size_t i = 0; i < nb; ++i) {
      const std::size_t b = p.binaries[i];
      if (fixed[i] < 0) {
        work.lower[b] = std::max(p.lp.lower[b], 0.0);
        work.upper[b] = std::min(p.lp.upper[b], 1.0);
      } else {
        work.lower[b] = work.upper[b] = static_cast<double>(fixed[i]);
      }
    }
    return lp::solve_lp(work, cfg.lp_options);
  };

  MilpSolution out;
  double incumbent = std::numeric_limits<double>::infinity();

  auto try_incumbent = [&](const std::vector<double>& x) {
    const double v = sign * lp::objective_at(p.lp, x);
    if (v < incumbent) {
      incumbent = v;
      out.x = x;
    }
  };

  auto run_heuristic = [&](const std::vector<double>& relaxed) {
    if (!p.heuristic) return;
    auto proposal = p.heuristic(relaxed);
    if (!proposal || proposal->size() != nb) return;
    std::vector<signed char> fixed(nb);
    for (std::size_t i = 0; i < nb; ++i) fixed[i] = (*proposal)[i] >= 0.5 ? 1 : 0;
    auto sol = solve_with(fixed);
    if (sol.status == lp::Status::optimal) try_incumbent(sol.x);
  };

  auto most_fractional = [&](const std::vector<double>& x) -> std::optional<std::size_t> {
    std::optional<std::size_t> pick;
    double best = cfg.integrality_tol;
    for (std::size_t i = 0; i < nb; ++i) {
      const double v = x[p.binaries[i]];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > best) {
        best = frac;
        pick = i;
      }
    }
    return pick;
  };

  std::priority_queue<detail::Node, std::vector<detail::Node>, detail::NodeOrder> open;
  std::size_t next_id = 0;

  auto root = solve_with(std::vector<signed char>(nb, -1));
  out.nodes = 1;
  if (root.status == lp::Status::infeasible) {
    out.status = Status::infeasible;
    return out;
  }
  if (root.status == lp::Status::unbounded) {
    out.status = Status::unbounded;
    return out;
  }
  out.root_bound = lp::objective_at(p.lp, root.x);

  struct Pending {
    lp::LpSolution sol;
    std::vector<signed char> fixed;
  };

  // Processes a solved node: integral -> incumbent, fractional -> children.
  auto expand = [&](Pending node) {
    const double bound = sign * lp::objective_at(p.lp, node.sol.x);
    if (bound >= incumbent - cfg.abs_gap) return;
    auto branch = most_fractional(node.sol.x);
    if (!branch) {
      try_incumbent(node.sol.x);
      return;
    }
    run_heuristic(node.sol.x);
    if (bound >= incumbent - cfg.abs_gap) return;
    for (signed char v : {0, 1}) {
      auto child = node.fixed;
      child[*branch] = v;
      open.push(detail::Node{bound, next_id++, std::move(child)});
    }
  };

  expand(Pending{std::move(root), std::vector<signed char>(nb, -1)});

  while (!open.empty()) {
    if (out.nodes >= cfg.max_nodes) {
      out.status = Status::node_limit;
      if (!out.x.empty()) out.objective = lp::objective_at(p.lp, out.x);
      return out;
    }
    detail::Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - cfg.abs_gap) break;  // best-first: nothing better remains
    auto sol = solve_with(node.fixed);
    ++out.nodes;
    if (sol.status != lp::Status::optimal) continue;
    expand(Pending{std::move(sol), std::move(node.fixed)});
  }

  if (out.x.empty()) {
    out.status = Status::infeasible;
    return out;
  }
  out.objective = lp::objective_at(p.lp, out.x);
  out.status = Status::optimal;
  return out;
}

}  // namespace mixedctrl::milp
