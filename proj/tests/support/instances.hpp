// Random LP / MILP instance generators shared by the tests and the
// acceptance runner.

#pragma once

#include <random>
#include <vector>

#include "mixedctrl/lp.hpp"
#include "mixedctrl/milp.hpp"

namespace instances {

using mixedctrl::lp::LpProblem;
using mixedctrl::lp::RowSense;
using mixedctrl::lp::Sense;

/// n variables in [0, 10], m rows with mixed senses. With `feasible` the
/// right-hand sides are placed around a random interior point; otherwise
/// they are random and the instance may be infeasible. `integral` draws
/// small integer data so that degenerate vertices are common.
inline LpProblem random_lp(std::mt19937_64& rng, std::size_t n, std::size_t m, bool feasible,
                           bool integral = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> ui(-3, 3);
  std::uniform_int_distribution<int> sense_pick(0, 5);
  auto coef = [&] { return integral ? static_cast<double>(ui(rng)) : u(rng); };

  LpProblem p;
  p.sense = sense_pick(rng) % 2 ? Sense::maximize : Sense::minimize;
  std::vector<double> x0(n);
  for (std::size_t j = 0; j < n; ++j) {
    p.add_variable(0.0, 10.0, coef());
    x0[j] = integral ? static_cast<double>(std::uniform_int_distribution<int>(0, 10)(rng))
                     : 10.0 * (0.5 + 0.5 * u(rng));
  }
  for (std::size_t i = 0; i < m; ++i) {
    mixedctrl::lp::Terms t;
    double act = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = coef();
      if (a == 0.0) continue;
      t.emplace_back(j, a);
      act += a * x0[j];
    }
    const int s = sense_pick(rng);
    const RowSense rs = s < 3 ? RowSense::less_equal : s < 5 ? RowSense::greater_equal : RowSense::equal;
    double rhs;
    if (feasible) {
      const double slack = integral ? 0.0 : 2.0 * (0.5 + 0.5 * u(rng));
      rhs = rs == RowSense::less_equal ? act + slack : rs == RowSense::greater_equal ? act - slack : act;
    } else {
      rhs = integral ? static_cast<double>(ui(rng) * 5) : 15.0 * u(rng);
    }
    p.add_row(std::move(t), rs, rhs);
  }
  return p;
}

/// nb binaries followed by nc continuous variables in [0, 5].
inline mixedctrl::milp::MilpProblem random_milp(std::mt19937_64& rng, std::size_t nb,
                                                std::size_t nc, std::size_t m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> sense_pick(0, 4);
  mixedctrl::milp::MilpProblem p;
  p.lp.sense = sense_pick(rng) % 2 ? Sense::maximize : Sense::minimize;
  for (std::size_t j = 0; j < nb; ++j) {
    p.binaries.push_back(p.lp.add_variable(0.0, 1.0, 5.0 * u(rng)));
  }
  for (std::size_t j = 0; j < nc; ++j) p.lp.add_variable(0.0, 5.0, u(rng));
  for (std::size_t i = 0; i < m; ++i) {
    mixedctrl::lp::Terms t;
    for (std::size_t j = 0; j < nb + nc; ++j) t.emplace_back(j, 3.0 * u(rng));
    const int s = sense_pick(rng);
    const RowSense rs = s < 3 ? RowSense::less_equal : s < 4 ? RowSense::greater_equal : RowSense::equal;
    p.lp.add_row(std::move(t), rs, 4.0 * u(rng));
  }
  return p;
}

}  // namespace instances
