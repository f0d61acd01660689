// Dense two-phase tableau simplex.
//
// Variables carry arbitrary (possibly infinite) bounds; they are mapped to
// nonnegative columns before the tableau is built. Entering columns are
// chosen by Dantzig's rule until a run of pivots without progress is observed,
// after which Bland's rule is used for the remainder of the phase, which
// rules out cycling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mixedctrl/core.hpp"

namespace mixedctrl::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { minimize, maximize };
enum class RowSense { less_equal, equal, greater_equal };
enum class Status { optimal, infeasible, unbounded };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
  }
  return "unknown";
}

using Terms = std::vector<std::pair<std::size_t, double>>;

struct Row {
  Terms terms;
  RowSense sense = RowSense::less_equal;
  double rhs = 0.0;
};

struct LpProblem {
  Sense sense = Sense::minimize;
  std::vector<double> objective;
  double objective_offset = 0.0;
  std::vector<Row> rows;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t num_vars() const noexcept { return objective.size(); }

  std::size_t add_variable(double lo = 0.0, double hi = kInf, double cost = 0.0) {
    objective.push_back(cost);
    lower.push_back(lo);
    upper.push_back(hi);
    return objective.size() - 1;
  }

  void add_row(Terms terms, RowSense s, double rhs) {
    rows.push_back(Row{std::move(terms), s, rhs});
  }
};

struct LpSolution {
  Status status = Status::infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
};

enum class PivotRule { bland, dantzig_then_bland };

struct SimplexOptions {
  PivotRule rule = PivotRule::dantzig_then_bland;
  double pivot_tol = 1e-9;
  double feas_tol = 1e-7;
  double cost_tol = 1e-9;
  std::size_t degenerate_streak = 50;
};

/// Max violation of rows and bounds at x (0 when feasible).
inline double max_violation(const LpProblem& p, const std::vector<double>& x) {
  double worst = 0.0;
  for (std::size_t j = 0; j < p.num_vars(); ++j) {
    worst = std::max(worst, p.lower[j] - x[j]);
    worst = std::max(worst, x[j] - p.upper[j]);
  }
  for (const auto& row : p.rows) {
    double act = 0.0;
    for (auto [j, a] : row.terms) act += a * x[j];
    switch (row.sense) {
      case RowSense::less_equal: worst = std::max(worst, act - row.rhs); break;
      case RowSense::greater_equal: worst = std::max(worst, row.rhs - act); break;
      case RowSense::equal: worst = std::max(worst, std::abs(act - row.rhs)); break;
    }
  }
  return worst;
}

inline double objective_at(const LpProblem& p, const std::vector<double>& x) {
  double v = p.objective_offset;
  for (std::size_t j = 0; j < p.num_vars(); ++j) v += p.objective[j] * x[j];
  return v;
}

namespace detail {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : m_(rows), n_(cols), w_(cols + 1), data_((rows + 1) * (cols + 1), 0.0), basis_(rows, 0) {}

  double& at(std::size_t i, std::size_t j) { return data_[i * w_ + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * w_ + j]; }
  double& rhs(std::size_t i) { return data_[i * w_ + n_]; }
  double rhs(std::size_t i) const { return data_[i * w_ + n_]; }
  // Objective row is stored at index m_.
  double& cost(std::size_t j) { return data_[m_ * w_ + j]; }
  double cost(std::size_t j) const { return data_[m_ * w_ + j]; }

  std::size_t rows() const noexcept { return m_; }
  std::size_t cols() const noexcept { return n_; }
  std::vector<std::size_t>& basis() { return basis_; }
  const std::vector<std::size_t>& basis() const { return basis_; }

  void pivot(std::size_t r, std::size_t e) {
    double* prow = &data_[r * w_];
    const double inv = 1.0 / prow[e];
    nz_.clear();
    for (std::size_t j = 0; j < w_; ++j) {
      if (prow[j] == 0.0) continue;
      prow[j] *= inv;
      if (std::abs(prow[j]) < 1e-14) {
        prow[j] = 0.0;
        continue;
      }
      nz_.push_back(j);
    }
    prow[e] = 1.0;
    for (std::size_t i = 0; i <= m_; ++i) {
      if (i == r) continue;
      double* row = &data_[i * w_];
      const double f = row[e];
      if (f == 0.0) continue;
      for (std::size_t j : nz_) row[j] -= f * prow[j];
      row[e] = 0.0;
    }
    basis_[r] = e;
  }

 private:
  std::size_t m_, n_, w_;
  std::vector<double> data_;
  std::vector<std::size_t> basis_;
  std::vector<std::size_t> nz_;
};

enum class PhaseResult { optimal, unbounded };

// Minimizes the objective row of t over columns j with allowed[j].
inline PhaseResult run_phase(Tableau& t, const std::vector<char>& allowed,
                             const SimplexOptions& opt, std::size_t& iterations) {
  bool bland = opt.rule == PivotRule::bland;
  std::size_t degenerate = 0;
  const std::size_t limit = 200 * (t.rows() + t.cols()) + 1000;
  for (std::size_t iter = 0; iter < limit; ++iter) {
    std::size_t enter = t.cols();
    double best = -opt.cost_tol;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (!allowed[j]) continue;
      const double r = t.cost(j);
      if (r < best) {
        enter = j;
        if (bland) break;
        best = r;
      }
    }
    if (enter == t.cols()) return PhaseResult::optimal;

    std::size_t leave = t.rows();
    if (bland) {
      double ratio = kInf;
      for (std::size_t i = 0; i < t.rows(); ++i) {
        const double a = t.at(i, enter);
        if (a <= opt.pivot_tol) continue;
        const double q = std::max(0.0, t.rhs(i)) / a;
        if (leave == t.rows() || q < ratio - 1e-12) {
          ratio = q;
          leave = i;
        } else if (q <= ratio + 1e-12 && t.basis()[i] < t.basis()[leave]) {
          ratio = std::min(ratio, q);
          leave = i;
        }
      }
    } else {
      // Harris: bound the step with slightly relaxed right-hand sides, then
      // take the largest pivot among rows that block within that bound.
      double bound = kInf;
      for (std::size_t i = 0; i < t.rows(); ++i) {
        const double a = t.at(i, enter);
        if (a <= opt.pivot_tol) continue;
        bound = std::min(bound, (std::max(0.0, t.rhs(i)) + opt.feas_tol) / a);
      }
      double best_pivot = 0.0;
      for (std::size_t i = 0; i < t.rows(); ++i) {
        const double a = t.at(i, enter);
        if (a <= opt.pivot_tol) continue;
        const double q = std::max(0.0, t.rhs(i)) / a;
        if (q > bound) continue;
        if (a > best_pivot || (a == best_pivot && t.basis()[i] < t.basis()[leave])) {
          best_pivot = a;
          leave = i;
        }
      }
    }
    if (leave == t.rows()) return PhaseResult::unbounded;

    const double before = t.cost(t.cols());
    t.pivot(leave, enter);
    ++iterations;
    // The objective row holds -z; a pivot that does not lower z counts as
    // a stall.
    const double gain = t.cost(t.cols()) - before;
    if (gain <= 1e-12 * (1.0 + std::abs(before))) {
      if (++degenerate >= opt.degenerate_streak) bland = true;
    } else {
      degenerate = 0;
    }
  }
  throw Error("simplex: iteration limit reached");
}

struct ColumnMap {
  double shift = 0.0;
  // (tableau column, sign) pairs; empty when the variable is fixed.
  std::vector<std::pair<std::size_t, double>> cols;
};

}  // namespace detail

/// Solves p. Returns a vertex solution when optimal.
inline LpSolution solve_lp(const LpProblem& p, const SimplexOptions& opt = {}) {
  const std::size_t n = p.num_vars();
  if (p.lower.size() != n || p.upper.size() != n)
    throw InvalidInput("solve_lp: bound vectors do not match variable count");
  for (const auto& row : p.rows) {
    if (!std::isfinite(row.rhs)) throw InvalidInput("solve_lp: non-finite right-hand side");
    for (auto [j, a] : row.terms) {
      if (j >= n) throw InvalidInput("solve_lp: row references unknown variable");
      if (!std::isfinite(a)) throw InvalidInput("solve_lp: non-finite coefficient");
    }
  }
  for (double c : p.objective)
    if (!std::isfinite(c)) throw InvalidInput("solve_lp: non-finite objective coefficient");

  LpSolution out;
  for (std::size_t j = 0; j < n; ++j) {
    if (std::isnan(p.lower[j]) || std::isnan(p.upper[j]))
      throw InvalidInput("solve_lp: NaN bound");
    if (p.lower[j] > p.upper[j] + opt.feas_tol) return out;  // infeasible
  }

  const double sign = p.sense == Sense::maximize ? -1.0 : 1.0;

  // Map each variable onto nonnegative structural columns.
  std::vector<detail::ColumnMap> map(n);
  std::size_t ny = 0;
  struct BoundRow { std::size_t col; double cap; };
  std::vector<BoundRow> bound_rows;
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = p.lower[j], hi = p.upper[j];
    auto& m = map[j];
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 0.0) {
      m.shift = lo;
    } else if (std::isfinite(lo)) {
      m.shift = lo;
      m.cols.push_back({ny, 1.0});
      if (std::isfinite(hi)) bound_rows.push_back({ny, hi - lo});
      ++ny;
    } else if (std::isfinite(hi)) {
      m.shift = hi;
      m.cols.push_back({ny++, -1.0});
    } else {
      m.cols.push_back({ny++, 1.0});
      m.cols.push_back({ny++, -1.0});
    }
  }

  // Assemble rows over y: coefficients, sense, rhs (after shifting).
  struct StdRow {
    std::vector<std::pair<std::size_t, double>> terms;
    RowSense sense;
    double rhs;
  };
  std::vector<StdRow> rows;
  rows.reserve(p.rows.size() + bound_rows.size());
  for (const auto& row : p.rows) {
    StdRow r{{}, row.sense, row.rhs};
    for (auto [j, a] : row.terms) {
      if (a == 0.0) continue;
      r.rhs -= a * map[j].shift;
      for (auto [col, s] : map[j].cols) r.terms.push_back({col, a * s});
    }
    if (r.terms.empty()) {
      // Constant row: check it directly.
      const double act = 0.0;
      const double tol = opt.feas_tol * (1.0 + std::abs(row.rhs));
      bool ok = true;
      switch (r.sense) {
        case RowSense::less_equal: ok = act <= r.rhs + tol; break;
        case RowSense::greater_equal: ok = act >= r.rhs - tol; break;
        case RowSense::equal: ok = std::abs(act - r.rhs) <= tol; break;
      }
      if (!ok) return out;
      continue;
    }
    rows.push_back(std::move(r));
  }
  for (const auto& b : bound_rows)
    rows.push_back(StdRow{{{b.col, 1.0}}, RowSense::less_equal, b.cap});

  for (auto& r : rows) {
    if (r.rhs < 0.0) {
      r.rhs = -r.rhs;
      for (auto& t : r.terms) t.second = -t.second;
      if (r.sense == RowSense::less_equal) r.sense = RowSense::greater_equal;
      else if (r.sense == RowSense::greater_equal) r.sense = RowSense::less_equal;
    }
  }

  const std::size_t m = rows.size();
  std::size_t n_slack = 0, n_art = 0;
  for (const auto& r : rows) {
    if (r.sense != RowSense::equal) ++n_slack;
    if (r.sense != RowSense::less_equal) ++n_art;
  }
  const std::size_t art_begin = ny + n_slack;
  const std::size_t ncols = art_begin + n_art;

  // Structural cost in y-space.
  std::vector<double> cost(ncols, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = sign * p.objective[j];
    for (auto [col, s] : map[j].cols) cost[col] += c * s;
  }

  detail::Tableau t(m, ncols);
  {
    std::size_t slack = ny, art = art_begin;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& r = rows[i];
      for (auto [col, a] : r.terms) t.at(i, col) += a;
      t.rhs(i) = r.rhs;
      switch (r.sense) {
        case RowSense::less_equal:
          t.at(i, slack) = 1.0;
          t.basis()[i] = slack++;
          break;
        case RowSense::greater_equal:
          t.at(i, slack++) = -1.0;
          t.at(i, art) = 1.0;
          t.basis()[i] = art++;
          break;
        case RowSense::equal:
          t.at(i, art) = 1.0;
          t.basis()[i] = art++;
          break;
      }
    }
  }

  std::vector<char> allowed(ncols, 1);
  if (n_art > 0) {
    // Phase 1: minimize the sum of artificials.
    for (std::size_t j = 0; j <= ncols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        if (t.basis()[i] >= art_begin) s += (j == ncols ? t.rhs(i) : t.at(i, j));
      if (j == ncols) t.cost(ncols) = -s;
      else t.cost(j) = (j >= art_begin ? 1.0 : 0.0) - s;
    }
    for (std::size_t j = art_begin; j < ncols; ++j) t.cost(j) = 0.0;
    if (detail::run_phase(t, allowed, opt, out.iterations) != detail::PhaseResult::optimal)
      throw Error("simplex: phase 1 reported unbounded");
    double scale = 1.0;
    for (const auto& r : rows) scale = std::max(scale, std::abs(r.rhs));
    if (-t.cost(ncols) > opt.feas_tol * scale) return out;  // infeasible

    for (std::size_t j = art_begin; j < ncols; ++j) allowed[j] = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (t.basis()[i] < art_begin) continue;
      std::size_t best = ncols;
      double mag = opt.pivot_tol;
      for (std::size_t j = 0; j < art_begin; ++j) {
        if (std::abs(t.at(i, j)) > mag) {
          mag = std::abs(t.at(i, j));
          best = j;
        }
      }
      if (best != ncols) t.pivot(i, best);
      // Otherwise the row is redundant; its artificial stays basic at zero.
    }
  }

  // Phase 2 reduced costs.
  for (std::size_t j = 0; j <= ncols; ++j) t.cost(j) = 0.0;
  for (std::size_t j = 0; j < ncols; ++j) t.cost(j) = cost[j];
  for (std::size_t i = 0; i < m; ++i) {
    const double cb = cost[t.basis()[i]];
    if (cb == 0.0) continue;
    for (std::size_t j = 0; j < ncols; ++j) t.cost(j) -= cb * t.at(i, j);
    t.cost(ncols) -= cb * t.rhs(i);
  }
  for (std::size_t i = 0; i < m; ++i) t.cost(t.basis()[i]) = 0.0;

  if (detail::run_phase(t, allowed, opt, out.iterations) == detail::PhaseResult::unbounded) {
    out.status = Status::unbounded;
    return out;
  }

  std::vector<double> y(ncols, 0.0);
  for (std::size_t i = 0; i < m; ++i) y[t.basis()[i]] = std::max(0.0, t.rhs(i));
  out.x.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double v = map[j].shift;
    for (auto [col, s] : map[j].cols) v += s * y[col];
    out.x[j] = v;
  }
  out.objective = objective_at(p, out.x);
  out.status = Status::optimal;
  return out;
}

}  // namespace mixedctrl::lp
