// Linear-Gaussian SMPC with polytopic obstacles, over open-loop control
// sequences.
//
// Indexing: x_0 is the (given) initial state, u_0..u_{N-1} the controls and
// x_1..x_N the predicted states that the obstacle chance constraint covers.
// The joint violation probability is bounded by
//
//   sum_{i,k} min_j Phi((h_ij xbar_k - g_ij) / s_ijk),   s_ijk = sqrt(h_ij S_k h_ij^T)
//
// (union bound over obstacles and steps, one facet per obstacle), and Phi is
// replaced by the maximum of chords of a convex piecewise-linear
// over-approximation on y <= 0. The resulting inner problem is a MILP with
// one binary per (obstacle, facet, step).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mixedctrl/core.hpp"
#include "mixedctrl/lp.hpp"
#include "mixedctrl/milp.hpp"
#include "mixedctrl/stats.hpp"

namespace mixedctrl::smpc {

inline double normal_cdf(double y) { return 0.5 * std::erfc(-y / std::numbers::sqrt2); }

/// Obstacle interior {x : H x >= g} (componentwise).
struct Obstacle {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;

  std::size_t rows() const { return static_cast<std::size_t>(H.rows()); }
};

struct StateBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct SmpcModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd sigma_w;
  Eigen::MatrixXd P;  // control polytope P u <= q
  Eigen::VectorXd q;
  std::vector<Obstacle> obstacles;
  std::size_t horizon = 1;
  Eigen::VectorXd x0;
  Eigen::MatrixXd sigma0;  // empty means zero initial covariance
  std::optional<Eigen::VectorXd> terminal;
  std::optional<StateBox> state_box;
  double risk_bound = 0.01;

  std::size_t nx() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t nu() const { return static_cast<std::size_t>(B.cols()); }

  void validate() const {
    const auto n = A.rows();
    if (n == 0 || A.cols() != n) throw InvalidInput("SmpcModel: A must be square and nonempty");
    if (B.rows() != n || B.cols() == 0) throw InvalidInput("SmpcModel: B has wrong shape");
    if (sigma_w.rows() != n || sigma_w.cols() != n)
      throw InvalidInput("SmpcModel: sigma_w has wrong shape");
    if ((sigma_w - sigma_w.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw InvalidInput("SmpcModel: sigma_w must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_w);
    if (es.eigenvalues().minCoeff() < -1e-12) throw InvalidInput("SmpcModel: sigma_w must be PSD");
    if (P.cols() != B.cols() || P.rows() != q.size())
      throw InvalidInput("SmpcModel: control polytope has wrong shape");
    if (x0.size() != n) throw InvalidInput("SmpcModel: x0 has wrong size");
    if (sigma0.size() != 0 && (sigma0.rows() != n || sigma0.cols() != n))
      throw InvalidInput("SmpcModel: sigma0 has wrong shape");
    if (terminal && terminal->size() != n) throw InvalidInput("SmpcModel: terminal has wrong size");
    if (state_box && (state_box->lower.size() != n || state_box->upper.size() != n))
      throw InvalidInput("SmpcModel: state box has wrong size");
    if (horizon == 0) throw InvalidInput("SmpcModel: horizon must be positive");
    if (!(risk_bound > 0.0 && risk_bound < 0.5))
      throw InvalidInput("SmpcModel: risk bound must lie in (0, 0.5)");
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      const auto& o = obstacles[i];
      if (o.H.rows() == 0)
        throw InvalidInput("SmpcModel: obstacle " + std::to_string(i) + " has no facets");
      if (o.H.cols() != n || o.g.size() != o.H.rows())
        throw InvalidInput("SmpcModel: obstacle " + std::to_string(i) + " has wrong shape");
    }
  }
};

/// Covariance of x_k (k = 0 is the initial state).
inline Eigen::MatrixXd propagate_covariance(const SmpcModel& m, std::size_t k) {
  if (k > m.horizon) throw InvalidInput("propagate_covariance: step beyond horizon");
  const auto n = m.A.rows();
  Eigen::MatrixXd s = m.sigma0.size() ? m.sigma0 : Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < k; ++j) s = m.A * s * m.A.transpose() + m.sigma_w;
  return 0.5 * (s + s.transpose());
}

/// Convex piecewise-linear over-approximation of the standard normal CDF
/// on [y_1, y_{L+1}] (all breakpoints <= 0), built from chords.
class PwlCdf {
 public:
  PwlCdf() = default;

  const std::vector<double>& breakpoints() const noexcept { return y_; }
  const std::vector<double>& slopes() const noexcept { return a_; }
  const std::vector<double>& intercepts() const noexcept { return b_; }
  std::size_t lines() const noexcept { return a_.size(); }

  /// max(0, max_l a_l y + b_l), and 0 left of the first breakpoint.
  double operator()(double y) const {
    if (y < y_.front()) return 0.0;
    double v = 0.0;
    for (std::size_t l = 0; l < a_.size(); ++l) v = std::max(v, a_[l] * y + b_[l]);
    return v;
  }

 private:
  friend PwlCdf build_pwl_cdf(std::vector<double> breakpoints);
  std::vector<double> y_, a_, b_;
};

inline PwlCdf build_pwl_cdf(std::vector<double> breakpoints) {
  if (breakpoints.size() < 2) throw InvalidInput("build_pwl_cdf: need at least two breakpoints");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!std::isfinite(breakpoints[i]) || breakpoints[i] > 0.0)
      throw InvalidInput("build_pwl_cdf: breakpoints must be finite and <= 0");
    if (i > 0 && !(breakpoints[i] > breakpoints[i - 1]))
      throw InvalidInput("build_pwl_cdf: breakpoints must be strictly increasing");
  }
  PwlCdf out;
  out.y_ = std::move(breakpoints);
  for (std::size_t l = 0; l + 1 < out.y_.size(); ++l) {
    const double y0 = out.y_[l], y1 = out.y_[l + 1];
    const double f0 = normal_cdf(y0), f1 = normal_cdf(y1);
    const double a = (f1 - f0) / (y1 - y0);
    out.a_.push_back(a);
    out.b_.push_back(f0 - a * y0);
  }
  return out;
}

/// L uniform chords on [lo, hi].
inline std::vector<double> uniform_breakpoints(std::size_t lines = 24, double lo = -6.0,
                                               double hi = 0.0) {
  std::vector<double> y(lines + 1);
  for (std::size_t i = 0; i <= lines; ++i)
    y[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(lines);
  return y;
}

/// An open-loop plan with its exact (under the model's risk bound) costs.
struct ControlPlan {
  std::vector<Eigen::VectorXd> controls;     // u_0 .. u_{N-1}
  std::vector<Eigen::VectorXd> mean_states;  // xbar_0 .. xbar_N
  Eigen::MatrixXd risk;                      // (obstacle, step) bounds delta_ik, k = 1..N
  double total_risk = 0.0;
  double cost = 0.0;

  bool operator==(const ControlPlan& o) const {
    if (controls.size() != o.controls.size()) return false;
    for (std::size_t k = 0; k < controls.size(); ++k)
      if (controls[k] != o.controls[k]) return false;
    return true;
  }
};

inline std::vector<Eigen::VectorXd> mean_trajectory(const SmpcModel& m,
                                                    const std::vector<Eigen::VectorXd>& u) {
  std::vector<Eigen::VectorXd> x{m.x0};
  for (const auto& uk : u) x.push_back(m.A * x.back() + m.B * uk);
  return x;
}

namespace detail {

// Per-(obstacle, facet, step) standard deviation of h_ij x_k.
inline std::vector<std::vector<std::vector<double>>> facet_stddevs(const SmpcModel& m) {
  std::vector<Eigen::MatrixXd> cov;
  for (std::size_t k = 0; k <= m.horizon; ++k) cov.push_back(propagate_covariance(m, k));
  std::vector<std::vector<std::vector<double>>> s(m.obstacles.size());
  for (std::size_t i = 0; i < m.obstacles.size(); ++i) {
    const auto& o = m.obstacles[i];
    s[i].resize(o.rows());
    for (std::size_t j = 0; j < o.rows(); ++j) {
      s[i][j].resize(m.horizon + 1);
      const Eigen::RowVectorXd h = o.H.row(static_cast<Eigen::Index>(j));
      for (std::size_t k = 0; k <= m.horizon; ++k)
        s[i][j][k] = std::sqrt(std::max(0.0, (h * cov[k] * h.transpose())(0, 0)));
    }
  }
  return s;
}

inline constexpr double kDeterministicStd = 1e-12;

// Risk of one facet given its mean margin and stddev.
inline double facet_risk(const PwlCdf& pwl, double margin, double stddev) {
  if (stddev <= kDeterministicStd) return margin >= 0.0 ? 1.0 : 0.0;
  return pwl(margin / stddev);
}

}  // namespace detail

/// Recomputes the mean trajectory, per-(obstacle, step) risk bounds, total
/// Boole-bound risk and L1 cost of a control sequence.
inline ControlPlan evaluate_plan(const SmpcModel& m, const PwlCdf& pwl,
                                 std::vector<Eigen::VectorXd> controls) {
  ControlPlan plan;
  plan.controls = std::move(controls);
  plan.mean_states = mean_trajectory(m, plan.controls);
  for (const auto& u : plan.controls) plan.cost += u.cwiseAbs().sum();
  const auto s = detail::facet_stddevs(m);
  plan.risk = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.obstacles.size()),
                                    static_cast<Eigen::Index>(m.horizon));
  for (std::size_t i = 0; i < m.obstacles.size(); ++i) {
    const auto& o = m.obstacles[i];
    for (std::size_t k = 1; k <= m.horizon; ++k) {
      double best = 1.0;
      for (std::size_t j = 0; j < o.rows(); ++j) {
        const double margin =
            o.H.row(static_cast<Eigen::Index>(j)).dot(plan.mean_states[k]) - o.g(static_cast<Eigen::Index>(j));
        best = std::min(best, detail::facet_risk(pwl, margin, s[i][j][k]));
      }
      plan.risk(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k - 1)) = best;
      plan.total_risk += best;
    }
  }
  return plan;
}

/// (obstacle, step) pairs whose mean state lies inside the obstacle.
inline std::vector<std::pair<std::size_t, std::size_t>> mean_inside_obstacles(
    const SmpcModel& m, const ControlPlan& plan) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < m.obstacles.size(); ++i) {
    const auto& o = m.obstacles[i];
    for (std::size_t k = 1; k < plan.mean_states.size(); ++k) {
      const Eigen::VectorXd margin = o.H * plan.mean_states[k] - o.g;
      if (margin.minCoeff() >= 0.0) out.emplace_back(i, k);
    }
  }
  return out;
}

/// CSV dump of a plan, one row per step k = 0..N: the control applied at k
/// (blank at N), the mean state and the risk bound summed over obstacles.
inline void write_plan_csv(std::ostream& os, const ControlPlan& plan) {
  if (plan.mean_states.empty()) throw InvalidInput("write_plan_csv: empty plan");
  const auto nu = plan.controls.empty() ? 0 : plan.controls.front().size();
  const auto nx = plan.mean_states.front().size();
  const auto old = os.precision(17);
  os << "step";
  for (Eigen::Index d = 0; d < nu; ++d) os << ",u" << d;
  for (Eigen::Index d = 0; d < nx; ++d) os << ",x" << d;
  os << ",delta\n";
  for (std::size_t k = 0; k < plan.mean_states.size(); ++k) {
    os << k;
    for (Eigen::Index d = 0; d < nu; ++d) {
      os << ',';
      if (k < plan.controls.size()) os << plan.controls[k](d);
    }
    for (Eigen::Index d = 0; d < nx; ++d) os << ',' << plan.mean_states[k](d);
    const double delta =
        k == 0 || plan.risk.cols() == 0 ? 0.0 : plan.risk.col(static_cast<Eigen::Index>(k - 1)).sum();
    os << ',' << delta << '\n';
  }
  os.precision(old);
}

/// Variable layout of the inner MILP.
struct InnerMilp {
  milp::MilpProblem problem;
  std::size_t nu = 0, nx = 0, horizon = 0;
  std::vector<std::size_t> u;      // u[k * nu + d]
  std::vector<std::size_t> v;      // slack for |u|
  std::vector<std::size_t> x;      // xbar_k, k = 1..N: x[(k-1) * nx + c]
  std::vector<std::size_t> delta;  // (obstacle, step) pairs that carry risk
  struct Selector {
    std::size_t obstacle, facet, step, var;
  };
  std::vector<Selector> z;  // in binary order
};

struct InnerMilpOptions {
  /// Drop (obstacle, step) pairs that some facet keeps below the first
  /// breakpoint for every reachable mean, and PWL lines that cannot be
  /// active on a facet's reachable range. Exact with respect to
  /// evaluate_plan.
  bool prune = true;
};

/// Per-step bounds on the mean state over all trajectories allowed by the
/// dynamics, control polytope, state box and terminal constraint.
struct ReachBounds {
  std::vector<Eigen::VectorXd> lower;  // xbar_k, k = 0..N
  std::vector<Eigen::VectorXd> upper;
  std::vector<Eigen::VectorXd> u_lower;  // u_k, k = 0..N-1
  std::vector<Eigen::VectorXd> u_upper;
};

namespace detail {

inline constexpr std::size_t kNoVar = static_cast<std::size_t>(-1);

struct TrajectoryLp {
  lp::LpProblem lp;
  std::vector<std::size_t> u, x;
};

// Variables u_0..u_{N-1}, xbar_1..xbar_N with mean dynamics, the control
// polytope and (optionally) the terminal equality.
inline TrajectoryLp trajectory_lp(const SmpcModel& m, const ReachBounds* bounds, bool terminal) {
  TrajectoryLp out;
  auto& p = out.lp;
  const std::size_t N = m.horizon, nu = m.nu(), nx = m.nx();
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t d = 0; d < nu; ++d) {
      const auto di = static_cast<Eigen::Index>(d);
      out.u.push_back(bounds ? p.add_variable(bounds->u_lower[k](di), bounds->u_upper[k](di), 0.0)
                             : p.add_variable(-lp::kInf, lp::kInf, 0.0));
    }
  for (std::size_t k = 1; k <= N; ++k)
    for (std::size_t c = 0; c < nx; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      double lo = -lp::kInf, hi = lp::kInf;
      if (bounds) {
        lo = bounds->lower[k](ci);
        hi = bounds->upper[k](ci);
      } else if (m.state_box) {
        lo = m.state_box->lower(ci);
        hi = m.state_box->upper(ci);
      }
      out.x.push_back(p.add_variable(lo, hi, 0.0));
    }
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t r = 0; r < nx; ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      lp::Terms t{{out.x[k * nx + r], 1.0}};
      double rhs = 0.0;
      for (std::size_t c = 0; c < nx; ++c) {
        const double a = m.A(ri, static_cast<Eigen::Index>(c));
        if (a == 0.0) continue;
        if (k == 0) rhs += a * m.x0(static_cast<Eigen::Index>(c));
        else t.push_back({out.x[(k - 1) * nx + c], -a});
      }
      for (std::size_t d = 0; d < nu; ++d) {
        const double b = m.B(ri, static_cast<Eigen::Index>(d));
        if (b != 0.0) t.push_back({out.u[k * nu + d], -b});
      }
      p.add_row(std::move(t), lp::RowSense::equal, rhs);
    }
  }
  for (std::size_t k = 0; k < N; ++k)
    for (Eigen::Index r = 0; r < m.P.rows(); ++r) {
      lp::Terms t;
      for (std::size_t d = 0; d < nu; ++d) {
        const double a = m.P(r, static_cast<Eigen::Index>(d));
        if (a != 0.0) t.push_back({out.u[k * nu + d], a});
      }
      p.add_row(std::move(t), lp::RowSense::less_equal, m.q(r));
    }
  if (terminal && m.terminal)
    for (std::size_t c = 0; c < nx; ++c)
      p.add_row({{out.x[(N - 1) * nx + c], 1.0}}, lp::RowSense::equal,
                (*m.terminal)(static_cast<Eigen::Index>(c)));
  return out;
}

}  // namespace detail

/// Tight per-coordinate mean-state bounds, one LP per (step, coordinate,
/// direction). Throws Infeasible with the failing stage if no trajectory
/// exists.
inline ReachBounds reachable_bounds(const SmpcModel& m) {
  m.validate();
  auto base = detail::trajectory_lp(m, nullptr, true);
  if (lp::solve_lp(base.lp).status == lp::Status::infeasible) {
    auto free = detail::trajectory_lp(m, nullptr, false);
    if (m.terminal && lp::solve_lp(free.lp).status != lp::Status::infeasible)
      throw Infeasible("SMPC: terminal mean-state constraint at step " + std::to_string(m.horizon) +
                       " is unreachable under the control limits and state box");
    // Find the first step the state box cuts off.
    for (std::size_t k = 1; k <= m.horizon; ++k) {
      SmpcModel prefix = m;
      prefix.horizon = k;
      prefix.terminal.reset();
      if (lp::solve_lp(detail::trajectory_lp(prefix, nullptr, false).lp).status ==
          lp::Status::infeasible)
        throw Infeasible("SMPC: state box excludes every mean trajectory at step " +
                         std::to_string(k));
    }
    throw Infeasible("SMPC: control polytope is empty");
  }
  ReachBounds out;
  const std::size_t N = m.horizon, nx = m.nx(), nu = m.nu();
  auto extreme = [&](std::size_t var, int dir) {
    auto& p = base.lp;
    std::fill(p.objective.begin(), p.objective.end(), 0.0);
    p.objective[var] = 1.0;
    p.sense = dir > 0 ? lp::Sense::maximize : lp::Sense::minimize;
    const auto sol = lp::solve_lp(p);
    return sol.status == lp::Status::optimal ? sol.objective : dir * lp::kInf;
  };
  out.lower.assign(N + 1, m.x0);
  out.upper.assign(N + 1, m.x0);
  out.u_lower.assign(N, Eigen::VectorXd(nu));
  out.u_upper.assign(N, Eigen::VectorXd(nu));
  for (std::size_t k = 1; k <= N; ++k)
    for (std::size_t c = 0; c < nx; ++c) {
      out.lower[k](static_cast<Eigen::Index>(c)) = extreme(base.x[(k - 1) * nx + c], -1);
      out.upper[k](static_cast<Eigen::Index>(c)) = extreme(base.x[(k - 1) * nx + c], 1);
    }
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t d = 0; d < nu; ++d) {
      out.u_lower[k](static_cast<Eigen::Index>(d)) = extreme(base.u[k * nu + d], -1);
      out.u_upper[k](static_cast<Eigen::Index>(d)) = extreme(base.u[k * nu + d], 1);
    }
  return out;
}

/// Emits the inner MILP for multiplier lambda.
inline InnerMilp build_inner_milp(const SmpcModel& m, const PwlCdf& pwl, double lambda,
                                  const ReachBounds& reach, InnerMilpOptions opt = {}) {
  m.validate();
  if (!(lambda >= 0.0)) throw InvalidInput("build_inner_milp: lambda must be nonnegative");
  if (pwl.lines() == 0) throw InvalidInput("build_inner_milp: empty PWL approximation");

  InnerMilp out;
  const std::size_t N = m.horizon, nu = m.nu(), nx = m.nx();
  out.nu = nu;
  out.nx = nx;
  out.horizon = N;

  auto traj = detail::trajectory_lp(m, &reach, true);
  out.problem.lp = std::move(traj.lp);
  out.u = std::move(traj.u);
  out.x = std::move(traj.x);
  auto& p = out.problem.lp;
  p.sense = lp::Sense::minimize;

  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t d = 0; d < nu; ++d) {
      const std::size_t vi = p.add_variable(0.0, lp::kInf, 1.0);
      out.v.push_back(vi);
      const std::size_t ui = out.u[k * nu + d];
      p.add_row({{vi, 1.0}, {ui, -1.0}}, lp::RowSense::greater_equal, 0.0);
      p.add_row({{vi, 1.0}, {ui, 1.0}}, lp::RowSense::greater_equal, 0.0);
    }

  const auto s = detail::facet_stddevs(m);
  const double y_first = pwl.breakpoints().front();
  p.objective_offset = -lambda * m.risk_bound;

  for (std::size_t i = 0; i < m.obstacles.size(); ++i) {
    const auto& o = m.obstacles[i];
    const std::size_t R = o.rows();
    if (R == 0) throw InvalidInput("build_inner_milp: obstacle " + std::to_string(i) + " has no facets");
    for (std::size_t k = 1; k <= N; ++k) {
      const auto& lo = reach.lower[k];
      const auto& hi = reach.upper[k];
      // Range of h xbar - g over the reachable box, per facet.
      std::vector<double> mlo(R), mhi(R);
      bool safe = false;
      for (std::size_t j = 0; j < R; ++j) {
        const auto ji = static_cast<Eigen::Index>(j);
        double a = -o.g(ji), b = -o.g(ji);
        for (std::size_t c = 0; c < nx; ++c) {
          const auto ci = static_cast<Eigen::Index>(c);
          const double hc = o.H(ji, ci);
          if (hc == 0.0) continue;
          a += std::min(hc * lo(ci), hc * hi(ci));
          b += std::max(hc * lo(ci), hc * hi(ci));
        }
        if (!std::isfinite(b))
          throw InvalidInput("build_inner_milp: obstacle " + std::to_string(i) +
                             " needs bounded states; add a state box or bound the controls");
        mlo[j] = a;
        mhi[j] = b;
        const double sd = s[i][j][k];
        if (sd <= detail::kDeterministicStd ? b < 0.0 : b / sd < y_first) safe = true;
      }
      if (opt.prune && safe) continue;

      const std::size_t di = p.add_variable(0.0, lp::kInf, lambda);
      out.delta.push_back(di);
      lp::Terms select;
      for (std::size_t j = 0; j < R; ++j) {
        const std::size_t zi = p.add_variable(0.0, 1.0, 0.0);
        out.problem.binaries.push_back(zi);
        out.z.push_back({i, j, k, zi});
        select.push_back({zi, 1.0});

        const auto ji = static_cast<Eigen::Index>(j);
        const double g = o.g(ji);
        const double sd = s[i][j][k];
        auto facet_terms = [&](double scale) {
          lp::Terms t;
          for (std::size_t c = 0; c < nx; ++c) {
            const double hc = o.H(ji, static_cast<Eigen::Index>(c));
            if (hc != 0.0) t.push_back({out.x[(k - 1) * nx + c], scale * hc});
          }
          return t;
        };
        if (sd <= detail::kDeterministicStd) {
          // Deterministic facet: selecting it forces the mean outside it.
          auto t = facet_terms(1.0);
          t.push_back({zi, -std::max(0.0, mhi[j])});
          p.add_row(std::move(t), lp::RowSense::less_equal, g);
          continue;
        }
        const double ylo = mlo[j] / sd, yhi = mhi[j] / sd;
        for (std::size_t l = 0; l < pwl.lines(); ++l) {
          const double a = pwl.slopes()[l];
          const double b = pwl.intercepts()[l];
          const double seg_lo = l == 0 ? -lp::kInf : pwl.breakpoints()[l];
          const double seg_hi = l + 1 == pwl.lines() ? lp::kInf : pwl.breakpoints()[l + 1];
          if (opt.prune && (seg_hi < ylo || seg_lo > yhi || a * yhi + b <= 0.0)) continue;
          // (a/sd)(h xbar - g) + b <= delta + M z, with M the largest left side.
          auto t = facet_terms(a / sd);
          t.push_back({di, -1.0});
          t.push_back({zi, -std::max(0.0, a * yhi + b)});
          p.add_row(std::move(t), lp::RowSense::less_equal, a * g / sd - b);
        }
      }
      p.add_row(std::move(select), lp::RowSense::less_equal, static_cast<double>(R) - 1.0);
    }
  }

  // Rounding: per (obstacle, step), enforce the facet whose relaxed z is
  // smallest and release the others.
  out.problem.heuristic = [sel = out.z](const std::vector<double>& x)
      -> std::optional<std::vector<double>> {
    std::vector<double> assign(sel.size(), 1.0);
    std::size_t begin = 0;
    while (begin < sel.size()) {
      std::size_t end = begin;
      std::size_t best = begin;
      double best_score = std::numeric_limits<double>::infinity();
      while (end < sel.size() && sel[end].obstacle == sel[begin].obstacle &&
             sel[end].step == sel[begin].step) {
        const double score = x[sel[end].var];
        if (score < best_score) {
          best_score = score;
          best = end;
        }
        ++end;
      }
      assign[best] = 0.0;
      begin = end;
    }
    return assign;
  };
  return out;
}

inline InnerMilp build_inner_milp(const SmpcModel& m, const PwlCdf& pwl, double lambda,
                                  InnerMilpOptions opt = {}) {
  return build_inner_milp(m, pwl, lambda, reachable_bounds(m), opt);
}

/// Lagrangian oracle: min sum |u_k|_1 + lambda (risk bound - V).
class SmpcOracle {
 public:
  using policy_type = ControlPlan;

  SmpcOracle(SmpcModel model, PwlCdf pwl, milp::MilpConfig cfg = {})
      : model_(std::move(model)), pwl_(std::move(pwl)), cfg_(cfg) {
    model_.validate();
  }

  std::size_t k_constraints() const noexcept { return 1; }

  PureCandidate<ControlPlan> query(const DualVector& lambda) {
    if (lambda.k() != 1) throw InvalidInput("SmpcOracle: expects a scalar multiplier");
    if (!reach_) reach_ = reachable_bounds(model_);
    auto inner = build_inner_milp(model_, pwl_, lambda[0], *reach_);
    auto sol = milp::solve_milp(inner.problem, cfg_);
    last_nodes_ = sol.nodes;
    if (sol.status == milp::Status::infeasible)
      throw Infeasible("SMPC: no mean trajectory clears the zero-variance obstacle facets");
    if (sol.status == milp::Status::unbounded) throw Error("SMPC inner MILP unbounded");
    if (sol.x.empty()) throw Error("SMPC inner MILP: node budget exhausted without incumbent");
    std::vector<Eigen::VectorXd> u(model_.horizon, Eigen::VectorXd(inner.nu));
    for (std::size_t k = 0; k < model_.horizon; ++k)
      for (std::size_t d = 0; d < inner.nu; ++d)
        u[k](static_cast<Eigen::Index>(d)) = clean(sol.x[inner.u[k * inner.nu + d]]);
    auto plan = evaluate_plan(model_, pwl_, std::move(u));
    CostVector cost(plan.cost, {plan.total_risk});
    return {std::move(plan), std::move(cost)};
  }

  CostVector evaluate(const ControlPlan& plan) const {
    const auto e = evaluate_plan(model_, pwl_, plan.controls);
    return CostVector(e.cost, {e.total_risk});
  }

  const SmpcModel& model() const noexcept { return model_; }
  const PwlCdf& pwl() const noexcept { return pwl_; }
  std::size_t last_node_count() const noexcept { return last_nodes_; }

 private:
  // Snap simplex round-off so that plans are reproducible bit for bit.
  static double clean(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }

  SmpcModel model_;
  PwlCdf pwl_;
  milp::MilpConfig cfg_;
  std::optional<ReachBounds> reach_;
  std::size_t last_nodes_ = 0;
};

struct RiskEstimate {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double rate = 0.0;
  stats::Interval ci;  // 99% Wilson interval
};

/// Empirical joint obstacle-violation probability of an open-loop plan.
inline RiskEstimate estimate_risk_mc(const SmpcModel& m, const ControlPlan& plan,
                                     std::uint64_t seed, std::size_t n) {
  if (n == 0) throw InvalidInput("estimate_risk_mc: need at least one sample");
  const auto nx = m.A.rows();
  auto sqrt_psd = [](const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    return Eigen::MatrixXd(es.eigenvectors() *
                           es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
  };
  const Eigen::MatrixXd Lw = sqrt_psd(m.sigma_w);
  const Eigen::MatrixXd L0 = m.sigma0.size() ? sqrt_psd(m.sigma0) : Eigen::MatrixXd::Zero(nx, nx);
  const bool random_start = m.sigma0.size() && L0.cwiseAbs().maxCoeff() > 0.0;

  std::vector<char> hit(n, 0);
  stats::parallel_samples(seed, n, [&](stats::Rng& rng, std::size_t idx) {
    Eigen::VectorXd xi(nx);
    Eigen::VectorXd x = m.x0;
    if (random_start) {
      for (Eigen::Index c = 0; c < nx; ++c) xi(c) = rng.normal();
      x += L0 * xi;
    }
    for (std::size_t k = 0; k < plan.controls.size(); ++k) {
      for (Eigen::Index c = 0; c < nx; ++c) xi(c) = rng.normal();
      x = m.A * x + m.B * plan.controls[k] + Lw * xi;
      for (const auto& o : m.obstacles) {
        if (((o.H * x - o.g).array() >= 0.0).all()) {
          hit[idx] = 1;
          return;
        }
      }
    }
  });
  RiskEstimate out;
  out.samples = n;
  for (char h : hit) out.violations += static_cast<std::size_t>(h);
  out.rate = static_cast<double>(out.violations) / static_cast<double>(n);
  out.ci = stats::wilson_interval(out.violations, n);
  return out;
}

}  // namespace mixedctrl::smpc
