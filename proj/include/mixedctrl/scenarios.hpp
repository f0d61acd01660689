// Problem instances: the explicit finite-set oracle, grid path planning and
// EDL targeting as chance-constrained MDPs, and a corridor SMPC instance.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixedctrl/ccmdp.hpp"
#include "mixedctrl/core.hpp"
#include "mixedctrl/smpc.hpp"
#include "mixedctrl/stats.hpp"

namespace mixedctrl::scenarios {

// ---------------------------------------------------------------------------
// Finite set of cost vectors
// ---------------------------------------------------------------------------

/// The feasible cost set given as an explicit list. Policies are list indices.
class FiniteSetOracle {
 public:
  using policy_type = std::size_t;

  explicit FiniteSetOracle(std::vector<CostVector> points) : points_(std::move(points)) {
    if (points_.empty()) throw InvalidInput("FiniteSetOracle: empty point set");
    for (const auto& p : points_) {
      if (p.k() != points_.front().k() || p.k() == 0)
        throw InvalidInput("FiniteSetOracle: inconsistent cost-vector dimensions");
      if (!std::isfinite(p.c0)) throw InvalidInput("FiniteSetOracle: non-finite cost");
      for (double c : p.rest)
        if (!std::isfinite(c)) throw InvalidInput("FiniteSetOracle: non-finite cost");
    }
  }

  std::size_t k_constraints() const noexcept { return points_.front().k(); }
  const std::vector<CostVector>& points() const noexcept { return points_; }

  /// Lowest-index minimizer of c0 + lambda . c_rest (V shifts every point
  /// equally, so it does not affect the argmin).
  PureCandidate<std::size_t> query(const DualVector& lambda) const {
    const auto vals = scores(lambda);
    const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    return {best, points_[best]};
  }

  /// Every minimizer, within rounding of the minimum.
  std::vector<PureCandidate<std::size_t>> query_all(const DualVector& lambda) const {
    const auto vals = scores(lambda);
    const double lo = *std::min_element(vals.begin(), vals.end());
    const double tol = 1e-12 * std::max(1.0, std::abs(lo));
    std::vector<PureCandidate<std::size_t>> out;
    for (std::size_t i = 0; i < vals.size(); ++i)
      if (vals[i] <= lo + tol) out.push_back({i, points_[i]});
    return out;
  }

  CostVector evaluate(std::size_t index) const { return points_.at(index); }

 private:
  std::vector<double> scores(const DualVector& lambda) const {
    if (lambda.k() != k_constraints()) throw InvalidInput("FiniteSetOracle: multiplier dimension");
    std::vector<double> vals;
    vals.reserve(points_.size());
    for (const auto& p : points_) {
      double s = p.c0;
      for (std::size_t i = 0; i < p.k(); ++i) s += lambda[i] * p.rest[i];
      vals.push_back(s);
    }
    return vals;
  }

  std::vector<CostVector> points_;
};

struct FiniteSetProblem {
  FiniteSetOracle oracle;
  Bounds bounds;
};

/// Two options: cost 20 at 0.5% risk or cost 10 at 1.5% risk, with a 1% bound.
inline FiniteSetProblem toy_problem() {
  return {FiniteSetOracle({CostVector(20.0, {0.005}), CostVector(10.0, {0.015})}), Bounds{0.01}};
}

// ---------------------------------------------------------------------------
// Grid maps
// ---------------------------------------------------------------------------

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Occupancy grid; row y of the text form is line y.
struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<char> blocked;  // width * height, row-major in y

  GridMap() = default;
  GridMap(int w, int h) : width(w), height(h), blocked(static_cast<std::size_t>(w) * h, 0) {
    if (w <= 0 || h <= 0) throw InvalidInput("GridMap: dimensions must be positive");
  }

  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  Cell cell(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(width)),
            static_cast<int>(i / static_cast<std::size_t>(width))};
  }
  std::size_t cells() const { return blocked.size(); }
  bool is_blocked(int x, int y) const { return blocked[index(x, y)] != 0; }
  void block_rect(int x0, int y0, int x1, int y1, bool value = true) {
    for (int y = std::max(0, y0); y <= std::min(height - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(width - 1, x1); ++x)
        blocked[index(x, y)] = value ? 1 : 0;
  }
  std::string to_text() const {
    std::string s;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) s += is_blocked(x, y) ? '#' : '.';
      s += '\n';
    }
    return s;
  }
};

/// '.' is free, '#' is blocked; all rows must have equal length.
inline GridMap parse_grid_map(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw InvalidInput("grid map: no rows");
  GridMap m(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()));
  for (int y = 0; y < m.height; ++y) {
    const auto& r = rows[static_cast<std::size_t>(y)];
    if (static_cast<int>(r.size()) != m.width)
      throw InvalidInput("grid map: row " + std::to_string(y) + " has a different length");
    for (int x = 0; x < m.width; ++x) {
      const char c = r[static_cast<std::size_t>(x)];
      if (c == '#') m.blocked[m.index(x, y)] = 1;
      else if (c != '.')
        throw InvalidInput(std::string("grid map: unexpected character '") + c + "'");
    }
  }
  return m;
}

inline GridMap load_grid_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("grid map: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_grid_map(ss.str());
}

/// Seeded random circular hazards.
inline GridMap synthetic_hazard_map(int width, int height, int blobs, double min_radius,
                                    double max_radius, std::uint64_t seed) {
  GridMap m(width, height);
  stats::Rng rng(stats::derive_seed(seed, 0));
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform() * width, cy = rng.uniform() * height;
    const double r = min_radius + (max_radius - min_radius) * rng.uniform();
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.blocked[m.index(x, y)] = 1;
  }
  return m;
}

/// 4-connected BFS step counts from `from` over free cells; -1 if unreachable.
inline std::vector<int> bfs_distances(const GridMap& m, Cell from) {
  std::vector<int> d(m.cells(), -1);
  if (!m.inside(from.x, from.y) || m.is_blocked(from.x, from.y)) return d;
  std::queue<Cell> q;
  d[m.index(from.x, from.y)] = 0;
  q.push(from);
  constexpr std::array<std::array<int, 2>, 4> nb{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    for (const auto& [dx, dy] : nb) {
      const int x = c.x + dx, y = c.y + dy;
      if (!m.inside(x, y) || m.is_blocked(x, y) || d[m.index(x, y)] >= 0) continue;
      d[m.index(x, y)] = d[m.index(c.x, c.y)] + 1;
      q.push({x, y});
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Discretized Gaussian noise
// ---------------------------------------------------------------------------

struct Offset {
  int dx = 0;
  int dy = 0;
  double p = 0.0;
};

/// Lattice offsets within Mahalanobis distance 4 of the origin, weighted by
/// the density and renormalized. A zero covariance is a point mass.
inline std::vector<Offset> gaussian_offsets(const Eigen::Matrix2d& cov) {
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw InvalidInput("gaussian_offsets: covariance must be symmetric");
  if (cov.cwiseAbs().maxCoeff() == 0.0) return {{0, 0, 1.0}};
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw InvalidInput("gaussian_offsets: covariance must be positive definite or zero");
  const Eigen::Matrix2d inv = cov.inverse();
  const int r = static_cast<int>(std::ceil(4.0 * std::sqrt(es.eigenvalues().maxCoeff())));
  std::vector<Offset> out;
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const Eigen::Vector2d o(dx, dy);
      const double m2 = o.dot(inv * o);
      if (m2 > 16.0) continue;
      const double w = std::exp(-0.5 * m2);
      out.push_back({dx, dy, w});
      total += w;
    }
  for (auto& o : out) o.p /= total;
  return out;
}

namespace detail {

// Adds the clipped, merged noise distribution around `aim` as successors.
inline void add_noise_successors(ccmdp::MdpBuilder& b, const GridMap& m, Cell aim,
                                 const std::vector<Offset>& noise) {
  std::map<std::size_t, double> mass;
  for (const auto& o : noise) {
    const int x = std::clamp(aim.x + o.dx, 0, m.width - 1);
    const int y = std::clamp(aim.y + o.dy, 0, m.height - 1);
    mass[m.index(x, y)] += o.p;
  }
  for (const auto& [s, p] : mass) b.add_successor(s, p);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Grid path planning
// ---------------------------------------------------------------------------

struct GridParams {
  GridMap map;
  std::size_t horizon = 15;
  Cell start{};
  Cell goal{};
  int max_step = 3;           // |u|_2 <= max_step, integer displacements
  double sigma = 1.0;         // per-axis noise standard deviation, in cells
  double risk_bound = 0.02;
  double miss_penalty = 10.0; // per unit of remaining distance at the horizon
};

/// Internal layout: each decision step t becomes two MDP steps. At step 2t
/// the state is the current cell and the action picks a displacement, which
/// moves deterministically to the aim cell; at step 2t+1 the noise moves the
/// aim cell. Step 2T charges the miss penalty, then everything enters a
/// single end state. One extra state per step marks "goal reached".
struct GridScenario {
  GridParams params;
  ccmdp::Mdp mdp;
  std::vector<std::array<int, 2>> moves;  // displacements; a cell's actions are the in-map ones, in order

  std::size_t done_state() const { return params.map.cells(); }
  std::size_t state_of(Cell c) const { return params.map.index(c.x, c.y); }

  /// Cells visited under zero noise, starting from the start cell.
  std::vector<Cell> nominal_path(const ccmdp::Policy& policy) const {
    std::vector<Cell> path{params.start};
    std::size_t s = state_of(params.start);
    for (std::size_t t = 0; t < params.horizon; ++t) {
      if (s == done_state()) break;
      if (params.map.cell(s) == params.goal) break;
      const auto a = static_cast<std::size_t>(policy.action[2 * t][s]);
      s = mdp.successors(2 * t, s, a)[0];
      path.push_back(params.map.cell(s));
    }
    return path;
  }
};

inline GridScenario grid_scenario(GridParams params) {
  const auto& m = params.map;
  if (m.cells() == 0) throw InvalidInput("grid scenario: empty map");
  if (params.horizon == 0) throw InvalidInput("grid scenario: horizon must be positive");
  if (params.max_step < 1) throw InvalidInput("grid scenario: max step must be at least 1");
  if (!(params.sigma >= 0.0)) throw InvalidInput("grid scenario: sigma must be nonnegative");
  if (!(params.miss_penalty >= 0.0)) throw InvalidInput("grid scenario: miss penalty must be nonnegative");
  for (const Cell c : {params.start, params.goal}) {
    if (!m.inside(c.x, c.y)) throw InvalidInput("grid scenario: start/goal outside the map");
    if (m.is_blocked(c.x, c.y)) throw InvalidInput("grid scenario: start/goal inside an obstacle");
  }

  GridScenario out;
  const int d = params.max_step;
  for (int dy = -d; dy <= d; ++dy)
    for (int dx = -d; dx <= d; ++dx)
      if (dx * dx + dy * dy <= d * d) out.moves.push_back({dx, dy});
  const auto noise = gaussian_offsets(Eigen::Matrix2d::Identity() * params.sigma * params.sigma);

  const std::size_t n = m.cells(), done = n, T = params.horizon;
  std::vector<std::size_t> counts(2 * T + 2, n + 1);
  counts.back() = 1;
  ccmdp::MdpBuilder b(counts);
  std::vector<double> init(n + 1, 0.0);
  init[m.index(params.start.x, params.start.y)] = 1.0;
  b.set_initial(std::move(init));
  for (std::size_t t = 1; t <= T; ++t)
    for (std::size_t s = 0; s < n; ++s)
      if (m.blocked[s]) b.set_failure(2 * t, s);

  const std::size_t goal = m.index(params.goal.x, params.goal.y);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t k = 2 * t;
    for (std::size_t s = 0; s < n; ++s) {
      if (t > 0 && m.blocked[s]) continue;
      if (s == goal) {
        b.add_action(k, s, 0.0);
        b.add_successor(done, 1.0);
        continue;
      }
      const Cell c = m.cell(s);
      for (const auto& [dx, dy] : out.moves) {
        if (!m.inside(c.x + dx, c.y + dy)) continue;
        b.add_action(k, s, std::hypot(dx, dy));
        b.add_successor(m.index(c.x + dx, c.y + dy), 1.0);
      }
    }
    b.add_action(k, done, 0.0);
    b.add_successor(done, 1.0);

    for (std::size_t s = 0; s < n; ++s) {
      b.add_action(k + 1, s, 0.0);
      detail::add_noise_successors(b, m, m.cell(s), noise);
    }
    b.add_action(k + 1, done, 0.0);
    b.add_successor(done, 1.0);
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (m.blocked[s]) continue;
    const Cell c = m.cell(s);
    b.add_action(2 * T, s,
                 params.miss_penalty * std::hypot(c.x - params.goal.x, c.y - params.goal.y));
    b.add_successor(0, 1.0);
  }
  b.add_action(2 * T, done, 0.0);
  b.add_successor(0, 1.0);

  out.mdp = b.build();
  out.params = std::move(params);
  return out;
}

/// 30x30 map with two blocks separated by a narrow passage on the direct
/// route from start to goal.
inline GridParams default_grid_params() {
  GridParams p;
  p.map = GridMap(30, 30);
  p.map.block_rect(3, 12, 13, 17);
  p.map.block_rect(16, 12, 26, 17);
  p.horizon = 15;
  p.start = {14, 2};
  p.goal = {15, 27};
  p.max_step = 3;
  p.sigma = 0.7;
  p.risk_bound = 0.02;
  return p;
}

// ---------------------------------------------------------------------------
// Landing-site targeting
// ---------------------------------------------------------------------------

struct EdlStage {
  Eigen::Matrix2d D = Eigen::Matrix2d::Identity();  // correction ellipsoid shape
  double radius = 1.0;                              // (u - x)^T D (u - x) <= radius^2
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();  // execution error covariance, in cells^2
};

struct EdlParams {
  GridMap hazard;  // blocked = unsafe landing cell
  Cell initial{};  // projected landing cell before the first correction
  std::vector<EdlStage> stages;
  std::array<Cell, 2> targets{};
  double cell_size = 1.0;
  double risk_bound = 0.001;
};

/// Layout mirrors the grid scenario: stage t is split into a correction
/// step (state = projected landing cell, action = new aim cell) and an
/// execution-error step. The last projected cell is the landing cell; it
/// fails if unsafe, and otherwise pays the rover traverse cost.
struct EdlScenario {
  EdlParams params;
  ccmdp::Mdp mdp;
  std::vector<double> traverse;  // per landing cell
  std::vector<std::vector<std::array<int, 2>>> moves;  // per stage: corrections, in-map ones become actions

  std::vector<Cell> nominal_aims(const ccmdp::Policy& policy) const {
    std::vector<Cell> out;
    std::size_t s = params.hazard.index(params.initial.x, params.initial.y);
    for (std::size_t t = 0; t < params.stages.size(); ++t) {
      const auto a = static_cast<std::size_t>(policy.action[2 * t][s]);
      s = mdp.successors(2 * t, s, a)[0];
      out.push_back(params.hazard.cell(s));
    }
    return out;
  }
};

/// Traverse distance from every cell through both targets, cheaper order.
/// Cells that cannot reach the targets get a cost above any reachable one.
inline std::vector<double> traverse_costs(const GridMap& m, const std::array<Cell, 2>& targets,
                                          double cell_size) {
  const auto d0 = bfs_distances(m, targets[0]);
  const auto d1 = bfs_distances(m, targets[1]);
  const int between = d0[m.index(targets[1].x, targets[1].y)];
  if (between < 0) throw InvalidInput("EDL scenario: science targets are not connected");
  const double unreachable = cell_size * (2.0 * static_cast<double>(m.cells()) + between);
  std::vector<double> out(m.cells(), unreachable);
  for (std::size_t s = 0; s < m.cells(); ++s) {
    if (d0[s] < 0 || d1[s] < 0) continue;
    out[s] = cell_size * (std::min(d0[s], d1[s]) + between);
  }
  return out;
}

inline EdlScenario edl_scenario(EdlParams params) {
  const auto& m = params.hazard;
  if (m.cells() == 0) throw InvalidInput("EDL scenario: empty map");
  if (std::all_of(m.blocked.begin(), m.blocked.end(), [](char c) { return c != 0; }))
    throw InvalidInput("EDL scenario: every landing cell is unsafe");
  if (params.stages.size() < 2) throw InvalidInput("EDL scenario: need at least two stages");
  if (!m.inside(params.initial.x, params.initial.y))
    throw InvalidInput("EDL scenario: initial cell outside the map");
  for (const Cell t : params.targets)
    if (!m.inside(t.x, t.y) || m.is_blocked(t.x, t.y))
      throw InvalidInput("EDL scenario: science target outside the map or unsafe");

  EdlScenario out;
  out.traverse = traverse_costs(m, params.targets, params.cell_size);

  const std::size_t n = m.cells(), T = params.stages.size();
  std::vector<std::size_t> counts(2 * T + 2, n);
  counts.back() = 1;
  ccmdp::MdpBuilder b(counts);
  std::vector<double> init(n, 0.0);
  init[m.index(params.initial.x, params.initial.y)] = 1.0;
  b.set_initial(std::move(init));
  for (std::size_t s = 0; s < n; ++s)
    if (m.blocked[s]) b.set_failure(2 * T, s);

  for (std::size_t t = 0; t < T; ++t) {
    const auto& st = params.stages[t];
    if (!(st.radius >= 0.0)) throw InvalidInput("EDL scenario: negative correction radius");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(st.D);
    if ((st.D - st.D.transpose()).cwiseAbs().maxCoeff() > 1e-12 || es.eigenvalues().minCoeff() <= 0.0)
      throw InvalidInput("EDL scenario: correction shape must be symmetric positive definite");
    const int r = static_cast<int>(std::floor(st.radius / std::sqrt(es.eigenvalues().minCoeff())));
    std::vector<std::array<int, 2>> moves;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const Eigen::Vector2d v(dx, dy);
        if (v.dot(st.D * v) <= st.radius * st.radius + 1e-12) moves.push_back({dx, dy});
      }
    const auto noise = gaussian_offsets(st.sigma);
    for (std::size_t s = 0; s < n; ++s) {
      const Cell c = m.cell(s);
      for (const auto& [dx, dy] : moves) {
        if (!m.inside(c.x + dx, c.y + dy)) continue;
        b.add_action(2 * t, s, 0.0);
        b.add_successor(m.index(c.x + dx, c.y + dy), 1.0);
      }
    }
    for (std::size_t s = 0; s < n; ++s) {
      b.add_action(2 * t + 1, s, 0.0);
      detail::add_noise_successors(b, m, m.cell(s), noise);
    }
    out.moves.push_back(std::move(moves));
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (m.blocked[s]) continue;
    b.add_action(2 * T, s, out.traverse[s]);
    b.add_successor(0, 1.0);
  }

  out.mdp = b.build();
  out.params = std::move(params);
  return out;
}

/// 40x40 synthetic hazard map, three correction stages of shrinking reach
/// and error.
inline EdlParams default_edl_params(std::uint64_t map_seed = 1) {
  EdlParams p;
  p.hazard = synthetic_hazard_map(40, 40, 14, 1.5, 4.5, map_seed);
  p.targets = {Cell{12, 28}, Cell{28, 30}};
  p.initial = {20, 10};
  for (const Cell c : {p.targets[0], p.targets[1], p.initial})
    p.hazard.block_rect(c.x - 1, c.y - 1, c.x + 1, c.y + 1, false);
  EdlStage s0, s1, s2;
  s0.radius = 14.0;
  s0.sigma = Eigen::Matrix2d::Identity() * 2.0 * 2.0;
  s1.radius = 5.0;
  s1.sigma = Eigen::Matrix2d::Identity() * 1.0;
  s2.radius = 2.0;
  s2.sigma = Eigen::Matrix2d::Identity() * 0.5 * 0.5;
  p.stages = {s0, s1, s2};
  p.cell_size = 10.0;
  p.risk_bound = 0.001;
  return p;
}

// ---------------------------------------------------------------------------
// Corridor SMPC instance
// ---------------------------------------------------------------------------

struct SmpcInstance {
  smpc::SmpcModel model;
  std::vector<double> breakpoints;
};

/// Planar double integrator (state: px, py, vx, vy) with position noise.
inline smpc::SmpcModel double_integrator(double dt, double sigma_w) {
  smpc::SmpcModel m;
  m.A = Eigen::MatrixXd::Identity(4, 4);
  m.A(0, 2) = dt;
  m.A(1, 3) = dt;
  m.B = Eigen::MatrixXd::Zero(4, 2);
  m.B(0, 0) = 0.5 * dt * dt;
  m.B(1, 1) = 0.5 * dt * dt;
  m.B(2, 0) = dt;
  m.B(3, 1) = dt;
  m.sigma_w = Eigen::MatrixXd::Zero(4, 4);
  m.sigma_w(0, 0) = sigma_w * sigma_w;
  m.sigma_w(1, 1) = sigma_w * sigma_w;
  return m;
}

/// Axis-aligned box [x0, x1] x [y0, y1] in the position coordinates.
inline smpc::Obstacle box_obstacle(double x0, double x1, double y0, double y1, std::size_t nx = 4) {
  smpc::Obstacle o;
  o.H = Eigen::MatrixXd::Zero(4, static_cast<Eigen::Index>(nx));
  o.g = Eigen::VectorXd(4);
  o.H(0, 0) = 1.0;  o.g(0) = x0;
  o.H(1, 0) = -1.0; o.g(1) = -x1;
  o.H(2, 1) = 1.0;  o.g(2) = y0;
  o.H(3, 1) = -1.0; o.g(3) = -y1;
  return o;
}

/// Two boxes stacked across the straight route, leaving a narrow slot on
/// the direct line from start to goal.
inline SmpcInstance corridor_smpc(std::size_t horizon = 8, double half_gap = 0.4,
                                  double reach = 1.2) {
  SmpcInstance inst;
  auto& m = inst.model;
  m = double_integrator(1.0, 0.1);
  m.P = Eigen::MatrixXd(4, 2);
  m.P << 1, 0, -1, 0, 0, 1, 0, -1;
  m.q = Eigen::VectorXd::Ones(4);
  m.horizon = horizon;
  m.x0 = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd goal(4);
  goal << 8.0, 0.0, 0.0, 0.0;
  m.terminal = goal;
  m.obstacles = {box_obstacle(3.0, 5.0, half_gap, reach), box_obstacle(3.0, 5.0, -reach, -half_gap)};
  smpc::StateBox box;
  box.lower = Eigen::VectorXd(4);
  box.upper = Eigen::VectorXd(4);
  box.lower << -1, -4, -3, -3;
  box.upper << 9, 4, 3, 3;
  m.state_box = box;
  m.risk_bound = 0.01;
  inst.breakpoints = {-6.0, -4.5, -3.5, -3.0, -2.6, -2.3, -2.0, -1.5, -0.8, 0.0};
  return inst;
}

}  // namespace mixedctrl::scenarios
