// Copyright 2026 The privchange Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "privchange/common.hpp"
#include "privchange/error.hpp"

namespace privchange {

inline constexpr double kStochasticTol = 1e-12;

/// Finite MDP (X, U, P, r). P[u](x, y) is the probability of moving from x to
/// y under action u; r(x, u) is the one-step reward.
struct Mdp {
  std::vector<Matrix> P;
  Matrix r;

  int n_states() const { return static_cast<int>(r.rows()); }
  int n_actions() const { return static_cast<int>(r.cols()); }
  double prob(int x, int u, int y) const { return P[u](x, y); }

  /// Distribution of the next state from (x, u).
  Vector next(int x, int u) const { return P[u].row(x).transpose(); }
};

/// Randomized stationary decision rule, pi(x, u) = probability of u in x.
struct Policy {
  Matrix pi;

  int n_states() const { return static_cast<int>(pi.rows()); }
  int n_actions() const { return static_cast<int>(pi.cols()); }

  static Policy uniform(int n_states, int n_actions) {
    return {Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
  }

  /// Point-mass policy choosing actions[x] in state x.
  static Policy deterministic(const std::vector<int>& actions, int n_actions) {
    Policy p{Matrix::Zero(static_cast<Index>(actions.size()), n_actions)};
    for (std::size_t x = 0; x < actions.size(); ++x) {
      p.pi(static_cast<Index>(x), actions[x]) = 1.0;
    }
    return p;
  }
};

/// Stationary state-action distribution xi(x, u).
struct OccupancyMeasure {
  Matrix xi;

  /// Row masses ||xi(x, *)||_1, i.e. the state marginal.
  Vector state_marginal() const { return xi.rowwise().sum(); }
  double mass() const { return xi.sum(); }
};

/// Pre/post change models, the two policies and the change time nu.
struct ChangeScenario {
  Mdp m0;
  Mdp m1;
  Policy pi0;
  Policy pi1;
  std::int64_t nu = 1;
};

/// Sentinel change time for runs in which the change never happens.
inline constexpr std::int64_t kNeverChange =
    std::numeric_limits<std::int64_t>::max();

struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::int64_t nu = 1;
  std::uint64_t seed = 0;

  std::int64_t length() const {
    return static_cast<std::int64_t>(states.size());
  }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_distribution_rows(const Matrix& m, const std::string& what,
                                    double tol) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v)) {
        fail(ErrorKind::kNegativeEntry,
             what + " row " + std::to_string(i) + " has a non-finite entry");
      }
      if (v < 0.0) {
        fail(ErrorKind::kNegativeEntry, what + " entry (" + std::to_string(i) +
                                            "," + std::to_string(j) +
                                            ") is negative");
      }
    }
    const double s = m.row(i).sum();
    if (std::abs(s - 1.0) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << what << " row " << i << " sums to " << s;
      fail(ErrorKind::kNonStochasticRow, os.str());
    }
  }
}

}  // namespace detail

/// Checks shapes, nonnegativity and row-stochasticity of every P(u) and the
/// finiteness of r. Returns the model unchanged.
inline const Mdp& validate_mdp(const Mdp& m) {
  if (m.r.rows() < 1 || m.r.cols() < 1) {
    fail(ErrorKind::kShapeMismatch, "MDP needs at least one state and action");
  }
  if (static_cast<int>(m.P.size()) != m.n_actions()) {
    fail(ErrorKind::kShapeMismatch,
         "number of transition matrices (" + std::to_string(m.P.size()) +
             ") differs from number of actions (" +
             std::to_string(m.n_actions()) + ")");
  }
  for (int u = 0; u < m.n_actions(); ++u) {
    const Matrix& p = m.P[u];
    if (p.rows() != m.n_states() || p.cols() != m.n_states()) {
      fail(ErrorKind::kShapeMismatch,
           "P(" + std::to_string(u) + ") is not " +
               std::to_string(m.n_states()) + "x" +
               std::to_string(m.n_states()));
    }
    detail::check_distribution_rows(p, "P(" + std::to_string(u) + ")",
                                    kStochasticTol);
  }
  if (!m.r.allFinite()) fail(ErrorKind::kInvalidArgument, "reward not finite");
  return m;
}

inline const Policy& validate_policy(const Policy& p, int n_states,
                                     int n_actions) {
  if (p.n_states() != n_states || p.n_actions() != n_actions) {
    fail(ErrorKind::kShapeMismatch, "policy is " +
                                        std::to_string(p.n_states()) + "x" +
                                        std::to_string(p.n_actions()) +
                                        ", model is " +
                                        std::to_string(n_states) + "x" +
                                        std::to_string(n_actions));
  }
  detail::check_distribution_rows(p.pi, "policy", kStochasticTol);
  return p;
}

inline void check_same_spaces(const Mdp& a, const Mdp& b) {
  if (a.n_states() != b.n_states() || a.n_actions() != b.n_actions()) {
    fail(ErrorKind::kShapeMismatch, "models do not share state/action spaces");
  }
}

/// Per-(x, u) absolute continuity P1(x, u) << P0(x, u).
inline Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> absolute_continuity(
    const Mdp& m0, const Mdp& m1) {
  check_same_spaces(m0, m1);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> ok(m0.n_states(),
                                                        m0.n_actions());
  for (int x = 0; x < m0.n_states(); ++x) {
    for (int u = 0; u < m0.n_actions(); ++u) {
      bool cont = true;
      for (int y = 0; y < m0.n_states(); ++y) {
        if (in_support(m1.prob(x, u, y)) && !in_support(m0.prob(x, u, y))) {
          cont = false;
        }
      }
      ok(x, u) = cont;
    }
  }
  return ok;
}

inline const ChangeScenario& validate_scenario(const ChangeScenario& sc) {
  validate_mdp(sc.m0);
  validate_mdp(sc.m1);
  check_same_spaces(sc.m0, sc.m1);
  validate_policy(sc.pi0, sc.m0.n_states(), sc.m0.n_actions());
  validate_policy(sc.pi1, sc.m0.n_states(), sc.m0.n_actions());
  if (sc.nu < 1) fail(ErrorKind::kInvalidArgument, "change time must be >= 1");
  return sc;
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

/// Closed-loop kernel P^pi(y|x) = sum_u P(y|x,u) pi(u|x).
inline Matrix induced_chain(const Mdp& m, const Policy& pi) {
  if (pi.n_states() != m.n_states() || pi.n_actions() != m.n_actions()) {
    fail(ErrorKind::kShapeMismatch, "policy shape does not match model");
  }
  Matrix k = Matrix::Zero(m.n_states(), m.n_states());
  for (int u = 0; u < m.n_actions(); ++u) {
    k += pi.pi.col(u).asDiagonal() * m.P[u];
  }
  return k;
}

/// States that belong to a closed communicating class of the support graph
/// of a stochastic matrix, grouped by class. A chain has a unique stationary
/// distribution iff exactly one such class exists.
inline std::vector<std::vector<int>> closed_classes(const Matrix& p) {
  const int n = static_cast<int>(p.rows());
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    reach[s][s] = 1;
    stack.assign(1, s);
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      for (int y = 0; y < n; ++y) {
        if (in_support(p(x, y)) && !reach[s][y]) {
          reach[s][y] = 1;
          stack.push_back(y);
        }
      }
    }
  }
  std::vector<int> class_of(n, -1);
  std::vector<std::vector<int>> classes;
  for (int x = 0; x < n; ++x) {
    bool recurrent = true;
    for (int y = 0; y < n && recurrent; ++y) {
      if (reach[x][y] && !reach[y][x]) recurrent = false;
    }
    if (!recurrent || class_of[x] >= 0) continue;
    std::vector<int> members;
    for (int y = 0; y < n; ++y) {
      if (reach[x][y]) {
        class_of[y] = static_cast<int>(classes.size());
        members.push_back(y);
      }
    }
    classes.push_back(std::move(members));
  }
  return classes;
}

/// Unique stationary distribution mu of a row-stochastic matrix, mu^T P =
/// mu^T. Transient states receive zero mass. Throws NotIrreducible when the
/// chain has more than one closed class.
inline Vector stationary_distribution(const Matrix& p) {
  if (p.rows() != p.cols() || p.rows() < 1) {
    fail(ErrorKind::kShapeMismatch, "transition matrix must be square");
  }
  const auto classes = closed_classes(p);
  if (classes.size() != 1) {
    fail(ErrorKind::kNotIrreducible,
         "chain has " + std::to_string(classes.size()) + " closed classes");
  }
  const auto& cls = classes.front();
  const Index k = static_cast<Index>(cls.size());
  // Solve (P_CC^T - I) mu_C = 0 together with sum(mu_C) = 1.
  Matrix sys(k + 1, k);
  Vector rhs = Vector::Zero(k + 1);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) {
      sys(i, j) = p(cls[j], cls[i]) - (i == j ? 1.0 : 0.0);
    }
  }
  sys.row(k).setOnes();
  rhs(k) = 1.0;
  Vector mu_c = sys.colPivHouseholderQr().solve(rhs);
  mu_c = mu_c.cwiseMax(0.0);
  mu_c /= mu_c.sum();
  Vector mu = Vector::Zero(p.rows());
  for (Index i = 0; i < k; ++i) mu(cls[i]) = mu_c(i);
  return mu;
}

/// Power-iteration variant kept for cross-checks; converges for aperiodic
/// chains only.
inline Vector stationary_by_power_iteration(const Matrix& p, int max_iters,
                                            double tol) {
  Vector mu = Vector::Constant(p.rows(), 1.0 / p.rows());
  for (int it = 0; it < max_iters; ++it) {
    Vector next = p.transpose() * mu;
    const double diff = (next - mu).cwiseAbs().maxCoeff();
    mu = next;
    if (diff < tol) break;
  }
  return mu / mu.sum();
}

inline OccupancyMeasure occupancy_from_policy(const Mdp& m, const Policy& pi) {
  const Vector mu = stationary_distribution(induced_chain(m, pi));
  return {mu.asDiagonal() * pi.pi};
}

/// pi(u|x) = xi(x,u) / ||xi(x,*)||_1; rows without mass get the uniform
/// distribution.
inline Policy policy_from_occupancy(const OccupancyMeasure& occ) {
  const Index nx = occ.xi.rows();
  const Index nu = occ.xi.cols();
  Policy p{Matrix(nx, nu)};
  for (Index x = 0; x < nx; ++x) {
    const double mass = occ.xi.row(x).sum();
    if (mass > 0.0) {
      p.pi.row(x) = occ.xi.row(x) / mass;
    } else {
      p.pi.row(x).setConstant(1.0 / static_cast<double>(nu));
    }
  }
  return p;
}

/// Infinity norm of sum_u xi(*,u)^T P(u) - sum_u xi(*,u)^T, together with the
/// deviation of the total mass from one.
inline double stationarity_residual(const Mdp& m, const OccupancyMeasure& occ) {
  Vector lhs = Vector::Zero(m.n_states());
  for (int u = 0; u < m.n_actions(); ++u) {
    lhs += m.P[u].transpose() * occ.xi.col(u);
  }
  const double flow = (lhs - occ.state_marginal()).cwiseAbs().maxCoeff();
  return std::max(flow, std::abs(occ.mass() - 1.0));
}

/// Average reward lim (1/N) E sum r(X_t, U_t) = sum xi r.
inline double ergodic_value(const Mdp& m, const Policy& pi) {
  return occupancy_from_policy(m, pi).xi.cwiseProduct(m.r).sum();
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Step-by-step sampler of a change scenario. Time starts at t = 1 with
/// X_1 ~ mu_0^{pi_0}. For t >= nu the action is drawn from pi_1 and the state
/// X_t from P_1(.|X_{t-1}, U_{t-1}); before nu both come from the pre-change
/// pair.
class ScenarioSampler {
 public:
  ScenarioSampler(const ChangeScenario& sc, std::uint64_t seed)
      : nx_(sc.m0.n_states()), nu_actions_(sc.m0.n_actions()), nu_(sc.nu),
        rng_(seed) {
    validate_scenario(sc);
    init_cdf_ = cumulative_vec(
        stationary_distribution(induced_chain(sc.m0, sc.pi0)));
    for (const Mdp* m : {&sc.m0, &sc.m1}) {
      auto& table = m == &sc.m0 ? trans_[0] : trans_[1];
      table.resize(static_cast<std::size_t>(nx_ * nu_actions_));
      for (int x = 0; x < nx_; ++x) {
        for (int u = 0; u < nu_actions_; ++u) {
          table[idx(x, u)] = cumulative_vec(m->next(x, u));
        }
      }
    }
    for (int i = 0; i < 2; ++i) {
      const Policy& p = i == 0 ? sc.pi0 : sc.pi1;
      policy_[i].resize(static_cast<std::size_t>(nx_));
      for (int x = 0; x < nx_; ++x) {
        policy_[i][x] = cumulative_vec(p.pi.row(x).transpose());
      }
    }
  }

  /// Advances to the next time step and returns (X_t, U_t).
  std::pair<int, int> step() {
    ++t_;
    const int regime = t_ >= nu_ ? 1 : 0;
    if (t_ == 1) {
      state_ = sample_from_cdf(init_cdf_, rng_);
    } else {
      state_ = sample_from_cdf(trans_[regime][idx(state_, action_)], rng_);
    }
    action_ = sample_from_cdf(policy_[regime][state_], rng_);
    return {state_, action_};
  }

  std::int64_t time() const { return t_; }

 private:
  static std::vector<double> cumulative_vec(const Vector& v) {
    return cumulative(std::span<const double>(v.data(), v.size()));
  }
  std::size_t idx(int x, int u) const {
    return static_cast<std::size_t>(x * nu_actions_ + u);
  }

  int nx_;
  int nu_actions_;
  std::int64_t nu_;
  Rng rng_;
  std::vector<double> init_cdf_;
  std::vector<std::vector<double>> trans_[2];
  std::vector<std::vector<double>> policy_[2];
  std::int64_t t_ = 0;
  int state_ = 0;
  int action_ = 0;
};

inline Trajectory simulate(const ChangeScenario& sc, std::int64_t horizon,
                           std::uint64_t seed) {
  if (horizon < 1) fail(ErrorKind::kInvalidArgument, "horizon must be >= 1");
  ScenarioSampler sampler(sc, seed);
  Trajectory traj;
  traj.nu = sc.nu;
  traj.seed = seed;
  traj.states.reserve(static_cast<std::size_t>(horizon));
  traj.actions.reserve(static_cast<std::size_t>(horizon));
  for (std::int64_t t = 0; t < horizon; ++t) {
    const auto [x, u] = sampler.step();
    traj.states.push_back(x);
    traj.actions.push_back(u);
  }
  return traj;
}

}  // namespace privchange
