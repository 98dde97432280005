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

#include <string>
#include <utility>
#include <vector>

#include "privchange/common.hpp"
#include "privchange/dc_program.hpp"
#include "privchange/error.hpp"
#include "privchange/lp.hpp"
#include "privchange/mdp.hpp"
#include "privchange/metrics.hpp"

namespace privchange {

struct SynthesisResult {
  OccupancyMeasure xi0;
  OccupancyMeasure xi1;
  Policy pi0;
  Policy pi1;
  /// Minimized objective: the rate for privacy problems, -V + lambda * I for
  /// trade-offs.
  double objective = 0.0;
  /// I_F or I_L recomputed from (pi0, pi1).
  double rate = 0.0;
  /// rho * value1 + (1 - rho) * value0.
  double value = 0.0;
  double value0 = 0.0;
  double value1 = 0.0;
  double rho = 1.0;
  double lambda = 0.0;
  double feasibility_residual = 0.0;
  int iterations = 0;
  bool converged = true;
  int restart_index = 0;
  /// Accepted CCP objectives of the winning run, starting point first.
  std::vector<double> history;
};

enum class InfoMode { kFull, kLimited };

namespace detail {

// Interior mixing weight applied to every starting policy.
inline constexpr double kStartMix = 1e-10;

inline Policy interior(const Policy& p) {
  const int nu = p.n_actions();
  Policy out{(1.0 - kStartMix) * p.pi +
             Matrix::Constant(p.n_states(), nu, kStartMix / nu)};
  for (Index x = 0; x < out.pi.rows(); ++x) out.pi.row(x) /= out.pi.row(x).sum();
  return out;
}

inline Policy random_policy(int nx, int nu, Rng& rng) {
  Policy p{Matrix(nx, nu)};
  for (int x = 0; x < nx; ++x) p.pi.row(x) = dirichlet_ones(nu, rng).transpose();
  return p;
}

inline Policy normalized_rows(const Matrix& m) {
  Policy p{m.cwiseMax(0.0)};
  for (Index x = 0; x < p.pi.rows(); ++x) {
    const double s = p.pi.row(x).sum();
    if (s > 0.0) {
      p.pi.row(x) /= s;
    } else {
      p.pi.row(x).setConstant(1.0 / static_cast<double>(p.pi.cols()));
    }
  }
  return p;
}

inline void check_pair(const Mdp& m0, const Mdp& m1) {
  validate_mdp(m0);
  validate_mdp(m1);
  check_same_spaces(m0, m1);
}

inline void check_tradeoff_args(double rho, double lambda) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "rho must lie in [0, 1]");
  }
  if (!(lambda >= 0.0) || std::isinf(lambda)) {
    fail(ErrorKind::kInvalidArgument, "lambda must be finite and >= 0");
  }
}

/// Fills rate, values and residuals from the policies in `res`.
inline void certify(SynthesisResult& res, const Mdp& m0, const Mdp& m1,
                    InfoMode mode) {
  res.rate = mode == InfoMode::kFull ? full_info_rate(m0, m1, res.pi0, res.pi1)
                                     : limited_info_rate(m0, m1, res.pi0, res.pi1);
  res.value0 = ergodic_value(m0, res.pi0);
  res.value1 = ergodic_value(m1, res.pi1);
  res.value = res.rho * res.value1 + (1.0 - res.rho) * res.value0;
  double residual = 0.0;
  if (res.xi1.xi.size() > 0) {
    residual = std::max(residual, stationarity_residual(m1, res.xi1));
  }
  if (res.xi0.xi.size() > 0) {
    residual = std::max(residual, stationarity_residual(m0, res.xi0));
  }
  res.feasibility_residual = residual;
}

inline OccupancyMeasure occupancy_or_empty(const Mdp& m, const Policy& pi) {
  try {
    return occupancy_from_policy(m, pi);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNotIrreducible) throw;
    return {};
  }
}

inline Matrix finite_divergence_table(const Mdp& m0, const Mdp& m1) {
  const Matrix d = model_divergence_table(m0, m1);
  if (!d.allFinite()) {
    fail(ErrorKind::kInfiniteCost,
         "P1(x,u) is not absolutely continuous w.r.t. P0(x,u) for some pair");
  }
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Full information, best privacy: a linear program.
// ---------------------------------------------------------------------------

inline SynthesisResult best_privacy_full(const Mdp& m0, const Mdp& m1) {
  detail::check_pair(m0, m1);
  Matrix cost = model_divergence_table(m0, m1);
  // Pairs with infinite divergence are excluded from the polytope; if nothing
  // stationary survives, every policy has I_F = +inf.
  OccupancyMeasure occ;
  try {
    occ = solve_occupancy_lp(cost, m1);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInfeasible || cost.allFinite()) throw;
    fail(ErrorKind::kInfiniteCost,
         "no stationary policy avoids pairs with P1(x,u) not << P0(x,u)");
  }
  SynthesisResult res;
  res.xi1 = occ;
  res.pi1 = policy_from_occupancy(occ);
  res.pi0 = res.pi1;
  res.xi0 = detail::occupancy_or_empty(m0, res.pi0);
  double obj = 0.0;
  for (Index x = 0; x < occ.xi.rows(); ++x) {
    for (Index u = 0; u < occ.xi.cols(); ++u) {
      if (occ.xi(x, u) > 0.0) obj += occ.xi(x, u) * cost(x, u);
    }
  }
  res.objective = obj;
  detail::certify(res, m0, m1, InfoMode::kFull);
  res.history = {obj};
  return res;
}

// ---------------------------------------------------------------------------
// Program builders
// ---------------------------------------------------------------------------

/// Limited-information best privacy over z = (xi1, alpha): I_L written as the
/// convex sum over (x, y) of phi(P1 xi1, P0 alpha) minus the state-marginal
/// entropy correction.
inline dc::Program limited_privacy_program(const Mdp& m0, const Mdp& m1) {
  detail::check_pair(m0, m1);
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  const Index blk = static_cast<Index>(nx) * nu;
  dc::Program prog;
  prog.dim = 2 * blk;
  prog.linear = Vector::Zero(prog.dim);
  prog.eq.resize(0, prog.dim);
  dc::add_occupancy_block(prog, m1, 0);
  dc::add_policy_block(prog, nx, nu, blk);
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < nx; ++y) {
      dc::RelEntropyTerm term;
      term.num = dc::row_form(0, x, nu, [&](int u) { return m1.prob(x, u, y); });
      if (term.num.empty()) continue;
      term.den = dc::row_form(blk, x, nu, [&](int u) { return m0.prob(x, u, y); });
      if (term.den.empty()) {
        fail(ErrorKind::kInfiniteCost,
             "no action of M0 reaches state " + std::to_string(y) +
                 " from state " + std::to_string(x) + " while M1 does");
      }
      prog.convex.push_back(std::move(term));
    }
    dc::RelEntropyTerm marginal;
    marginal.num = dc::row_form(0, x, nu, [](int) { return 1.0; });
    for (Index j = 0; j < blk; ++j) marginal.den.terms.emplace_back(j, 1.0);
    prog.concave.push_back(std::move(marginal));
  }
  return prog;
}

/// Full-information trade-off over z = (xi0, xi1), minimization form of
/// -V + lambda * I_F.
inline dc::Program tradeoff_full_program(const Mdp& m0, const Mdp& m1,
                                         double rho, double lambda) {
  detail::check_pair(m0, m1);
  detail::check_tradeoff_args(rho, lambda);
  const Matrix d = detail::finite_divergence_table(m0, m1);
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  const Index blk = static_cast<Index>(nx) * nu;
  dc::Program prog;
  prog.dim = 2 * blk;
  prog.linear = Vector::Zero(prog.dim);
  prog.eq.resize(0, prog.dim);
  dc::add_occupancy_block(prog, m0, 0);
  dc::add_occupancy_block(prog, m1, blk);
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) {
      const Index i0 = dc::block_index(0, x, u, nu);
      const Index i1 = dc::block_index(blk, x, u, nu);
      prog.linear(i0) = -(1.0 - rho) * m0.r(x, u);
      prog.linear(i1) = -rho * m1.r(x, u) + lambda * d(x, u);
      if (lambda > 0.0) {
        dc::RelEntropyTerm term;
        term.weight = lambda;
        term.num.terms = {{i1, 1.0}};
        term.den.terms = {{i0, 1.0}};
        prog.convex.push_back(std::move(term));
      }
    }
    if (lambda > 0.0) {
      dc::RelEntropyTerm marginal;
      marginal.weight = lambda;
      marginal.num = dc::row_form(blk, x, nu, [](int) { return 1.0; });
      marginal.den = dc::row_form(0, x, nu, [](int) { return 1.0; });
      prog.concave.push_back(std::move(marginal));
    }
  }
  return prog;
}

/// Limited-information trade-off over z = (xi0, xi1), minimization form of
/// -V + lambda * I_L.
inline dc::Program tradeoff_limited_program(const Mdp& m0, const Mdp& m1,
                                            double rho, double lambda) {
  detail::check_pair(m0, m1);
  detail::check_tradeoff_args(rho, lambda);
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  const Index blk = static_cast<Index>(nx) * nu;
  dc::Program prog;
  prog.dim = 2 * blk;
  prog.linear = Vector::Zero(prog.dim);
  prog.eq.resize(0, prog.dim);
  dc::add_occupancy_block(prog, m0, 0);
  dc::add_occupancy_block(prog, m1, blk);
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) {
      prog.linear(dc::block_index(0, x, u, nu)) = -(1.0 - rho) * m0.r(x, u);
      prog.linear(dc::block_index(blk, x, u, nu)) = -rho * m1.r(x, u);
    }
    if (lambda == 0.0) continue;
    for (int y = 0; y < nx; ++y) {
      dc::RelEntropyTerm term;
      term.weight = lambda;
      term.num = dc::row_form(blk, x, nu, [&](int u) { return m1.prob(x, u, y); });
      if (term.num.empty()) continue;
      term.den = dc::row_form(0, x, nu, [&](int u) { return m0.prob(x, u, y); });
      if (term.den.empty()) {
        fail(ErrorKind::kInfiniteCost,
             "no action of M0 reaches state " + std::to_string(y) +
                 " from state " + std::to_string(x) + " while M1 does");
      }
      prog.convex.push_back(std::move(term));
    }
    dc::RelEntropyTerm marginal;
    marginal.weight = lambda;
    marginal.num = dc::row_form(blk, x, nu, [](int) { return 1.0; });
    marginal.den = dc::row_form(0, x, nu, [](int) { return 1.0; });
    prog.concave.push_back(std::move(marginal));
  }
  return prog;
}

// ---------------------------------------------------------------------------
// Multistart driver
// ---------------------------------------------------------------------------

namespace detail {

enum class Layout { kOccupancyPolicy, kTwoOccupancies };

inline Vector encode_start(Layout layout, const Mdp& m0, const Mdp& m1,
                           const Policy& pi0, const Policy& pi1) {
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  const Index blk = static_cast<Index>(nx) * nu;
  Vector z(2 * blk);
  const Policy p0 = interior(pi0);
  const Policy p1 = interior(pi1);
  if (layout == Layout::kOccupancyPolicy) {
    dc::set_block(z, 0, occupancy_from_policy(m1, p1).xi);
    dc::set_block(z, blk, p0.pi);
  } else {
    dc::set_block(z, 0, occupancy_from_policy(m0, p0).xi);
    dc::set_block(z, blk, occupancy_from_policy(m1, p1).xi);
  }
  return z;
}

/// Starting policy pairs: uniform, then restarts - 1 Dirichlet draws, then
/// any structured and warm starts.
inline std::vector<std::pair<Policy, Policy>> start_list(
    int nx, int nu, const SynthesisConfig& cfg,
    std::vector<std::pair<Policy, Policy>> extra) {
  std::vector<std::pair<Policy, Policy>> starts;
  starts.emplace_back(Policy::uniform(nx, nu), Policy::uniform(nx, nu));
  for (int r = 1; r < cfg.restarts; ++r) {
    Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    Policy a = random_policy(nx, nu, rng);
    Policy b = random_policy(nx, nu, rng);
    starts.emplace_back(std::move(a), std::move(b));
  }
  for (auto& e : extra) starts.push_back(std::move(e));
  if (cfg.warm_start) starts.push_back(*cfg.warm_start);
  return starts;
}

struct BestRun {
  dc::CcpRun run;
  int index = -1;
};

inline BestRun multistart(const dc::Program& prog, Layout layout,
                          const Mdp& m0, const Mdp& m1,
                          const std::vector<std::pair<Policy, Policy>>& starts,
                          const SynthesisConfig& cfg) {
  BestRun best;
  double best_obj = kInf;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Vector z0 = encode_start(layout, m0, m1, starts[i].first, starts[i].second);
    dc::CcpRun run = dc::run_ccp(prog, std::move(z0), cfg);
    const double obj = run.history.back();
    if (best.index < 0 || obj < best_obj) {
      best_obj = obj;
      best.run = std::move(run);
      best.index = static_cast<int>(i);
    }
  }
  return best;
}

inline void fill_from_run(SynthesisResult& res, const BestRun& best) {
  res.objective = best.run.history.back();
  res.iterations = best.run.iterations;
  res.converged = best.run.converged;
  res.restart_index = best.index;
  res.history = best.run.history;
}

/// Reward-optimal policies of each model separately (the lambda = 0 case).
inline SynthesisResult independent_optima(const Mdp& m0, const Mdp& m1,
                                          double rho, InfoMode mode) {
  SynthesisResult res;
  res.rho = rho;
  res.lambda = 0.0;
  res.xi0 = solve_occupancy_lp(-m0.r, m0);
  res.xi1 = solve_occupancy_lp(-m1.r, m1);
  res.pi0 = policy_from_occupancy(res.xi0);
  res.pi1 = policy_from_occupancy(res.xi1);
  certify(res, m0, m1, mode);
  res.objective = -res.value;
  res.history = {res.objective};
  return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public solvers
// ---------------------------------------------------------------------------

inline SynthesisResult best_privacy_limited(const Mdp& m0, const Mdp& m1,
                                            const SynthesisConfig& cfg = {}) {
  cfg.validate();
  const dc::Program prog = limited_privacy_program(m0, m1);
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  // The full-information optimum is a feasible point whose limited rate is
  // already no larger than the full one.
  std::vector<std::pair<Policy, Policy>> extra;
  try {
    const SynthesisResult full = best_privacy_full(m0, m1);
    extra.emplace_back(full.pi0, full.pi1);
  } catch (const Error&) {
  }
  const auto starts = detail::start_list(nx, nu, cfg, std::move(extra));
  const detail::BestRun best = detail::multistart(
      prog, detail::Layout::kOccupancyPolicy, m0, m1, starts, cfg);

  const Index blk = static_cast<Index>(nx) * nu;
  SynthesisResult res;
  res.xi1.xi = dc::block_matrix(best.run.z, 0, nx, nu);
  res.pi1 = policy_from_occupancy(res.xi1);
  res.pi0 = detail::normalized_rows(dc::block_matrix(best.run.z, blk, nx, nu));
  res.xi0 = detail::occupancy_or_empty(m0, res.pi0);
  detail::fill_from_run(res, best);
  detail::certify(res, m0, m1, InfoMode::kLimited);
  return res;
}

inline SynthesisResult tradeoff_full(const Mdp& m0, const Mdp& m1, double rho,
                                     double lambda,
                                     const SynthesisConfig& cfg = {}) {
  cfg.validate();
  detail::check_pair(m0, m1);
  detail::check_tradeoff_args(rho, lambda);
  if (lambda == 0.0) {
    return detail::independent_optima(m0, m1, rho, InfoMode::kFull);
  }
  const Matrix d = detail::finite_divergence_table(m0, m1);
  if (rho == 1.0) {
    // Only M1 earns reward; the policy term vanishes with pi0 = pi1 and what
    // remains is an MDP with reward r1 - lambda * D.
    SynthesisResult res;
    res.rho = rho;
    res.lambda = lambda;
    res.xi1 = solve_occupancy_lp(-m1.r + lambda * d, m1);
    res.pi1 = policy_from_occupancy(res.xi1);
    res.pi0 = res.pi1;
    res.xi0 = detail::occupancy_or_empty(m0, res.pi0);
    detail::certify(res, m0, m1, InfoMode::kFull);
    res.objective = -res.value + lambda * res.rate;
    res.history = {res.objective};
    return res;
  }
  const dc::Program prog = tradeoff_full_program(m0, m1, rho, lambda);
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  const auto starts = detail::start_list(nx, nu, cfg, {});
  const detail::BestRun best = detail::multistart(
      prog, detail::Layout::kTwoOccupancies, m0, m1, starts, cfg);
  const Index blk = static_cast<Index>(nx) * nu;
  SynthesisResult res;
  res.rho = rho;
  res.lambda = lambda;
  res.xi0.xi = dc::block_matrix(best.run.z, 0, nx, nu);
  res.xi1.xi = dc::block_matrix(best.run.z, blk, nx, nu);
  res.pi0 = policy_from_occupancy(res.xi0);
  res.pi1 = policy_from_occupancy(res.xi1);
  detail::fill_from_run(res, best);
  detail::certify(res, m0, m1, InfoMode::kFull);
  return res;
}

inline SynthesisResult tradeoff_limited(const Mdp& m0, const Mdp& m1,
                                        double rho, double lambda,
                                        const SynthesisConfig& cfg = {}) {
  cfg.validate();
  detail::check_pair(m0, m1);
  detail::check_tradeoff_args(rho, lambda);
  if (lambda == 0.0) {
    return detail::independent_optima(m0, m1, rho, InfoMode::kLimited);
  }
  const dc::Program prog = tradeoff_limited_program(m0, m1, rho, lambda);
  const int nx = m1.n_states();
  const int nu = m1.n_actions();
  std::vector<std::pair<Policy, Policy>> extra;
  try {
    const SynthesisResult full = tradeoff_full(m0, m1, rho, lambda, cfg);
    extra.emplace_back(full.pi0, full.pi1);
  } catch (const Error&) {
  }
  const auto starts = detail::start_list(nx, nu, cfg, std::move(extra));
  const detail::BestRun best = detail::multistart(
      prog, detail::Layout::kTwoOccupancies, m0, m1, starts, cfg);
  const Index blk = static_cast<Index>(nx) * nu;
  SynthesisResult res;
  res.rho = rho;
  res.lambda = lambda;
  res.xi0.xi = dc::block_matrix(best.run.z, 0, nx, nu);
  res.xi1.xi = dc::block_matrix(best.run.z, blk, nx, nu);
  res.pi0 = policy_from_occupancy(res.xi0);
  res.pi1 = policy_from_occupancy(res.xi1);
  detail::fill_from_run(res, best);
  detail::certify(res, m0, m1, InfoMode::kLimited);
  return res;
}

// ---------------------------------------------------------------------------
// Non-convexity probes
// ---------------------------------------------------------------------------

struct DcParts {
  double q = 0.0;
  double f = 0.0;
  double g = 0.0;
};

namespace detail {

inline void check_joint(const Matrix& a, const char* name) {
  if (a.size() == 0 || (a.array() <= 0.0).any() || !a.allFinite()) {
    fail(ErrorKind::kNonPositiveEntry,
         std::string(name) + " must have strictly positive entries");
  }
  // Printed four-digit matrices are accepted up to rounding.
  if (std::abs(a.sum() - 1.0) > 1e-3) {
    fail(ErrorKind::kInvalidArgument,
         std::string(name) + " must sum to one (got " +
             std::to_string(a.sum()) + ")");
  }
}

}  // namespace detail

/// q(alpha, beta) = sum alpha ln[(alpha/rowsum alpha) / (beta/rowsum beta)]
/// split as f - g with f = sum alpha ln(alpha/beta) (jointly convex) and
/// g = sum_x |alpha_x| ln(|alpha_x| / |beta_x|) (jointly convex).
inline DcParts q_dc_decomposition(const Matrix& alpha, const Matrix& beta) {
  if (alpha.rows() != beta.rows() || alpha.cols() != beta.cols()) {
    fail(ErrorKind::kShapeMismatch, "alpha and beta differ in shape");
  }
  detail::check_joint(alpha, "alpha");
  detail::check_joint(beta, "beta");
  DcParts out;
  const Vector ra = alpha.rowwise().sum();
  const Vector rb = beta.rowwise().sum();
  for (Index x = 0; x < alpha.rows(); ++x) {
    out.g += ra(x) * std::log(ra(x) / rb(x));
    for (Index u = 0; u < alpha.cols(); ++u) {
      const double a = alpha(x, u);
      const double b = beta(x, u);
      out.f += a * std::log(a / b);
      out.q += a * std::log((a / ra(x)) / (b / rb(x)));
    }
  }
  return out;
}

/// D_q = lam q(x) + (1 - lam) q(y) - q(lam x + (1 - lam) y); negative values
/// witness non-convexity of q.
inline double dc_gap(const std::pair<Matrix, Matrix>& x,
                     const std::pair<Matrix, Matrix>& y, double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "lambda must lie in [0, 1]");
  }
  const double qx = q_dc_decomposition(x.first, x.second).q;
  const double qy = q_dc_decomposition(y.first, y.second).q;
  const Matrix ma = lam * x.first + (1.0 - lam) * y.first;
  const Matrix mb = lam * x.second + (1.0 - lam) * y.second;
  const double qm = q_dc_decomposition(ma, mb).q;
  return lam * qx + (1.0 - lam) * qy - qm;
}

}  // namespace privchange
