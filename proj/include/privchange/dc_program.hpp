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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "privchange/common.hpp"
#include "privchange/error.hpp"
#include "privchange/mdp.hpp"

namespace privchange {

/// Solver knobs shared by every synthesis routine.
struct SynthesisConfig {
  int ccp_max_iters = 50;
  /// CCP stops once an iteration lowers the objective by less than
  /// ccp_tol * max(1, |objective|).
  double ccp_tol = 1e-7;
  /// Cap on Newton steps per convex subproblem.
  int inner_max_iters = 5000;
  /// Relative duality-gap target of each convex subproblem.
  double inner_tol = 1e-8;
  /// Floor applied to logarithm arguments at linearization points.
  double epsilon_floor = 1e-12;
  int restarts = 5;
  std::uint64_t seed = 0;
  /// Optional extra starting point (pi0, pi1), e.g. a neighbouring sweep cell.
  std::optional<std::pair<Policy, Policy>> warm_start;

  void validate() const {
    if (ccp_max_iters < 1 || inner_max_iters < 1 || restarts < 1) {
      fail(ErrorKind::kInvalidArgument, "iteration counts must be >= 1");
    }
    if (!(ccp_tol > 0.0) || !(inner_tol > 0.0) || !(epsilon_floor > 0.0)) {
      fail(ErrorKind::kInvalidArgument, "tolerances must be positive");
    }
  }
};

namespace dc {

/// Sparse linear functional z -> sum coef * z[index].
struct LinearForm {
  std::vector<std::pair<Index, double>> terms;

  double operator()(const Vector& z) const {
    double v = 0.0;
    for (const auto& [i, c] : terms) v += c * z(i);
    return v;
  }
  bool empty() const { return terms.empty(); }
};

/// weight * s ln(s / t) with s = num(z), t = den(z). Jointly convex in (s, t)
/// and positively homogeneous of degree one.
struct RelEntropyTerm {
  double weight = 1.0;
  LinearForm num;
  LinearForm den;
};

inline double rel_entropy(double s, double t) {
  if (s <= 0.0) return 0.0;
  if (t <= 0.0) return kInf;
  return s * std::log(s / t);
}

/// minimize  <linear, z> + sum convex_k - sum concave_j
/// s.t.      eq z = eq_rhs,  z >= 0.
///
/// Both term lists hold convex relative-entropy terms; the concave part of the
/// objective is the negated second list.
class Program {
 public:
  Index dim = 0;
  Matrix eq;
  Vector eq_rhs;
  Vector linear;
  std::vector<RelEntropyTerm> convex;
  std::vector<RelEntropyTerm> concave;

  double convex_value(const Vector& z) const {
    double v = linear.dot(z);
    for (const auto& term : convex) {
      v += term.weight * rel_entropy(term.num(z), term.den(z));
    }
    return v;
  }

  /// Sum of the subtracted terms (so objective = convex_value - this).
  double concave_value(const Vector& z) const {
    double v = 0.0;
    for (const auto& term : concave) {
      v += term.weight * rel_entropy(term.num(z), term.den(z));
    }
    return v;
  }

  double objective(const Vector& z) const {
    return convex_value(z) - concave_value(z);
  }

  /// Gradient of concave_value at zbar with log arguments floored at
  /// `floor`. By homogeneity the tangent of concave_value at zbar is the
  /// linear function z -> <gradient, z>.
  Vector concave_gradient(const Vector& zbar, double floor) const {
    Vector g = Vector::Zero(dim);
    for (const auto& term : concave) {
      const double s = std::max(term.num(zbar), floor);
      const double t = std::max(term.den(zbar), floor);
      const double ds = term.weight * (std::log(s / t) + 1.0);
      const double dt = -term.weight * s / t;
      for (const auto& [i, c] : term.num.terms) g(i) += ds * c;
      for (const auto& [i, c] : term.den.terms) g(i) += dt * c;
    }
    return g;
  }

  double equality_residual(const Vector& z) const {
    if (eq.rows() == 0) return 0.0;
    return (eq * z - eq_rhs).cwiseAbs().maxCoeff();
  }

  /// Orthonormal basis of ker(eq); computed on first use.
  const Matrix& null_space() const {
    if (!null_space_) {
      if (eq.rows() == 0) {
        null_space_ = Matrix::Identity(dim, dim);
      } else {
        Eigen::JacobiSVD<Matrix> svd(eq, Eigen::ComputeFullV);
        const Vector& sv = svd.singularValues();
        const double thr = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
        Index rank = 0;
        for (Index i = 0; i < sv.size(); ++i) rank += sv(i) > thr ? 1 : 0;
        null_space_ = svd.matrixV().rightCols(dim - rank);
      }
    }
    return *null_space_;
  }

 private:
  mutable std::optional<Matrix> null_space_;
};

struct InnerStats {
  int newton_steps = 0;
  bool converged = true;
};

/// Minimizes the convex surrogate  convex_value(z) + <shift, z>  over the
/// feasible set with a primal log-barrier method: damped Newton steps in the
/// null space of the equality constraints keep every iterate exactly feasible
/// and strictly positive. `start` must be strictly positive and feasible.
inline Vector solve_surrogate(const Program& prog, const Vector& shift,
                              const Vector& start, const SynthesisConfig& cfg,
                              InnerStats* stats = nullptr) {
  const Matrix& basis = prog.null_space();
  const Index d = prog.dim;
  const Index k = basis.cols();
  InnerStats local;
  InnerStats& st = stats ? *stats : local;
  if (k == 0) return start;

  const Vector lin = prog.linear + shift;
  auto surrogate = [&](const Vector& z) {
    double v = lin.dot(z);
    for (const auto& term : prog.convex) {
      v += term.weight * rel_entropy(term.num(z), term.den(z));
    }
    return v;
  };
  auto barrier_value = [&](const Vector& z, double tb) {
    double v = tb * surrogate(z);
    for (Index i = 0; i < d; ++i) v -= std::log(z(i));
    return v;
  };

  Vector z = start;
  const double scale = std::max(1.0, std::abs(surrogate(z)));
  const double m = static_cast<double>(d);
  double tb = m / scale;
  Vector grad(d);
  Matrix hess(d, d);

  while (true) {
    // Centering.
    for (int inner = 0; inner < 200; ++inner) {
      grad = tb * lin;
      hess.setZero();
      for (const auto& term : prog.convex) {
        const double s = term.num(z);
        const double t = term.den(z);
        const double w = tb * term.weight;
        const double ratio = s / t;
        const double ds = w * (std::log(ratio) + 1.0);
        const double dt = -w * ratio;
        for (const auto& [i, c] : term.num.terms) grad(i) += ds * c;
        for (const auto& [i, c] : term.den.terms) grad(i) += dt * c;
        // Hessian of s ln(s/t) is (1/s) v v^T with v = (1, -s/t).
        const double h = w / s;
        for (const auto& [i, ci] : term.num.terms) {
          for (const auto& [j, cj] : term.num.terms) hess(i, j) += h * ci * cj;
          for (const auto& [j, cj] : term.den.terms) {
            hess(i, j) -= h * ratio * ci * cj;
            hess(j, i) -= h * ratio * ci * cj;
          }
        }
        for (const auto& [i, ci] : term.den.terms) {
          for (const auto& [j, cj] : term.den.terms) {
            hess(i, j) += h * ratio * ratio * ci * cj;
          }
        }
      }
      for (Index i = 0; i < d; ++i) {
        grad(i) -= 1.0 / z(i);
        hess(i, i) += 1.0 / (z(i) * z(i));
      }
      const Vector g = basis.transpose() * grad;
      Matrix h = basis.transpose() * hess * basis;
      Eigen::LDLT<Matrix> ldlt(h);
      Vector dir = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !dir.allFinite()) {
        h.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
        dir = h.colPivHouseholderQr().solve(-g);
      }
      const double decrement = -g.dot(dir);
      if (!(decrement > 1e-18)) break;
      const Vector dz = basis * dir;

      double step = 1.0;
      for (Index i = 0; i < d; ++i) {
        if (dz(i) < 0.0) step = std::min(step, -0.99 * z(i) / dz(i));
      }
      const double f0 = barrier_value(z, tb);
      if (decrement > 0.25) {
        int halvings = 0;
        while (barrier_value(z + step * dz, tb) > f0 - 0.25 * step * decrement &&
               halvings < 60) {
          step *= 0.5;
          ++halvings;
        }
      }
      z += step * dz;
      z = z.cwiseMax(std::numeric_limits<double>::min());
      if (++st.newton_steps >= cfg.inner_max_iters) {
        st.converged = false;
        return z;
      }
      if (decrement < 1e-14) break;
    }
    if (m / tb <= cfg.inner_tol * std::max(1.0, std::abs(surrogate(z)))) break;
    tb *= 10.0;
  }
  return z;
}

struct StepResult {
  Vector next;
  double objective = 0.0;
  /// False when the surrogate minimizer failed to lower the objective and
  /// the current point was kept.
  bool moved = false;
  bool inner_converged = true;
};

/// One convex-concave iteration: replace the concave part by its tangent at
/// `current`, minimize the resulting convex majorant and keep the minimizer
/// only if it does not raise the true objective.
inline StepResult ccp_step(const Program& prog, const Vector& current,
                           const SynthesisConfig& cfg) {
  const Vector shift = -prog.concave_gradient(current, cfg.epsilon_floor);
  InnerStats stats;
  Vector candidate = solve_surrogate(prog, shift, current, cfg, &stats);
  const double f_cur = prog.objective(current);
  const double f_new = prog.objective(candidate);
  StepResult out;
  out.inner_converged = stats.converged;
  if (std::isfinite(f_new) && f_new <= f_cur) {
    out.next = std::move(candidate);
    out.objective = f_new;
    out.moved = true;
  } else {
    out.next = current;
    out.objective = f_cur;
  }
  return out;
}

struct CcpRun {
  Vector z;
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

/// CCP with extrapolation: each linearization point is the current iterate
/// pushed along the last move (Nesterov weights), used only when that does
/// not raise the objective. The accepted sequence stays nonincreasing.
inline CcpRun run_ccp(const Program& prog, Vector start,
                      const SynthesisConfig& cfg) {
  CcpRun run;
  run.z = std::move(start);
  run.history.push_back(prog.objective(run.z));
  Vector prev = run.z;
  double momentum = 1.0;
  bool inner_ok = true;
  for (int it = 0; it < cfg.ccp_max_iters; ++it) {
    const double f_cur = run.history.back();
    const double next_momentum =
        0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    double beta = (momentum - 1.0) / next_momentum;
    momentum = next_momentum;
    Vector base = run.z;
    bool extrapolated = false;
    if (beta > 0.0) {
      const Vector dir = run.z - prev;
      for (Index i = 0; i < dir.size(); ++i) {
        if (dir(i) < 0.0) beta = std::min(beta, -0.5 * run.z(i) / dir(i));
      }
      Vector y = run.z + beta * dir;
      if (prog.objective(y) <= f_cur) {
        base = std::move(y);
        extrapolated = true;
      } else {
        momentum = 1.0;
      }
    }
    StepResult step = ccp_step(prog, base, cfg);
    ++run.iterations;
    inner_ok = inner_ok && step.inner_converged;
    if (!step.moved && !extrapolated) {
      run.converged = inner_ok;
      break;
    }
    prev = run.z;
    run.z = std::move(step.next);
    run.history.push_back(step.objective);
    if (f_cur - step.objective <= cfg.ccp_tol * std::max(1.0, std::abs(f_cur))) {
      run.converged = inner_ok;
      break;
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Variable blocks
// ---------------------------------------------------------------------------

/// Index of occupancy/policy entry (x, u) in a block starting at `offset`.
inline Index block_index(Index offset, int x, int u, int n_actions) {
  return offset + static_cast<Index>(x) * n_actions + u;
}

/// Appends stationarity and unit-mass rows for an occupancy block of `m`.
inline void add_occupancy_block(Program& prog, const Mdp& m, Index offset) {
  const int nx = m.n_states();
  const int nu = m.n_actions();
  const Index row0 = prog.eq.rows();
  prog.eq.conservativeResize(row0 + nx + 1, prog.dim);
  prog.eq_rhs.conservativeResize(row0 + nx + 1);
  prog.eq.bottomRows(nx + 1).setZero();
  prog.eq_rhs.tail(nx + 1).setZero();
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) {
      const Index j = block_index(offset, x, u, nu);
      for (int y = 0; y < nx; ++y) prog.eq(row0 + y, j) += m.prob(x, u, y);
      prog.eq(row0 + x, j) -= 1.0;
      prog.eq(row0 + nx, j) = 1.0;
    }
  }
  prog.eq_rhs(row0 + nx) = 1.0;
}

/// Appends per-state simplex rows for a policy block.
inline void add_policy_block(Program& prog, int nx, int nu, Index offset) {
  const Index row0 = prog.eq.rows();
  prog.eq.conservativeResize(row0 + nx, prog.dim);
  prog.eq_rhs.conservativeResize(row0 + nx);
  prog.eq.bottomRows(nx).setZero();
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) {
      prog.eq(row0 + x, block_index(offset, x, u, nu)) = 1.0;
    }
    prog.eq_rhs(row0 + x) = 1.0;
  }
}

/// Linear form sum_u coef(u) * z[block(x, u)] skipping structural zeros.
template <typename Coef>
LinearForm row_form(Index offset, int x, int nu, Coef&& coef) {
  LinearForm f;
  for (int u = 0; u < nu; ++u) {
    const double c = coef(u);
    if (in_support(c)) f.terms.emplace_back(block_index(offset, x, u, nu), c);
  }
  return f;
}

inline Matrix block_matrix(const Vector& z, Index offset, int nx, int nu) {
  Matrix out(nx, nu);
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) out(x, u) = z(block_index(offset, x, u, nu));
  }
  return out;
}

inline void set_block(Vector& z, Index offset, const Matrix& values) {
  const int nu = static_cast<int>(values.cols());
  for (int x = 0; x < values.rows(); ++x) {
    for (int u = 0; u < nu; ++u) z(block_index(offset, x, u, nu)) = values(x, u);
  }
}

}  // namespace dc
}  // namespace privchange
