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
#include <vector>

#include "privchange/common.hpp"
#include "privchange/error.hpp"
#include "privchange/mdp.hpp"

namespace privchange {
namespace lp {

struct Solution {
  Vector x;
  double objective = 0.0;
  int pivots = 0;
};

/// Dense two-phase tableau simplex for
///
///   min c^T x  s.t.  A x = b,  x >= 0.
///
/// Bland's rule is used throughout; the occupancy LPs are highly degenerate
/// (zero right-hand sides) and small, so anti-cycling matters more than speed.
/// Redundant equality rows are detected after phase one and dropped.
inline Solution solve_standard_form(const Matrix& a, const Vector& b,
                                    const Vector& c, double tol = 1e-11) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (b.size() != m || c.size() != n) {
    fail(ErrorKind::kShapeMismatch, "LP data shapes disagree");
  }
  // Columns: n structural, m artificial, 1 right-hand side.
  const Index rhs = n + m;
  Matrix t = Matrix::Zero(m, n + m + 1);
  for (Index i = 0; i < m; ++i) {
    const double sign = b(i) < 0.0 ? -1.0 : 1.0;
    t.row(i).head(n) = sign * a.row(i);
    t(i, n + i) = 1.0;
    t(i, rhs) = sign * b(i);
  }
  std::vector<Index> basis(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) basis[i] = n + i;
  std::vector<char> row_active(static_cast<std::size_t>(m), 1);
  int pivots = 0;
  const int max_pivots = 50000;

  auto pivot = [&](Index r, Index col) {
    t.row(r) /= t(r, col);
    for (Index i = 0; i < m; ++i) {
      if (i != r && row_active[i] && t(i, col) != 0.0) {
        t.row(i) -= t(i, col) * t.row(r);
      }
    }
    basis[r] = col;
    ++pivots;
  };

  // Runs simplex iterations for the reduced-cost row `d` (length n + m + 1,
  // last entry minus the objective value). Columns >= `enter_limit` never
  // enter. Returns false when unbounded.
  auto iterate = [&](Vector& d, Index enter_limit) {
    while (true) {
      if (pivots > max_pivots) {
        fail(ErrorKind::kNotConverged, "simplex pivot limit reached");
      }
      Index enter = -1;
      for (Index j = 0; j < enter_limit; ++j) {
        if (d(j) < -tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Index leave = -1;
      double best = kInf;
      for (Index i = 0; i < m; ++i) {
        if (!row_active[i] || t(i, enter) <= 1e-9) continue;
        const double ratio = t(i, rhs) / t(i, enter);
        if (ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 && leave >= 0 &&
             basis[i] < basis[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      d -= d(enter) * t.row(leave).transpose();
    }
  };

  // Phase one: minimize the sum of artificials.
  Vector d = Vector::Zero(n + m + 1);
  for (Index i = 0; i < m; ++i) {
    d.head(n) -= t.row(i).head(n).transpose();
    d(rhs) -= t(i, rhs);
  }
  iterate(d, n);
  if (-d(rhs) > 1e-9) {
    fail(ErrorKind::kInfeasible,
         "no feasible point (phase-one residual " + std::to_string(-d(rhs)) +
             ")");
  }
  // Drive remaining artificials out of the basis, or retire redundant rows.
  for (Index i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    Index col = -1;
    for (Index j = 0; j < n; ++j) {
      if (std::abs(t(i, j)) > 1e-9) {
        col = j;
        break;
      }
    }
    if (col >= 0) {
      pivot(i, col);
    } else {
      row_active[i] = 0;
    }
  }

  // Phase two.
  d.setZero();
  d.head(n) = c;
  for (Index i = 0; i < m; ++i) {
    if (!row_active[i]) continue;
    const double cb = c(basis[i]);
    if (cb != 0.0) d -= cb * t.row(i).transpose();
  }
  if (!iterate(d, n)) fail(ErrorKind::kUnbounded, "objective unbounded below");

  Solution sol;
  sol.x = Vector::Zero(n);
  for (Index i = 0; i < m; ++i) {
    if (row_active[i] && basis[i] < n) sol.x(basis[i]) = t(i, rhs);
  }
  sol.x = sol.x.cwiseMax(0.0);
  sol.objective = c.dot(sol.x);
  sol.pivots = pivots;
  return sol;
}

}  // namespace lp

/// Minimizes <cost, xi> over the occupancy polytope of `m`:
///   xi >= 0, sum xi = 1, sum_u xi(*,u)^T P(u) = sum_u xi(*,u)^T.
/// Entries of `cost` equal to +inf mark forbidden state-action pairs whose
/// occupancy is fixed at zero.
inline OccupancyMeasure solve_occupancy_lp(const Matrix& cost, const Mdp& m) {
  validate_mdp(m);
  const int nx = m.n_states();
  const int nu = m.n_actions();
  if (cost.rows() != nx || cost.cols() != nu) {
    fail(ErrorKind::kShapeMismatch, "cost table shape does not match model");
  }
  std::vector<std::pair<int, int>> cols;
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) {
      const double cxu = cost(x, u);
      if (std::isnan(cxu) || cxu == -kInf) {
        fail(ErrorKind::kInvalidArgument, "cost must be finite or +inf");
      }
      if (cxu != kInf) cols.emplace_back(x, u);
    }
  }
  if (cols.empty()) fail(ErrorKind::kInfeasible, "every pair is forbidden");
  const Index n = static_cast<Index>(cols.size());
  Matrix a = Matrix::Zero(nx + 1, n);
  Vector b = Vector::Zero(nx + 1);
  Vector c(n);
  for (Index j = 0; j < n; ++j) {
    const auto [x, u] = cols[j];
    for (int y = 0; y < nx; ++y) a(y, j) = m.prob(x, u, y);
    a(x, j) -= 1.0;
    a(nx, j) = 1.0;
    c(j) = cost(x, u);
  }
  b(nx) = 1.0;
  const lp::Solution sol = lp::solve_standard_form(a, b, c);
  OccupancyMeasure occ{Matrix::Zero(nx, nu)};
  for (Index j = 0; j < n; ++j) occ.xi(cols[j].first, cols[j].second) = sol.x(j);
  occ.xi /= occ.xi.sum();
  const double residual = stationarity_residual(m, occ);
  if (residual > 1e-8) {
    fail(ErrorKind::kInfeasible, "LP solution violates stationarity by " +
                                     std::to_string(residual));
  }
  return occ;
}

}  // namespace privchange
