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

// Fixtures and independent oracles shared by the test binaries.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "privchange/privchange.hpp"

namespace pctest {

using privchange::Index;
using privchange::Matrix;
using privchange::Mdp;
using privchange::Policy;
using privchange::Rng;
using privchange::Vector;

inline Matrix random_stochastic(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    m.row(r) = privchange::dirichlet_ones(cols, rng).transpose();
  }
  return m;
}

/// Strictly positive kernels (Dirichlet(1) rows) and U[0,1) rewards.
inline Mdp random_mdp(int nx, int nu, Rng& rng) {
  Mdp m;
  for (int u = 0; u < nu; ++u) m.P.push_back(random_stochastic(nx, nx, rng));
  m.r.resize(nx, nu);
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) m.r(x, u) = privchange::uniform01(rng);
  }
  return m;
}

inline Policy random_policy(int nx, int nu, Rng& rng) {
  return {random_stochastic(nx, nu, rng)};
}

/// The 3-state / 2-action pair used throughout the examples.
inline std::pair<Mdp, Mdp> three_state_models() {
  Matrix a(3, 3), b(3, 3), c(3, 3), d(3, 3);
  a << .6, .3, .1, .05, .85, .1, .15, .15, .7;
  b << .5, .2, .3, .5, .3, .2, .3, .3, .4;
  c << .3, .3, .4, .35, .5, .15, .8, .05, .15;
  d << .3, .55, .15, .8, .1, .1, .5, .3, .2;
  Matrix r(3, 2);
  r << 1.0, 0.5, 0.0, 0.2, 0.3, 0.0;
  return {Mdp{{a, b}, r}, Mdp{{c, d}, r}};
}

/// theta * P0 + (1 - theta) * P1 with the rewards of m1.
inline Mdp mix(const Mdp& m0, const Mdp& m1, double theta) {
  Mdp out = m1;
  for (std::size_t u = 0; u < m0.P.size(); ++u) {
    out.P[u] = theta * m0.P[u] + (1.0 - theta) * m1.P[u];
  }
  return out;
}

/// Two-state pair with I_F ~ 0.0844 under uniform policies.
inline privchange::ChangeScenario two_state_scenario(std::int64_t nu) {
  Matrix p00(2, 2), p01(2, 2), p10(2, 2), p11(2, 2);
  p00 << .7, .3, .4, .6;
  p01 << .5, .5, .3, .7;
  p10 << .5, .5, .6, .4;
  p11 << .3, .7, .5, .5;
  Matrix r = Matrix::Identity(2, 2);
  privchange::ChangeScenario sc;
  sc.m0 = Mdp{{p00, p01}, r};
  sc.m1 = Mdp{{p10, p11}, r};
  sc.pi0 = Policy::uniform(2, 2);
  sc.pi1 = Policy::uniform(2, 2);
  sc.nu = nu;
  return sc;
}

inline privchange::LinearSystem example_linear_system() {
  privchange::LinearSystem s;
  s.A.resize(2, 2);
  s.A << 0, 1, 1, 1;
  s.B.resize(2, 1);
  s.B << 0.01, 1;
  s.F.resize(2, 1);
  s.F << 0.5, 0.7;
  s.theta = Vector::Ones(1);
  s.Q = Matrix::Identity(2, 2);
  s.K.resize(1, 2);
  s.K << -0.7, -0.9;
  s.R = Matrix::Identity(1, 1);
  s.nu = 100;
  return s;
}

/// Random stable system: A_cl = A + BK has spectral radius <= 0.9 by
/// construction (A is built from a scaled random A_cl).
inline privchange::LinearSystem random_linear_system(int n, int m, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gauss = [&](Index r, Index c) {
    Matrix g(r, c);
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) g(i, j) = normal(rng);
    }
    return g;
  };
  privchange::LinearSystem s;
  s.B = gauss(n, m);
  s.K = gauss(m, n) * 0.3;
  Matrix acl = gauss(n, n);
  const double radius = Eigen::EigenSolver<Matrix>(acl, false)
                            .eigenvalues()
                            .cwiseAbs()
                            .maxCoeff();
  acl *= (0.2 + 0.7 * privchange::uniform01(rng)) / radius;
  s.A = acl - s.B * s.K;
  const int k = 1 + static_cast<int>(rng() % 2);
  s.F = gauss(n, k);
  s.theta = gauss(k, 1);
  const Matrix gq = gauss(n, n);
  s.Q = gq * gq.transpose() + 0.5 * Matrix::Identity(n, n);
  const Matrix gr = gauss(m, m);
  s.R = gr * gr.transpose() + 0.5 * Matrix::Identity(m, m);
  s.nu = 10;
  return s;
}

// ---------------------------------------------------------------------------
// Two-state / two-action grid oracle
// ---------------------------------------------------------------------------

/// Dense evaluation of I_F and I_L for 2x2 models written out by hand, so
/// the grid oracle shares no code with the library.
struct TwoByTwo {
  // p[i][u][x][y] for model i.
  double p[2][2][2][2];

  explicit TwoByTwo(const Mdp& m0, const Mdp& m1) {
    for (int u = 0; u < 2; ++u) {
      for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 2; ++y) {
          p[0][u][x][y] = m0.P[u](x, y);
          p[1][u][x][y] = m1.P[u](x, y);
        }
      }
    }
  }

  static double xlogy(double a, double b) {
    if (a <= 0.0) return 0.0;
    if (b <= 0.0) return std::numeric_limits<double>::infinity();
    return a * std::log(a / b);
  }

  /// a[x] = pi0(u0|x), b[x] = pi1(u0|x).
  double mu1_0(const double b[2]) const {
    const double k01 = b[0] * p[1][0][0][1] + (1 - b[0]) * p[1][1][0][1];
    const double k10 = b[1] * p[1][0][1][0] + (1 - b[1]) * p[1][1][1][0];
    return k10 / (k01 + k10);
  }

  double rate_full(const double a[2], const double b[2]) const {
    const double mu0 = mu1_0(b);
    double total = 0.0;
    for (int x = 0; x < 2; ++x) {
      const double w = x == 0 ? mu0 : 1.0 - mu0;
      const double pol1[2] = {b[x], 1 - b[x]};
      const double pol0[2] = {a[x], 1 - a[x]};
      double inner = 0.0;
      for (int u = 0; u < 2; ++u) {
        inner += xlogy(pol1[u], pol0[u]);
        if (pol1[u] <= 0.0) continue;
        double d = 0.0;
        for (int y = 0; y < 2; ++y) d += xlogy(p[1][u][x][y], p[0][u][x][y]);
        inner += pol1[u] * d;
      }
      total += w * inner;
    }
    return total;
  }

  double rate_limited(const double a[2], const double b[2]) const {
    const double mu0 = mu1_0(b);
    double total = 0.0;
    for (int x = 0; x < 2; ++x) {
      const double w = x == 0 ? mu0 : 1.0 - mu0;
      double d = 0.0;
      for (int y = 0; y < 2; ++y) {
        const double k1 = b[x] * p[1][0][x][y] + (1 - b[x]) * p[1][1][x][y];
        const double k0 = a[x] * p[0][0][x][y] + (1 - a[x]) * p[0][1][x][y];
        d += xlogy(k1, k0);
      }
      total += w * d;
    }
    return total;
  }
};

struct GridOptimum {
  double value = std::numeric_limits<double>::infinity();
  std::array<double, 4> point{};  // pi0(u0|0), pi0(u0|1), pi1(u0|0), pi1(u0|1)
};

/// Exhaustive minimization over both policy simplices on a grid of the given
/// step. Ties keep the lexicographically first point.
template <typename Rate>
GridOptimum grid_minimum(const TwoByTwo& tb, double step, Rate&& rate) {
  const int n = static_cast<int>(std::lround(1.0 / step));
  GridOptimum best;
  for (int i0 = 0; i0 <= n; ++i0) {
    for (int i1 = 0; i1 <= n; ++i1) {
      for (int j0 = 0; j0 <= n; ++j0) {
        for (int j1 = 0; j1 <= n; ++j1) {
          const double a[2] = {i0 * step, i1 * step};
          const double b[2] = {j0 * step, j1 * step};
          const double v = rate(tb, a, b);
          if (v < best.value) {
            best.value = v;
            best.point = {a[0], a[1], b[0], b[1]};
          }
        }
      }
    }
  }
  return best;
}

inline GridOptimum grid_best_full(const Mdp& m0, const Mdp& m1, double step) {
  return grid_minimum(TwoByTwo(m0, m1), step,
                      [](const TwoByTwo& t, const double* a, const double* b) {
                        return t.rate_full(a, b);
                      });
}

inline GridOptimum grid_best_limited(const Mdp& m0, const Mdp& m1, double step) {
  return grid_minimum(TwoByTwo(m0, m1), step,
                      [](const TwoByTwo& t, const double* a, const double* b) {
                        return t.rate_limited(a, b);
                      });
}

// ---------------------------------------------------------------------------
// Deterministic-policy enumeration
// ---------------------------------------------------------------------------

/// Calls f(policy) for every deterministic policy of an nx x nu model.
template <typename F>
void for_each_deterministic(int nx, int nu, F&& f) {
  std::vector<int> actions(static_cast<std::size_t>(nx), 0);
  while (true) {
    f(Policy::deterministic(actions, nu));
    int i = 0;
    while (i < nx && ++actions[i] == nu) actions[i++] = 0;
    if (i == nx) break;
  }
}

/// max over deterministic policies of sum_x mu(x) reward(x, pi(x)), with mu
/// from power iteration on the induced chain.
inline double best_deterministic_gain(const Mdp& m, const Matrix& reward) {
  double best = -std::numeric_limits<double>::infinity();
  for_each_deterministic(m.n_states(), m.n_actions(), [&](const Policy& pi) {
    const Matrix k = privchange::induced_chain(m, pi);
    const Vector mu = privchange::stationary_by_power_iteration(k, 100000, 1e-15);
    double g = 0.0;
    for (int x = 0; x < m.n_states(); ++x) {
      for (int u = 0; u < m.n_actions(); ++u) g += mu(x) * pi.pi(x, u) * reward(x, u);
    }
    best = std::max(best, g);
  });
  return best;
}

// ---------------------------------------------------------------------------
// Quadruples probing convexity of q
// ---------------------------------------------------------------------------

inline Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

struct Quadruple {
  std::pair<Matrix, Matrix> x;
  std::pair<Matrix, Matrix> y;
};

inline Quadruple concave_quadruple() {
  return {{mat2(.5704, .0206, .1980, .2110), mat2(.1312, .1403, .3757, .3529)},
          {mat2(.2891, .0753, .5033, .1322), mat2(.1031, .3591, .3672, .1706)}};
}

inline Quadruple mixed_sign_quadruple() {
  return {{mat2(.2110, .3764, .3246, .0881), mat2(.4428, .3469, .0297, .1805)},
          {mat2(.1935, .3282, .4342, .0441), mat2(.3474, .2314, .0416, .3796)}};
}

inline std::vector<double> lambda_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 19; ++i) g.push_back(0.05 * i);
  return g;
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

/// Central differences of f at x with step h.
template <typename F>
Vector numeric_gradient(F&& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Brute-force max_{k <= t} sum_{i=k}^t z_i for t = first..n (1-based).
inline std::vector<double> brute_force_cusum(const std::vector<double>& z,
                                             std::int64_t first) {
  std::vector<double> out;
  for (std::int64_t t = first; t <= static_cast<std::int64_t>(z.size()); ++t) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t k = first; k <= t; ++k) {
      double s = 0.0;
      for (std::int64_t i = k; i <= t; ++i) s += z[static_cast<std::size_t>(i - 1)];
      best = std::max(best, s);
    }
    out.push_back(best);
  }
  return out;
}

/// Single-sum I_F: sum_{x,u} xi1(x,u) sum_{y,a} pi1(a|y) P1(y|x,u)
/// ln[pi1(a|y) P1(y|x,u) / (pi0(a|y) P0(y|x,u))].
inline double single_sum_full_rate(const Mdp& m0, const Mdp& m1,
                                   const Policy& pi0, const Policy& pi1) {
  const Matrix k1 = privchange::induced_chain(m1, pi1);
  const Vector mu = privchange::stationary_by_power_iteration(k1, 1000000, 1e-16);
  double total = 0.0;
  for (int x = 0; x < m1.n_states(); ++x) {
    for (int u = 0; u < m1.n_actions(); ++u) {
      const double xi = mu(x) * pi1.pi(x, u);
      for (int y = 0; y < m1.n_states(); ++y) {
        for (int a = 0; a < m1.n_actions(); ++a) {
          const double num = pi1.pi(y, a) * m1.P[u](x, y);
          if (num <= 0.0) continue;
          const double den = pi0.pi(y, a) * m0.P[u](x, y);
          total += xi * num * std::log(num / den);
        }
      }
    }
  }
  return total;
}

}  // namespace pctest
