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
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "privchange/common.hpp"
#include "privchange/error.hpp"

namespace privchange {

/// x_{t+1} = A x_t + B u_t + F theta 1{t >= nu} + w_t,  w_t ~ N(0, Q),
/// u_t = K x_t + alpha (+ N(0, R) for randomized policies).
struct LinearSystem {
  Matrix A;
  Matrix B;
  Matrix F;
  Vector theta;
  Matrix Q;
  Matrix K;
  Matrix R;
  std::int64_t nu = 1;

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  Vector shift() const { return F * theta; }
  Matrix closed_loop() const { return A + B * K; }
};

struct LinearTradeoffSolution {
  Vector alpha0;
  Vector alpha1;
  double value = 0.0;
  double rate = 0.0;
  Matrix sigma;
};

inline constexpr double kConditionWarn = 1e12;

inline bool is_schur(const Matrix& m) {
  if (m.rows() != m.cols()) {
    fail(ErrorKind::kShapeMismatch, "Schur test needs a square matrix");
  }
  if (m.size() == 0) return true;
  const double radius = Eigen::EigenSolver<Matrix>(m, false)
                            .eigenvalues()
                            .cwiseAbs()
                            .maxCoeff();
  return radius < 1.0 - 1e-12;
}

namespace detail {

inline double condition_estimate(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : kInf;
}

inline void warn_if_ill_conditioned(const Matrix& m, const char* what) {
  const double c = condition_estimate(m);
  if (c > kConditionWarn) {
    warn(std::string(what) + " is ill-conditioned (condition number " +
         std::to_string(c) + ")");
  }
}

/// Cholesky of a symmetric positive definite matrix.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    fail(ErrorKind::kShapeMismatch, std::string(what) + " must be square");
  }
  if (!m.isApprox(m.transpose(), 1e-10) && (m - m.transpose()).norm() > 1e-12) {
    fail(ErrorKind::kNotSpd, std::string(what) + " is not symmetric");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::kNotSpd, std::string(what) + " is not positive definite");
  }
  warn_if_ill_conditioned(m, what);
  return llt;
}

/// Solves M X = rhs for a general square M, raising `kind` when singular.
inline Matrix general_solve(const Matrix& m, const Matrix& rhs, ErrorKind kind,
                            const char* what) {
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) fail(kind, std::string(what) + " is singular");
  warn_if_ill_conditioned(m, what);
  return lu.solve(rhs);
}

}  // namespace detail

inline void validate_linear(const LinearSystem& s) {
  const Index n = s.A.rows();
  if (n < 1 || s.A.cols() != n) fail(ErrorKind::kShapeMismatch, "A must be square");
  if (s.B.rows() != n || s.B.cols() < 1) {
    fail(ErrorKind::kShapeMismatch, "B must have n rows");
  }
  if (s.F.rows() != n || s.F.cols() != s.theta.size()) {
    fail(ErrorKind::kShapeMismatch, "F must be n x dim(theta)");
  }
  if (s.Q.rows() != n || s.Q.cols() != n) {
    fail(ErrorKind::kShapeMismatch, "Q must be n x n");
  }
  if (s.K.rows() != s.B.cols() || s.K.cols() != n) {
    fail(ErrorKind::kShapeMismatch, "K must be m x n");
  }
  if (s.R.rows() != s.B.cols() || s.R.cols() != s.B.cols()) {
    fail(ErrorKind::kShapeMismatch, "R must be m x m");
  }
  detail::spd_factor(s.Q, "Q");
  detail::spd_factor(s.R, "R");
  if (Eigen::FullPivLU<Matrix>(s.B.transpose() * s.B).rank() < s.B.cols()) {
    fail(ErrorKind::kSingularProjection, "columns of B are dependent");
  }
  if (!is_schur(s.closed_loop())) {
    fail(ErrorKind::kNotSchur, "A + BK is not Schur");
  }
  if (s.nu < 1) fail(ErrorKind::kInvalidArgument, "change time must be >= 1");
}

/// Sigma = A_cl Sigma A_cl^T + W.
inline Matrix solve_lyapunov(const Matrix& a_cl, const Matrix& w) {
  const Index n = a_cl.rows();
  if (a_cl.cols() != n || w.rows() != n || w.cols() != n) {
    fail(ErrorKind::kShapeMismatch, "Lyapunov data must be n x n");
  }
  if (!is_schur(a_cl)) fail(ErrorKind::kNotSchur, "closed loop is not Schur");
  Matrix sigma(n, n);
  if (n <= 20) {
    // (I - A kron A) vec(Sigma) = vec(W), column-major vec.
    const Index nn = n * n;
    Matrix sys = Matrix::Identity(nn, nn);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        sys.block(j * n, i * n, n, n) -= a_cl(j, i) * a_cl;
      }
    }
    const Vector vec_w = Eigen::Map<const Vector>(w.data(), nn);
    const Vector vec_s = sys.partialPivLu().solve(vec_w);
    sigma = Eigen::Map<const Matrix>(vec_s.data(), n, n);
  } else {
    sigma = w;
    Matrix power = a_cl;
    // Doubling: Sigma_{2k} = Sigma_k + A^k Sigma_k A^kT.
    for (int it = 0; it < 200; ++it) {
      const Matrix next = sigma + power * sigma * power.transpose();
      const double diff = (next - sigma).cwiseAbs().maxCoeff();
      sigma = next;
      power = power * power;
      if (diff <= 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) break;
    }
  }
  return 0.5 * (sigma + sigma.transpose());
}

/// 0.5 (m1 - m0)^T Q^{-1} (m1 - m0).
inline double gaussian_kl_equal_cov(const Vector& m1, const Vector& m0,
                                    const Matrix& q) {
  if (m1.size() != m0.size() || q.rows() != m1.size()) {
    fail(ErrorKind::kShapeMismatch, "mean/covariance sizes disagree");
  }
  const auto llt = detail::spd_factor(q, "Q");
  const Vector d = m1 - m0;
  return std::max(0.5 * d.dot(llt.solve(d)), 0.0);
}

/// L^{-1} with L = I - A - BK.
inline Matrix l_inverse(const LinearSystem& s) {
  const Matrix l = Matrix::Identity(s.n(), s.n()) - s.closed_loop();
  return detail::general_solve(l, Matrix::Identity(s.n(), s.n()),
                               ErrorKind::kSingularL, "I - A - BK");
}

/// E = L^{-T} L^{-1}; x^T E x is the squared norm of the stationary mean
/// produced by a constant input x.
inline Matrix e_matrix(const LinearSystem& s) {
  const Matrix li = l_inverse(s);
  return li.transpose() * li;
}

/// B~_T(M) = (B^T (M + T) B)^{-1} B^T M.
inline Matrix btilde(const Matrix& b, const Matrix& m, const Matrix& t) {
  return detail::general_solve(b.transpose() * (m + t) * b, b.transpose() * m,
                               ErrorKind::kSingularProjection, "B^T (M + T) B");
}

inline Matrix btilde(const Matrix& b, const Matrix& m) {
  return btilde(b, m, Matrix::Zero(m.rows(), m.cols()));
}

inline Matrix q_inverse(const LinearSystem& s) {
  return detail::spd_factor(s.Q, "Q").solve(Matrix::Identity(s.n(), s.n()));
}

// ---------------------------------------------------------------------------
// Best privacy
// ---------------------------------------------------------------------------

inline double best_privacy_full_linear(const LinearSystem& s) {
  return gaussian_kl_equal_cov(s.shift(), Vector::Zero(s.n()), s.Q);
}

struct LimitedBestPrivacy {
  double rate = 0.0;
  Vector delta_g;
};

/// Minimizes 0.5 h^T Q^{-1} h over h = F theta + B dg: dg is the Q^{-1}
/// weighted least-squares cancellation of the shift.
inline LimitedBestPrivacy best_privacy_limited_linear(const LinearSystem& s) {
  const Matrix qi = q_inverse(s);
  const Vector shift = s.shift();
  LimitedBestPrivacy out;
  out.delta_g = -btilde(s.B, qi) * shift;
  const Vector h = shift + s.B * out.delta_g;
  out.rate = std::max(0.5 * h.dot(qi * h), 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Full information (randomized offsets with covariance R)
// ---------------------------------------------------------------------------

inline double full_rate_linear(const LinearSystem& s, const Vector& alpha0,
                               const Vector& alpha1) {
  return best_privacy_full_linear(s) +
         gaussian_kl_equal_cov(alpha1, alpha0, s.R);
}

inline Matrix full_sigma(const LinearSystem& s) {
  return solve_lyapunov(s.closed_loop(),
                        s.Q + s.B * s.R * s.B.transpose());
}

inline Matrix limited_sigma(const LinearSystem& s) {
  return solve_lyapunov(s.closed_loop(), s.Q);
}

namespace detail {

inline double mean_cost(const LinearSystem& s, const Matrix& e, double rho,
                        const Vector& alpha0, const Vector& alpha1) {
  const Vector pre = s.B * alpha0;
  const Vector post = s.B * alpha1 + s.shift();
  return (1.0 - rho) * pre.dot(e * pre) + rho * post.dot(e * post);
}

inline void check_offsets(const LinearSystem& s, const Vector& a0,
                          const Vector& a1) {
  if (a0.size() != s.m() || a1.size() != s.m()) {
    fail(ErrorKind::kShapeMismatch, "offsets must have one entry per input");
  }
}

inline void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "rho must lie in [0, 1]");
  }
}

inline void check_lambda_positive(double lambda) {
  if (!(lambda > 0.0) || std::isinf(lambda)) {
    fail(ErrorKind::kLambdaNonpositive, "lambda must be positive and finite");
  }
}

}  // namespace detail

inline double value_full_linear(const LinearSystem& s, double rho,
                                double lambda, const Vector& alpha0,
                                const Vector& alpha1) {
  detail::check_offsets(s, alpha0, alpha1);
  detail::check_rho(rho);
  const Matrix e = e_matrix(s);
  const Matrix sigma = full_sigma(s);
  return -detail::mean_cost(s, e, rho, alpha0, alpha1) - sigma.trace() -
         lambda * full_rate_linear(s, alpha0, alpha1);
}

inline LinearTradeoffSolution tradeoff_full_linear(const LinearSystem& s,
                                                   double rho, double lambda) {
  validate_linear(s);
  detail::check_rho(rho);
  detail::check_lambda_positive(lambda);
  const Matrix e = e_matrix(s);
  const Index n = s.n();
  const Matrix brb = s.B * s.R * s.B.transpose();
  const Matrix t =
      (Matrix::Identity(n, n) + (2.0 * (1.0 - rho) * rho / lambda) * e * brb) * e;
  const Matrix btb = s.B.transpose() * t * s.B;
  LinearTradeoffSolution sol;
  sol.alpha0 = -rho * detail::general_solve(btb, s.B.transpose() * e * s.shift(),
                                            ErrorKind::kSingularProjection,
                                            "B^T T B");
  sol.alpha1 = ((2.0 * (1.0 - rho) / lambda) * s.R * s.B.transpose() * e * s.B +
                Matrix::Identity(s.m(), s.m())) *
               sol.alpha0;
  sol.sigma = full_sigma(s);
  sol.rate = full_rate_linear(s, sol.alpha0, sol.alpha1);
  sol.value = value_full_linear(s, rho, lambda, sol.alpha0, sol.alpha1);
  return sol;
}

/// argmax over alpha1 of V_F(1, lambda, alpha1, 0) with the pre-change offset
/// pinned at zero.
inline Vector tradeoff_full_linear_pinned(const LinearSystem& s, double lambda) {
  validate_linear(s);
  detail::check_lambda_positive(lambda);
  const Matrix e = e_matrix(s);
  const Matrix rbe = s.R * s.B.transpose() * e;
  const Matrix lhs = rbe * s.B + 0.5 * lambda * Matrix::Identity(s.m(), s.m());
  return -detail::general_solve(lhs, rbe * s.shift(),
                                ErrorKind::kSingularProjection,
                                "R B^T E B + lambda/2 I");
}

// ---------------------------------------------------------------------------
// Limited information (deterministic offsets)
// ---------------------------------------------------------------------------

inline double limited_rate_linear(const LinearSystem& s, const Vector& alpha0,
                                  const Vector& alpha1) {
  return gaussian_kl_equal_cov(s.shift() + s.B * (alpha1 - alpha0),
                               Vector::Zero(s.n()), s.Q);
}

inline double value_limited_linear(const LinearSystem& s, double rho,
                                   double lambda, const Vector& alpha0,
                                   const Vector& alpha1) {
  detail::check_offsets(s, alpha0, alpha1);
  detail::check_rho(rho);
  const Matrix e = e_matrix(s);
  const Matrix sigma = limited_sigma(s);
  return -detail::mean_cost(s, e, rho, alpha0, alpha1) - sigma.trace() -
         lambda * limited_rate_linear(s, alpha0, alpha1);
}

/// Stationary point of V_L from the general closed form, valid for every
/// rho in [0, 1].
inline LinearTradeoffSolution tradeoff_limited_linear_general(
    const LinearSystem& s, double rho, double lambda) {
  validate_linear(s);
  detail::check_rho(rho);
  detail::check_lambda_positive(lambda);
  const Matrix e = e_matrix(s);
  const Matrix qi = q_inverse(s);
  const Vector shift = s.shift();
  const Matrix g = btilde(s.B, qi, (2.0 * (1.0 - rho) / lambda) * e);
  const Matrix m = (1.0 - rho) * e * s.B * g + rho * e;
  LinearTradeoffSolution sol;
  sol.alpha1 = -btilde(s.B, m) * shift;
  sol.alpha0 = g * (shift + s.B * sol.alpha1);
  sol.sigma = limited_sigma(s);
  sol.rate = limited_rate_linear(s, sol.alpha0, sol.alpha1);
  sol.value = value_limited_linear(s, rho, lambda, sol.alpha0, sol.alpha1);
  return sol;
}

/// Maximizer of V_L. At rho = 0 the pre-change offset is exactly zero and
/// alpha1 cancels the shift in the Q^{-1} metric.
inline LinearTradeoffSolution tradeoff_limited_linear(const LinearSystem& s,
                                                      double rho,
                                                      double lambda) {
  if (rho != 0.0) return tradeoff_limited_linear_general(s, rho, lambda);
  validate_linear(s);
  detail::check_lambda_positive(lambda);
  LinearTradeoffSolution sol;
  sol.alpha0 = Vector::Zero(s.m());
  sol.alpha1 = -btilde(s.B, q_inverse(s)) * s.shift();
  sol.sigma = limited_sigma(s);
  sol.rate = limited_rate_linear(s, sol.alpha0, sol.alpha1);
  sol.value = value_limited_linear(s, rho, lambda, sol.alpha0, sol.alpha1);
  return sol;
}

/// argmax over alpha1 of V_L(1, lambda, alpha1, 0).
inline Vector tradeoff_limited_linear_pinned(const LinearSystem& s,
                                             double lambda) {
  validate_linear(s);
  detail::check_lambda_positive(lambda);
  const Matrix m = (2.0 / lambda) * e_matrix(s) + q_inverse(s);
  return -btilde(s.B, m) * s.shift();
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Stationary E||x||^2 = ||L^{-1}(B alpha + shift)||^2 + tr(Sigma).
inline double stationary_moment(const LinearSystem& s, const Vector& alpha,
                                bool post_change, bool stochastic_policy) {
  Vector input = s.B * alpha;
  if (post_change) input += s.shift();
  const Vector mean = l_inverse(s) * input;
  const Matrix sigma = stochastic_policy ? full_sigma(s) : limited_sigma(s);
  return mean.squaredNorm() + sigma.trace();
}

struct LinearTrajectory {
  Matrix x;  // n x horizon, column t-1 holds x_t
  Vector xsq;
  std::uint64_t seed = 0;
};

inline LinearTrajectory simulate_linear(const LinearSystem& s,
                                        const Vector& alpha0,
                                        const Vector& alpha1,
                                        std::int64_t horizon, std::uint64_t seed,
                                        bool stochastic_policy) {
  validate_linear(s);
  detail::check_offsets(s, alpha0, alpha1);
  if (horizon < 1) fail(ErrorKind::kInvalidArgument, "horizon must be >= 1");
  const Index n = s.n();
  const Index m = s.m();
  const Matrix sigma = stochastic_policy ? full_sigma(s) : limited_sigma(s);
  const Matrix chol_sigma = Eigen::LLT<Matrix>(sigma).matrixL();
  const Matrix chol_q = Eigen::LLT<Matrix>(s.Q).matrixL();
  const Matrix chol_r = Eigen::LLT<Matrix>(s.R).matrixL();
  const Vector shift = s.shift();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Index k) {
    Vector v(k);
    for (Index i = 0; i < k; ++i) v(i) = normal(rng);
    return v;
  };

  LinearTrajectory out;
  out.seed = seed;
  out.x.resize(n, horizon);
  out.xsq.resize(horizon);
  Vector x = l_inverse(s) * (s.B * alpha0) + chol_sigma * draw(n);
  for (std::int64_t t = 1; t <= horizon; ++t) {
    out.x.col(t - 1) = x;
    out.xsq(t - 1) = x.squaredNorm();
    if (t == horizon) break;
    const bool post = t >= s.nu;
    Vector u = s.K * x + (post ? alpha1 : alpha0);
    if (stochastic_policy) u += chol_r * draw(m);
    Vector next = s.A * x + s.B * u + chol_q * draw(n);
    if (post) next += shift;
    x = std::move(next);
  }
  return out;
}

struct LinearMomentStats {
  std::vector<double> mean;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  int runs = 0;
};

/// Per-step mean of ||x_t||^2 across independent runs with 95% normal
/// confidence bands. Run r uses seed stream_seed(seed, r).
inline LinearMomentStats linear_moment_stats(const LinearSystem& s,
                                             const Vector& alpha0,
                                             const Vector& alpha1,
                                             std::int64_t horizon, int runs,
                                             std::uint64_t seed,
                                             bool stochastic_policy) {
  if (runs < 2) fail(ErrorKind::kInvalidArgument, "need at least two runs");
  std::vector<Vector> paths(static_cast<std::size_t>(runs));
  parallel_for(paths.size(), [&](std::size_t r) {
    paths[r] = simulate_linear(s, alpha0, alpha1, horizon,
                               stream_seed(seed, r), stochastic_policy)
                   .xsq;
  });
  LinearMomentStats st;
  st.runs = runs;
  for (std::int64_t t = 0; t < horizon; ++t) {
    CompensatedSum sum;
    for (const auto& p : paths) sum.add(p(t));
    const double mean = sum.value() / runs;
    CompensatedSum sq;
    for (const auto& p : paths) sq.add((p(t) - mean) * (p(t) - mean));
    const double half = kZ95 * std::sqrt(sq.value() / (runs - 1) / runs);
    st.mean.push_back(mean);
    st.ci_low.push_back(mean - half);
    st.ci_high.push_back(mean + half);
  }
  return st;
}

}  // namespace privchange
