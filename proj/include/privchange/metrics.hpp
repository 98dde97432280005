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

#include <optional>
#include <string>
#include <vector>

#include "privchange/common.hpp"
#include "privchange/error.hpp"
#include "privchange/mdp.hpp"

namespace privchange {

// Rates are extended reals: +infinity (kInf) is returned exactly when an
// absolute-continuity condition fails on a visited site.

/// D(p, q) = sum_{i: p_i > 0} p_i ln(p_i / q_i).
inline double kl_categorical(const Eigen::Ref<const Vector>& p,
                             const Eigen::Ref<const Vector>& q) {
  if (p.size() != q.size()) {
    fail(ErrorKind::kShapeMismatch, "distributions differ in length");
  }
  double d = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (!in_support(p(i))) continue;
    if (!in_support(q(i))) return kInf;
    d += p(i) * std::log(p(i) / q(i));
  }
  // Rounding can leave tiny negative totals for p == q.
  return std::max(d, 0.0);
}

/// Bernoulli divergence d(p, q) with the 0 ln 0 = 0 convention.
inline double kl_bernoulli(double p, double q) {
  const auto term = [](double a, double b) {
    if (!in_support(a)) return 0.0;
    if (!in_support(b)) return kInf;
    return a * std::log(a / b);
  };
  return std::max(term(p, q) + term(1.0 - p, 1.0 - q), 0.0);
}

/// Rates at or below this are rounding noise around an exact zero.
inline constexpr double kZeroRate = 1e-14;

/// Privacy level I^{-1}: +inf for a zero rate, 0 for an infinite one.
inline double privacy_level(double rate) {
  if (rate < 0.0 || std::isnan(rate)) {
    fail(ErrorKind::kInvalidArgument, "rate must be nonnegative");
  }
  if (rate <= kZeroRate) return kInf;
  if (std::isinf(rate)) return 0.0;
  return 1.0 / rate;
}

/// A site at which absolute continuity fails. `action` is set for model
/// violations P1(x,u) not<< P0(x,u) in the full-information channel.
struct ContinuityViolation {
  enum class Channel { kFull, kLimited };
  Channel channel;
  int state;
  std::optional<int> action;
};

struct RateBreakdown {
  double rate = 0.0;
  std::vector<ContinuityViolation> violations;
};

namespace detail {

inline void check_rate_inputs(const Mdp& m0, const Mdp& m1, const Policy& pi0,
                              const Policy& pi1) {
  check_same_spaces(m0, m1);
  validate_policy(pi0, m0.n_states(), m0.n_actions());
  validate_policy(pi1, m0.n_states(), m0.n_actions());
}

}  // namespace detail

/// I_F = E_{x~mu1, u~pi1}[D(P1(x,u), P0(x,u))] + E_{x~mu1}[D(pi1(x), pi0(x))]
/// with violation sites.
inline RateBreakdown full_info_breakdown(const Mdp& m0, const Mdp& m1,
                                         const Policy& pi0, const Policy& pi1) {
  detail::check_rate_inputs(m0, m1, pi0, pi1);
  const Vector mu1 = stationary_distribution(induced_chain(m1, pi1));
  RateBreakdown out;
  CompensatedSum total;
  for (int x = 0; x < m1.n_states(); ++x) {
    if (!in_support(mu1(x))) continue;
    double model_term = 0.0;
    for (int u = 0; u < m1.n_actions(); ++u) {
      const double w = pi1.pi(x, u);
      if (!in_support(w)) continue;
      const double d = kl_categorical(m1.next(x, u), m0.next(x, u));
      if (std::isinf(d)) {
        out.violations.push_back(
            {ContinuityViolation::Channel::kFull, x, u});
      } else {
        model_term += w * d;
      }
    }
    const double policy_term =
        kl_categorical(pi1.pi.row(x).transpose(), pi0.pi.row(x).transpose());
    if (std::isinf(policy_term)) {
      out.violations.push_back(
          {ContinuityViolation::Channel::kFull, x, std::nullopt});
    } else {
      total.add(mu1(x) * (model_term + policy_term));
    }
  }
  out.rate = out.violations.empty() ? total.value() : kInf;
  return out;
}

inline double full_info_rate(const Mdp& m0, const Mdp& m1, const Policy& pi0,
                             const Policy& pi1) {
  return full_info_breakdown(m0, m1, pi0, pi1).rate;
}

/// I_L = E_{x~mu1}[D(P1^{pi1}(x), P0^{pi0}(x))] with violation sites.
inline RateBreakdown limited_info_breakdown(const Mdp& m0, const Mdp& m1,
                                            const Policy& pi0,
                                            const Policy& pi1) {
  detail::check_rate_inputs(m0, m1, pi0, pi1);
  const Matrix k1 = induced_chain(m1, pi1);
  const Matrix k0 = induced_chain(m0, pi0);
  const Vector mu1 = stationary_distribution(k1);
  RateBreakdown out;
  CompensatedSum total;
  for (int x = 0; x < m1.n_states(); ++x) {
    if (!in_support(mu1(x))) continue;
    const double d =
        kl_categorical(k1.row(x).transpose(), k0.row(x).transpose());
    if (std::isinf(d)) {
      out.violations.push_back(
          {ContinuityViolation::Channel::kLimited, x, std::nullopt});
    } else {
      total.add(mu1(x) * d);
    }
  }
  out.rate = out.violations.empty() ? total.value() : kInf;
  return out;
}

inline double limited_info_rate(const Mdp& m0, const Mdp& m1,
                                const Policy& pi0, const Policy& pi1) {
  return limited_info_breakdown(m0, m1, pi0, pi1).rate;
}

/// E_{x~mu1}[max_{x'} d(P1^{pi1}(x'|x), P0^{pi0}(x'|x))], a lower bound on I_L
/// obtained by coarsening each next-state law to a single transition event.
inline double limited_info_lower_bound(const Mdp& m0, const Mdp& m1,
                                       const Policy& pi0, const Policy& pi1) {
  detail::check_rate_inputs(m0, m1, pi0, pi1);
  const Matrix k1 = induced_chain(m1, pi1);
  const Matrix k0 = induced_chain(m0, pi0);
  const Vector mu1 = stationary_distribution(k1);
  CompensatedSum total;
  for (int x = 0; x < m1.n_states(); ++x) {
    if (!in_support(mu1(x))) continue;
    double best = 0.0;
    for (int y = 0; y < m1.n_states(); ++y) {
      best = std::max(best, kl_bernoulli(k1(x, y), k0(x, y)));
    }
    if (std::isinf(best)) return kInf;
    total.add(mu1(x) * best);
  }
  return total.value();
}

/// Everything an eavesdropper analysis reports for one (m0, m1, pi0, pi1).
struct PrivacyReport {
  double i_f = 0.0;
  double i_l = 0.0;
  double i_l_lower = 0.0;
  double privacy_full = kInf;
  double privacy_limited = kInf;
  std::vector<ContinuityViolation> ac_violations;
};

inline PrivacyReport privacy_report(const Mdp& m0, const Mdp& m1,
                                    const Policy& pi0, const Policy& pi1) {
  PrivacyReport rep;
  auto full = full_info_breakdown(m0, m1, pi0, pi1);
  auto limited = limited_info_breakdown(m0, m1, pi0, pi1);
  rep.i_f = full.rate;
  rep.i_l = limited.rate;
  rep.i_l_lower = limited_info_lower_bound(m0, m1, pi0, pi1);
  rep.privacy_full = privacy_level(rep.i_f);
  rep.privacy_limited = privacy_level(rep.i_l);
  rep.ac_violations = std::move(full.violations);
  rep.ac_violations.insert(rep.ac_violations.end(), limited.violations.begin(),
                           limited.violations.end());
  return rep;
}

/// Table D(P1(x,u), P0(x,u)); +inf where P1(x,u) is not << P0(x,u).
inline Matrix model_divergence_table(const Mdp& m0, const Mdp& m1) {
  check_same_spaces(m0, m1);
  Matrix d(m0.n_states(), m0.n_actions());
  for (int x = 0; x < m0.n_states(); ++x) {
    for (int u = 0; u < m0.n_actions(); ++u) {
      d(x, u) = kl_categorical(m1.next(x, u), m0.next(x, u));
    }
  }
  return d;
}

}  // namespace privchange
