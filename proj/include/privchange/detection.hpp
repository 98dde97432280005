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
#include <vector>

#include "privchange/common.hpp"
#include "privchange/error.hpp"
#include "privchange/mdp.hpp"

namespace privchange {

enum class ObservationMode { kFull, kLimited };

inline const char* to_string(ObservationMode m) {
  return m == ObservationMode::kFull ? "full" : "limited";
}

/// Per-step log-likelihood ratios. z[t - 1] holds Z_t; Z_1 is recorded as 0
/// because no transition has been observed at time 1.
struct LlrStream {
  std::vector<double> z;
  ObservationMode mode = ObservationMode::kFull;
  /// Time index of the first infinite entry, if any.
  std::optional<std::int64_t> first_violation;
};

/// Log tables for evaluating Z_t from consecutive observations.
class LlrModel {
 public:
  LlrModel(const ChangeScenario& sc, ObservationMode mode)
      : mode_(mode), nx_(sc.m0.n_states()), nu_(sc.m0.n_actions()) {
    validate_scenario(sc);
    const auto logratio = [](double p1, double p0) {
      const bool s1 = in_support(p1);
      const bool s0 = in_support(p0);
      if (!s1 && !s0) return 0.0;
      if (!s0) return kInf;
      if (!s1) return -kInf;
      return std::log(p1 / p0);
    };
    if (mode == ObservationMode::kFull) {
      policy_.resize(static_cast<std::size_t>(nx_ * nu_));
      for (int x = 0; x < nx_; ++x) {
        for (int u = 0; u < nu_; ++u) {
          policy_[x * nu_ + u] = logratio(sc.pi1.pi(x, u), sc.pi0.pi(x, u));
        }
      }
      trans_.resize(static_cast<std::size_t>(nx_ * nu_ * nx_));
      for (int x = 0; x < nx_; ++x) {
        for (int u = 0; u < nu_; ++u) {
          for (int y = 0; y < nx_; ++y) {
            trans_[(x * nu_ + u) * nx_ + y] =
                logratio(sc.m1.prob(x, u, y), sc.m0.prob(x, u, y));
          }
        }
      }
    } else {
      const Matrix k1 = induced_chain(sc.m1, sc.pi1);
      const Matrix k0 = induced_chain(sc.m0, sc.pi0);
      trans_.resize(static_cast<std::size_t>(nx_ * nx_));
      for (int x = 0; x < nx_; ++x) {
        for (int y = 0; y < nx_; ++y) {
          trans_[x * nx_ + y] = logratio(k1(x, y), k0(x, y));
        }
      }
    }
  }

  ObservationMode mode() const { return mode_; }

  /// Z_t from (X_{t-1}, U_{t-1}) and (X_t, U_t).
  double operator()(int x_prev, int u_prev, int x, int u) const {
    if (mode_ == ObservationMode::kLimited) return trans_[x_prev * nx_ + x];
    const double a = trans_[(x_prev * nu_ + u_prev) * nx_ + x];
    const double b = policy_[x * nu_ + u];
    // Opposite infinities cannot both occur on a path drawn from either model.
    return a + b;
  }

 private:
  ObservationMode mode_;
  int nx_;
  int nu_;
  std::vector<double> policy_;
  std::vector<double> trans_;
};

namespace detail {

inline LlrStream llr_stream(const ChangeScenario& sc, const Trajectory& traj,
                            ObservationMode mode) {
  const LlrModel model(sc, mode);
  const int nx = sc.m0.n_states();
  const int nu = sc.m0.n_actions();
  if (traj.states.size() != traj.actions.size()) {
    fail(ErrorKind::kShapeMismatch, "trajectory state/action lengths differ");
  }
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (traj.states[i] < 0 || traj.states[i] >= nx || traj.actions[i] < 0 ||
        traj.actions[i] >= nu) {
      fail(ErrorKind::kIndexOutOfRange,
           "trajectory entry " + std::to_string(i + 1) + " is out of range");
    }
  }
  LlrStream out;
  out.mode = mode;
  out.z.assign(traj.states.size(), 0.0);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const double z = model(traj.states[i - 1], traj.actions[i - 1],
                           traj.states[i], traj.actions[i]);
    out.z[i] = z;
    if (std::isinf(z) && !out.first_violation) {
      out.first_violation = static_cast<std::int64_t>(i + 1);
    }
  }
  return out;
}

}  // namespace detail

/// Z_t = ln [pi1(U_t|X_t) P1(X_t|X_{t-1},U_{t-1}) / (pi0(U_t|X_t) P0(...))].
inline LlrStream llr_full(const ChangeScenario& sc, const Trajectory& traj) {
  return detail::llr_stream(sc, traj, ObservationMode::kFull);
}

/// Z_t = ln [P1^{pi1}(X_t|X_{t-1}) / P0^{pi0}(X_t|X_{t-1})].
inline LlrStream llr_limited(const ChangeScenario& sc, const Trajectory& traj) {
  return detail::llr_stream(sc, traj, ObservationMode::kLimited);
}

// ---------------------------------------------------------------------------
// CUSUM
// ---------------------------------------------------------------------------

struct CusumRun {
  double threshold = 0.0;
  /// First time t with S_t >= threshold; empty when censored.
  std::optional<std::int64_t> stopping_time;
  /// S_t = max_{k <= t} sum_{i=k}^t Z_i for the processed times.
  std::vector<double> statistic_path;
  /// Time of statistic_path[0].
  std::int64_t first_time = 1;
};

/// Runs S_t = max(0, S_{t-1}) + Z_t over times t >= first_time (S before the
/// start is zero) and stops at the first crossing of c.
inline CusumRun cusum(const LlrStream& z, double c, std::int64_t first_time = 1) {
  if (!(c > 0.0)) fail(ErrorKind::kInvalidArgument, "threshold must be > 0");
  if (first_time < 1) fail(ErrorKind::kInvalidArgument, "first_time must be >= 1");
  CusumRun run;
  run.threshold = c;
  run.first_time = first_time;
  double s = 0.0;
  const auto n = static_cast<std::int64_t>(z.z.size());
  for (std::int64_t t = first_time; t <= n; ++t) {
    s = std::max(0.0, s) + z.z[static_cast<std::size_t>(t - 1)];
    run.statistic_path.push_back(s);
    if (s >= c) {
      run.stopping_time = t;
      break;
    }
  }
  return run;
}

struct DelayReport {
  enum class Kind { kDelay, kFalseAlarm };
  Kind kind = Kind::kDelay;
  ObservationMode mode = ObservationMode::kFull;
  double threshold = 0.0;
  /// Mean detection delay T - nu + 1, or mean stopping time without change.
  double mean = 0.0;
  double ci_halfwidth = 0.0;
  int runs = 0;
  int censored = 0;
  std::int64_t horizon = 0;
  std::int64_t nu = 0;
};

struct RawRun {
  int run = 0;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> stopping_time;
  std::int64_t nu = 0;
};

namespace detail {

/// Simulates one run and applies CUSUM from time `start`, stopping at the
/// first crossing. Returns the stopping time or nothing when censored.
inline std::optional<std::int64_t> cusum_run(const ChangeScenario& sc,
                                             const LlrModel& model, double c,
                                             std::int64_t start,
                                             std::int64_t horizon,
                                             std::uint64_t seed) {
  ScenarioSampler sampler(sc, seed);
  auto [x_prev, u_prev] = sampler.step();
  double s = 0.0;
  for (std::int64_t t = 2; t <= horizon; ++t) {
    const auto [x, u] = sampler.step();
    if (t >= start) {
      s = std::max(0.0, s) + model(x_prev, u_prev, x, u);
      if (s >= c) return t;
    }
    x_prev = x;
    u_prev = u;
  }
  return std::nullopt;
}

inline DelayReport monte_carlo(const ChangeScenario& sc, ObservationMode mode,
                               double c, int runs, std::int64_t horizon,
                               std::uint64_t seed, DelayReport::Kind kind,
                               std::vector<RawRun>* raw) {
  if (runs < 1) fail(ErrorKind::kInvalidArgument, "runs must be >= 1");
  if (!(c > 0.0)) fail(ErrorKind::kInvalidArgument, "threshold must be > 0");
  ChangeScenario scenario = sc;
  if (kind == DelayReport::Kind::kFalseAlarm) scenario.nu = kNeverChange;
  if (kind == DelayReport::Kind::kDelay && horizon < scenario.nu) {
    fail(ErrorKind::kInvalidArgument, "horizon must reach the change time");
  }
  // Stationarity of the pre-change law needs an irreducible chain.
  stationary_distribution(induced_chain(scenario.m0, scenario.pi0));
  if (kind == DelayReport::Kind::kDelay) {
    stationary_distribution(induced_chain(scenario.m1, scenario.pi1));
  }
  const LlrModel model(scenario, mode);
  const std::int64_t start =
      kind == DelayReport::Kind::kDelay ? std::max<std::int64_t>(scenario.nu, 2) : 2;

  std::vector<std::optional<std::int64_t>> stops(static_cast<std::size_t>(runs));
  parallel_for(stops.size(), [&](std::size_t r) {
    stops[r] = cusum_run(scenario, model, c, start, horizon, stream_seed(seed, r));
  });

  DelayReport rep;
  rep.kind = kind;
  rep.mode = mode;
  rep.threshold = c;
  rep.runs = runs;
  rep.horizon = horizon;
  rep.nu = kind == DelayReport::Kind::kDelay ? scenario.nu : kNeverChange;
  const std::int64_t offset =
      kind == DelayReport::Kind::kDelay ? scenario.nu - 1 : 0;
  std::vector<double> values;
  values.reserve(stops.size());
  for (std::size_t r = 0; r < stops.size(); ++r) {
    const std::int64_t t = stops[r].value_or(horizon);
    if (!stops[r]) ++rep.censored;
    values.push_back(static_cast<double>(t - offset));
    if (raw) {
      raw->push_back({static_cast<int>(r), stream_seed(seed, r), stops[r],
                      rep.nu});
    }
  }
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  rep.mean = sum.value() / runs;
  if (runs > 1) {
    CompensatedSum sq;
    for (double v : values) sq.add((v - rep.mean) * (v - rep.mean));
    rep.ci_halfwidth = kZ95 * std::sqrt(sq.value() / (runs - 1) / runs);
  }
  return rep;
}

}  // namespace detail

/// Monte Carlo detection delay at the scenario's change time. Run r uses seed
/// stream_seed(seed, r); censored runs contribute horizon - nu + 1.
inline DelayReport estimate_delay(const ChangeScenario& sc, ObservationMode mode,
                                  double c, int runs, std::int64_t horizon,
                                  std::uint64_t seed,
                                  std::vector<RawRun>* raw = nullptr) {
  return detail::monte_carlo(sc, mode, c, runs, horizon, seed,
                             DelayReport::Kind::kDelay, raw);
}

/// Mean stopping time when the change never happens; censored runs
/// contribute the horizon.
inline DelayReport estimate_false_alarm(const ChangeScenario& sc,
                                        ObservationMode mode, double c, int runs,
                                        std::int64_t horizon, std::uint64_t seed,
                                        std::vector<RawRun>* raw = nullptr) {
  return detail::monte_carlo(sc, mode, c, runs, horizon, seed,
                             DelayReport::Kind::kFalseAlarm, raw);
}

struct ErgodicEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
};

/// Mean of z[from_index..] (0-based) with a batch-means standard error over
/// up to 32 contiguous batches.
inline ErgodicEstimate ergodic_llr_average(const LlrStream& z,
                                           std::int64_t from_index) {
  const auto n_total = static_cast<std::int64_t>(z.z.size());
  if (from_index < 0 || from_index >= n_total) {
    fail(ErrorKind::kIndexOutOfRange, "from_index outside the stream");
  }
  const std::int64_t n = n_total - from_index;
  const double* data = z.z.data() + from_index;
  ErgodicEstimate est;
  est.samples = n;
  CompensatedSum sum;
  for (std::int64_t i = 0; i < n; ++i) sum.add(data[i]);
  est.mean = sum.value() / static_cast<double>(n);
  if (!std::isfinite(est.mean)) {
    est.std_error = kInf;
    return est;
  }
  const std::int64_t batches = std::min<std::int64_t>(32, n / 2);
  if (batches < 2) return est;
  const std::int64_t size = n / batches;
  CompensatedSum sq;
  CompensatedSum grand;
  std::vector<double> means;
  for (std::int64_t b = 0; b < batches; ++b) {
    CompensatedSum bs;
    for (std::int64_t i = b * size; i < (b + 1) * size; ++i) bs.add(data[i]);
    means.push_back(bs.value() / static_cast<double>(size));
    grand.add(means.back());
  }
  const double gm = grand.value() / static_cast<double>(batches);
  for (double m : means) sq.add((m - gm) * (m - gm));
  est.std_error = std::sqrt(sq.value() / static_cast<double>(batches - 1) /
                          static_cast<double>(batches));
  return est;
}

}  // namespace privchange
