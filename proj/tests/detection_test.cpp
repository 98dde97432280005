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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "test_support.hpp"

namespace pc = privchange;
using pctest::Matrix;
using pctest::Mdp;
using pctest::Policy;
using pctest::Vector;

namespace {

pc::ChangeScenario three_state_scenario(std::int64_t nu) {
  const auto [m0, m1] = pctest::three_state_models();
  return {m0, m1, Policy::uniform(3, 2), Policy::uniform(3, 2), nu};
}

pc::LlrStream stream_of(std::vector<double> z) {
  pc::LlrStream s;
  s.z = std::move(z);
  return s;
}

}  // namespace

TEST(Llr, IdenticalModelsGiveZeros) {
  auto sc = three_state_scenario(50);
  sc.m1 = sc.m0;
  const auto traj = pc::simulate(sc, 500, 1);
  for (double z : pc::llr_full(sc, traj).z) EXPECT_EQ(z, 0.0);
  for (double z : pc::llr_limited(sc, traj).z) EXPECT_EQ(z, 0.0);
}

TEST(Llr, FullStreamMatchesHandFormula) {
  auto sc = three_state_scenario(20);
  sc.pi1 = Policy{Matrix::Constant(3, 2, 0.5)};
  sc.pi1.pi.row(0) << 0.8, 0.2;
  const auto traj = pc::simulate(sc, 60, 2);
  const auto z = pc::llr_full(sc, traj);
  EXPECT_EQ(z.z[0], 0.0);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const int xp = traj.states[i - 1], up = traj.actions[i - 1];
    const int x = traj.states[i], u = traj.actions[i];
    const double expect =
        std::log(sc.pi1.pi(x, u) * sc.m1.P[up](xp, x) /
                 (sc.pi0.pi(x, u) * sc.m0.P[up](xp, x)));
    EXPECT_NEAR(z.z[i], expect, 1e-14);
  }
}

TEST(Llr, ErgodicAveragesMatchRates) {
  auto sc = three_state_scenario(1);
  const double i_f = pc::full_info_rate(sc.m0, sc.m1, sc.pi0, sc.pi1);
  const double i_l = pc::limited_info_rate(sc.m0, sc.m1, sc.pi0, sc.pi1);
  const auto traj = pc::simulate(sc, 100001, 3);
  const auto full = pc::ergodic_llr_average(pc::llr_full(sc, traj), 1);
  const auto lim = pc::ergodic_llr_average(pc::llr_limited(sc, traj), 1);
  EXPECT_EQ(full.samples, 100000);
  EXPECT_NEAR(full.mean, i_f, 0.05 * i_f);
  EXPECT_NEAR(full.mean, i_f, 3 * full.std_error);
  EXPECT_NEAR(lim.mean, i_l, 0.05 * i_l);
  EXPECT_NEAR(lim.mean, i_l, 3 * lim.std_error);
}

TEST(Llr, PreChangeDriftIsNegative) {
  const auto sc = three_state_scenario(pc::kNeverChange);
  const auto traj = pc::simulate(sc, 50000, 4);
  EXPECT_LT(pc::ergodic_llr_average(pc::llr_full(sc, traj), 1).mean, 0.0);
  EXPECT_LT(pc::ergodic_llr_average(pc::llr_limited(sc, traj), 1).mean, 0.0);
}

TEST(Llr, LimitedAverageBelowFullOnAverage) {
  const auto sc = three_state_scenario(1);
  double full = 0.0, lim = 0.0;
  for (int r = 0; r < 100; ++r) {
    const auto traj = pc::simulate(sc, 2001, pc::stream_seed(5, r));
    full += pc::ergodic_llr_average(pc::llr_full(sc, traj), 1).mean / 100;
    lim += pc::ergodic_llr_average(pc::llr_limited(sc, traj), 1).mean / 100;
  }
  EXPECT_LT(lim, full);
}

TEST(Llr, SupportViolationIsFlagged) {
  auto sc = three_state_scenario(1);
  sc.pi0 = Policy::deterministic({0, 0, 0}, 2);
  const auto traj = pc::simulate(sc, 200, 6);
  const auto z = pc::llr_full(sc, traj);
  ASSERT_TRUE(z.first_violation.has_value());
  EXPECT_EQ(z.z[*z.first_violation - 1], pc::kInf);
}

TEST(Llr, RejectsOutOfRangeTrajectory) {
  const auto sc = three_state_scenario(1);
  pc::Trajectory traj;
  traj.states = {0, 5};
  traj.actions = {0, 0};
  try {
    pc::llr_full(sc, traj);
    ADD_FAILURE() << "expected IndexOutOfRange";
  } catch (const pc::Error& e) {
    EXPECT_EQ(e.kind(), pc::ErrorKind::kIndexOutOfRange);
  }
}

TEST(Cusum, DeterministicRamp) {
  const auto run = pc::cusum(stream_of(std::vector<double>(20, 1.0)), 5.0);
  ASSERT_TRUE(run.stopping_time.has_value());
  EXPECT_EQ(*run.stopping_time, 5);
}

TEST(Cusum, NegativeStreamIsCensored) {
  const auto run = pc::cusum(stream_of(std::vector<double>(100, -1.0)), 5.0);
  EXPECT_FALSE(run.stopping_time.has_value());
  EXPECT_EQ(run.statistic_path.size(), 100u);
}

TEST(Cusum, PathMatchesBruteForce) {
  pc::Rng rng(7);
  std::normal_distribution<double> normal(-0.1, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> z(200);
    for (double& v : z) v = normal(rng);
    const std::int64_t first = 1 + static_cast<std::int64_t>(rng() % 20);
    const auto run = pc::cusum(stream_of(z), 1e9, first);
    const auto oracle = pctest::brute_force_cusum(z, first);
    ASSERT_EQ(run.statistic_path.size(), oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      EXPECT_NEAR(run.statistic_path[i], oracle[i], 1e-12);
    }
  }
}

TEST(Cusum, RejectsBadThreshold) {
  EXPECT_THROW(pc::cusum(stream_of({1.0}), 0.0), pc::Error);
}

TEST(Delay, TinyThresholdStopsAlmostImmediately) {
  const auto sc = pctest::two_state_scenario(50);
  std::vector<pc::RawRun> raw;
  const auto rep =
      pc::estimate_delay(sc, pc::ObservationMode::kFull, 1e-9, 500, 2000, 8, &raw);
  EXPECT_GE(rep.mean, 1.0);
  EXPECT_LT(rep.mean, 3.0);
  int immediate = 0;
  for (const auto& r : raw) immediate += r.stopping_time == 50 ? 1 : 0;
  EXPECT_GT(immediate, 150);
  EXPECT_EQ(rep.censored, 0);
}

TEST(Delay, WaldApproximationAndScaling) {
  const auto sc = pctest::two_state_scenario(50);
  const double i_f = pc::full_info_rate(sc.m0, sc.m1, sc.pi0, sc.pi1);
  const auto d8 =
      pc::estimate_delay(sc, pc::ObservationMode::kFull, 8.0, 1000, 5000, 9);
  const auto d16 =
      pc::estimate_delay(sc, pc::ObservationMode::kFull, 16.0, 1000, 5000, 9);
  EXPECT_GE(d8.mean, 0.75 * 8.0 / i_f);
  EXPECT_LE(d8.mean, 1.25 * 8.0 / i_f);
  EXPECT_GE(d16.mean / d8.mean, 1.7);
  EXPECT_LE(d16.mean / d8.mean, 2.3);
  EXPECT_EQ(d8.censored, 0);
}

TEST(Delay, LimitedObserverIsSlower) {
  const auto sc = pctest::two_state_scenario(50);
  const auto full =
      pc::estimate_delay(sc, pc::ObservationMode::kFull, 6.0, 500, 5000, 10);
  const auto lim =
      pc::estimate_delay(sc, pc::ObservationMode::kLimited, 6.0, 500, 5000, 10);
  EXPECT_GT(lim.mean, full.mean);
}

TEST(Delay, MoreDistinguishableModelsAreDetectedSooner) {
  const auto near = [] {
    auto sc = pctest::two_state_scenario(50);
    sc.m1 = pctest::mix(sc.m0, sc.m1, 0.5);
    return sc;
  }();
  const auto far = pctest::two_state_scenario(50);
  const auto d_near =
      pc::estimate_delay(near, pc::ObservationMode::kFull, 6.0, 400, 20000, 11);
  const auto d_far =
      pc::estimate_delay(far, pc::ObservationMode::kFull, 6.0, 400, 20000, 11);
  EXPECT_LT(d_far.mean, d_near.mean);
  // Pre-change paths do not depend on the post-change model.
  const auto a = pc::simulate(near, 49, 3);
  const auto b = pc::simulate(far, 49, 3);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.actions, b.actions);
}

TEST(Delay, CensoredRunsCountTheHorizon) {
  auto sc = pctest::two_state_scenario(10);
  sc.m1 = sc.m0;
  const auto rep =
      pc::estimate_delay(sc, pc::ObservationMode::kFull, 8.0, 20, 300, 12);
  EXPECT_EQ(rep.censored, 20);
  EXPECT_DOUBLE_EQ(rep.mean, 300.0 - 10.0 + 1.0);
}

TEST(Delay, IndependentOfThreadCount) {
  const auto sc = pctest::two_state_scenario(50);
  setenv("PRIVCHANGE_THREADS", "1", 1);
  const auto one = pc::estimate_delay(sc, pc::ObservationMode::kFull, 5.0, 64, 3000, 13);
  setenv("PRIVCHANGE_THREADS", "4", 1);
  const auto four = pc::estimate_delay(sc, pc::ObservationMode::kFull, 5.0, 64, 3000, 13);
  unsetenv("PRIVCHANGE_THREADS");
  EXPECT_EQ(one.mean, four.mean);
  EXPECT_EQ(one.ci_halfwidth, four.ci_halfwidth);
}

TEST(FalseAlarm, IdenticalModelsNeverAlarm) {
  auto sc = three_state_scenario(1);
  sc.m1 = sc.m0;
  const auto rep =
      pc::estimate_false_alarm(sc, pc::ObservationMode::kFull, 8.0, 50, 2000, 14);
  EXPECT_GE(rep.mean, 1000.0);
  EXPECT_EQ(rep.censored, 50);
  EXPECT_EQ(rep.nu, pc::kNeverChange);
}

TEST(FalseAlarm, IncreasesWithThreshold) {
  const auto sc = pctest::two_state_scenario(1);
  double prev = 0.0;
  for (const double c : {2.0, 4.0, 8.0}) {
    const auto rep =
        pc::estimate_false_alarm(sc, pc::ObservationMode::kFull, c, 300, 200000, 15);
    EXPECT_GT(rep.mean, prev) << c;
    prev = rep.mean;
  }
}

TEST(Ergodic, ZeroStream) {
  const auto est = pc::ergodic_llr_average(stream_of(std::vector<double>(100, 0.0)), 0);
  EXPECT_EQ(est.mean, 0.0);
  EXPECT_EQ(est.std_error, 0.0);
}

TEST(Ergodic, EstimateStabilizes) {
  const auto sc = three_state_scenario(1);
  const auto traj = pc::simulate(sc, 40001, 16);
  const auto z = pc::llr_full(sc, traj);
  pc::LlrStream half;
  half.z.assign(z.z.begin(), z.z.begin() + 20001);
  const auto a = pc::ergodic_llr_average(half, 1);
  const auto b = pc::ergodic_llr_average(z, 1);
  EXPECT_LE(std::abs(a.mean - b.mean), 4 * a.std_error);
}

TEST(Ergodic, RejectsBadIndex) {
  EXPECT_THROW(pc::ergodic_llr_average(stream_of({1.0}), 1), pc::Error);
}
