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
#include <functional>
#include <vector>

#include "test_support.hpp"

namespace pc = privchange;
using pctest::Matrix;
using pctest::Mdp;
using pctest::Policy;
using pctest::Vector;

namespace {

void expect_kind(const std::function<void()>& f, pc::ErrorKind kind) {
  try {
    f();
    ADD_FAILURE() << "expected " << pc::to_string(kind);
  } catch (const pc::Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

Mdp two_cycle() {
  const Matrix swap = pctest::mat2(0, 1, 1, 0);
  Matrix r(2, 2);
  r << 1, 1, 0, 0;
  return Mdp{{swap, swap}, r};
}

}  // namespace

TEST(ValidateMdp, AcceptsThreeStateExample) {
  const auto [m0, m1] = pctest::three_state_models();
  EXPECT_NO_THROW(pc::validate_mdp(m0));
  EXPECT_NO_THROW(pc::validate_mdp(m1));
}

TEST(ValidateMdp, AcceptsIdentityKernels) {
  const Matrix eye = Matrix::Identity(2, 2);
  EXPECT_NO_THROW(pc::validate_mdp(Mdp{{eye, eye}, Matrix::Zero(2, 2)}));
}

TEST(ValidateMdp, RejectsRowSummingAboveOne) {
  Mdp m{{pctest::mat2(0.5, 0.6, 0.5, 0.5)}, Matrix::Zero(2, 1)};
  expect_kind([&] { pc::validate_mdp(m); }, pc::ErrorKind::kNonStochasticRow);
}

TEST(ValidateMdp, RejectsNegativeEntry) {
  Mdp m{{pctest::mat2(1.5, -0.5, 0.5, 0.5)}, Matrix::Zero(2, 1)};
  expect_kind([&] { pc::validate_mdp(m); }, pc::ErrorKind::kNegativeEntry);
}

TEST(ValidateMdp, RejectsMissingKernel) {
  Mdp m{{Matrix::Identity(2, 2)}, Matrix::Zero(2, 2)};
  expect_kind([&] { pc::validate_mdp(m); }, pc::ErrorKind::kShapeMismatch);
}

TEST(ValidatePolicy, RejectsWrongShapeAndBadRows) {
  expect_kind([] { pc::validate_policy(Policy::uniform(3, 2), 2, 2); },
              pc::ErrorKind::kShapeMismatch);
  Policy bad{pctest::mat2(0.7, 0.7, 0.5, 0.5)};
  expect_kind([&] { pc::validate_policy(bad, 2, 2); },
              pc::ErrorKind::kNonStochasticRow);
}

TEST(InducedChain, DeterministicPolicyPicksKernel) {
  const auto [m0, m1] = pctest::three_state_models();
  const Policy pi = Policy::deterministic({0, 0, 0}, 2);
  EXPECT_TRUE(pc::induced_chain(m1, pi).isApprox(m1.P[0], 1e-15));
}

TEST(InducedChain, UniformPolicyAveragesKernels) {
  const auto [m0, m1] = pctest::three_state_models();
  const Matrix k = pc::induced_chain(m1, Policy::uniform(3, 2));
  for (int x = 0; x < 3; ++x) {
    for (int y = 0; y < 3; ++y) {
      EXPECT_NEAR(k(x, y), 0.5 * (m1.P[0](x, y) + m1.P[1](x, y)), 1e-15);
    }
  }
}

TEST(InducedChain, StateDependentMixture) {
  pc::Rng rng(11);
  const Mdp m = pctest::random_mdp(4, 3, rng);
  const Policy pi = pctest::random_policy(4, 3, rng);
  const Matrix k = pc::induced_chain(m, pi);
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      double expect = 0.0;
      for (int u = 0; u < 3; ++u) expect += pi.pi(x, u) * m.P[u](x, y);
      EXPECT_NEAR(k(x, y), expect, 1e-15);
    }
  }
}

TEST(StationaryDistribution, IdentityHasTwoClosedClasses) {
  expect_kind([] { pc::stationary_distribution(Matrix::Identity(2, 2)); },
              pc::ErrorKind::kNotIrreducible);
}

TEST(StationaryDistribution, SwapChainIsUniform) {
  const Vector mu = pc::stationary_distribution(pctest::mat2(0, 1, 1, 0));
  EXPECT_NEAR(mu(0), 0.5, 1e-15);
  EXPECT_NEAR(mu(1), 0.5, 1e-15);
}

TEST(StationaryDistribution, MatchesPowerIteration) {
  const auto [m0, m1] = pctest::three_state_models();
  const Matrix& p = m0.P[1];
  const Vector mu = pc::stationary_distribution(p);
  Vector oracle = Vector::Constant(3, 1.0 / 3.0);
  for (int i = 0; i < 10000; ++i) oracle = p.transpose() * oracle;
  EXPECT_LT((mu - oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.transpose() * mu - mu).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StationaryDistribution, TransientStatesGetNoMass) {
  Matrix p(3, 3);
  p << 0.2, 0.3, 0.5, 0, 0.4, 0.6, 0, 0.7, 0.3;
  const Vector mu = pc::stationary_distribution(p);
  EXPECT_EQ(mu(0), 0.0);
  EXPECT_NEAR(mu(1), 0.7 / 1.3, 1e-14);
}

TEST(Occupancy, TwoCycleDeterministic) {
  const Mdp m = two_cycle();
  const auto occ = pc::occupancy_from_policy(m, Policy::deterministic({1, 1}, 2));
  EXPECT_NEAR(occ.xi(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(occ.xi(1, 1), 0.5, 1e-15);
  EXPECT_EQ(occ.xi(0, 0), 0.0);
  EXPECT_EQ(occ.xi(1, 0), 0.0);
}

TEST(Occupancy, MatchesProductOfMarginalAndPolicy) {
  const auto [m0, m1] = pctest::three_state_models();
  const Policy pi = Policy::uniform(3, 2);
  const auto occ = pc::occupancy_from_policy(m1, pi);
  const Vector mu = pc::stationary_by_power_iteration(
      pc::induced_chain(m1, pi), 100000, 1e-16);
  for (int x = 0; x < 3; ++x) {
    for (int u = 0; u < 2; ++u) EXPECT_NEAR(occ.xi(x, u), mu(x) * 0.5, 1e-9);
  }
  EXPECT_LT(pc::stationarity_residual(m1, occ), 1e-12);
}

TEST(Occupancy, RoundTripReproducesPolicy) {
  pc::Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Mdp m = pctest::random_mdp(4, 3, rng);
    const Policy pi = pctest::random_policy(4, 3, rng);
    const Policy back =
        pc::policy_from_occupancy(pc::occupancy_from_policy(m, pi));
    EXPECT_LT((back.pi - pi.pi).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PolicyFromOccupancy, UniformOccupancyGivesUniformPolicy) {
  const pc::OccupancyMeasure occ{Matrix::Constant(3, 2, 1.0 / 6.0)};
  EXPECT_TRUE(pc::policy_from_occupancy(occ).pi.isApprox(
      Policy::uniform(3, 2).pi));
}

TEST(PolicyFromOccupancy, EmptyRowBecomesUniform) {
  Matrix xi(3, 2);
  xi << 0.3, 0.2, 0.5, 0.0, 0.0, 0.0;
  const Policy p = pc::policy_from_occupancy({xi});
  EXPECT_NEAR(p.pi(0, 0), 0.6, 1e-15);
  EXPECT_EQ(p.pi(1, 0), 1.0);
  EXPECT_EQ(p.pi(2, 0), 0.5);
  EXPECT_EQ(p.pi(2, 1), 0.5);
}

TEST(ErgodicValue, ConstantReward) {
  pc::Rng rng(3);
  Mdp m = pctest::random_mdp(3, 2, rng);
  m.r.setConstant(2.5);
  EXPECT_NEAR(pc::ergodic_value(m, pctest::random_policy(3, 2, rng)), 2.5, 1e-13);
}

TEST(ErgodicValue, TwoCycleHalf) {
  EXPECT_NEAR(pc::ergodic_value(two_cycle(), Policy::uniform(2, 2)), 0.5, 1e-15);
}

TEST(ErgodicValue, MatchesLongRunAverage) {
  const auto [m0, m1] = pctest::three_state_models();
  pc::ChangeScenario sc{m0, m0, Policy::uniform(3, 2), Policy::uniform(3, 2),
                        pc::kNeverChange};
  const auto traj = pc::simulate(sc, 1000000, 17);
  double sum = 0.0;
  for (std::int64_t t = 0; t < traj.length(); ++t) {
    sum += m0.r(traj.states[t], traj.actions[t]);
  }
  const double v = pc::ergodic_value(m0, Policy::uniform(3, 2));
  EXPECT_NEAR(sum / static_cast<double>(traj.length()), v, 0.01 * std::abs(v));
}

TEST(Simulate, FixedSeedIsDeterministic) {
  const auto [m0, m1] = pctest::three_state_models();
  pc::ChangeScenario sc{m0, m1, Policy::uniform(3, 2), Policy::uniform(3, 2), 10};
  const auto a = pc::simulate(sc, 500, 99);
  const auto b = pc::simulate(sc, 500, 99);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_NE(a.states, pc::simulate(sc, 500, 100).states);
}

TEST(Simulate, HorizonOneDrawsFromPreChangeStationaryLaw) {
  const auto [m0, m1] = pctest::three_state_models();
  pc::ChangeScenario sc{m0, m1, Policy::uniform(3, 2), Policy::uniform(3, 2), 5};
  const Vector mu =
      pc::stationary_distribution(pc::induced_chain(m0, sc.pi0));
  Vector freq = Vector::Zero(3);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const auto traj = pc::simulate(sc, 1, pc::stream_seed(3, i));
    ASSERT_EQ(traj.length(), 1);
    freq(traj.states[0]) += 1.0 / n;
  }
  EXPECT_LT(0.5 * (freq - mu).cwiseAbs().sum(), 0.01);
}

TEST(Simulate, PostChangeFrequenciesMatchStationaryLaw) {
  const auto [m0, m1] = pctest::three_state_models();
  pc::ChangeScenario sc{m0, m1, Policy::uniform(3, 2),
                        Policy::deterministic({0, 1, 0}, 2), 100};
  const auto traj = pc::simulate(sc, 100099, 21);
  Vector freq = Vector::Zero(3);
  for (std::int64_t t = 99; t < traj.length(); ++t) freq(traj.states[t]) += 1.0;
  freq /= freq.sum();
  const Vector mu =
      pc::stationary_distribution(pc::induced_chain(m1, sc.pi1));
  EXPECT_LT(0.5 * (freq - mu).cwiseAbs().sum(), 0.01);
  // Actions after the change follow pi1 exactly.
  for (std::int64_t t = 99; t < traj.length(); ++t) {
    ASSERT_EQ(traj.actions[t], traj.states[t] == 1 ? 1 : 0);
  }
}

TEST(Simulate, NoChangeIsInvariantToChangeTime) {
  const auto [m0, m1] = pctest::three_state_models();
  const Policy pi = Policy::uniform(3, 2);
  pc::ChangeScenario early{m0, m0, pi, pi, 2};
  pc::ChangeScenario late{m0, m0, pi, pi, 5000};
  // Same seeds, same laws: the sampled paths coincide draw for draw.
  EXPECT_EQ(pc::simulate(early, 3000, 8).states,
            pc::simulate(late, 3000, 8).states);
}

TEST(Scenario, ValidationRejectsBadChangeTime) {
  const auto [m0, m1] = pctest::three_state_models();
  pc::ChangeScenario sc{m0, m1, Policy::uniform(3, 2), Policy::uniform(3, 2), 0};
  expect_kind([&] { pc::validate_scenario(sc); }, pc::ErrorKind::kInvalidArgument);
}
