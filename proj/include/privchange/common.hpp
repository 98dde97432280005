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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace privchange {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Probabilities at or below this floor are treated as structural zeros when
// deciding support and absolute continuity.
inline constexpr double kSupportFloor = 1e-15;

inline bool in_support(double p) { return p > kSupportFloor; }

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// All stochastic routines draw from a 64-bit Mersenne Twister seeded
/// explicitly by the caller. Independent streams (Monte Carlo runs, restarts)
/// derive their seeds with stream_seed so results do not depend on the order
/// in which runs execute.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer applied to (seed, stream).
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Inverse-CDF draw from a cumulative probability row. Never returns an index
/// whose probability mass is zero.
inline int sample_from_cdf(std::span<const double> cdf, Rng& rng) {
  const double u = uniform01(rng);
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    if (u < cdf[i]) return static_cast<int>(i);
  }
  // u landed above a total that rounded below one.
  for (std::size_t i = cdf.size(); i-- > 0;) {
    const double below = i == 0 ? 0.0 : cdf[i - 1];
    if (cdf[i] > below) return static_cast<int>(i);
  }
  return 0;
}

inline std::vector<double> cumulative(std::span<const double> p) {
  std::vector<double> out(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    out[i] = acc;
  }
  return out;
}

/// Row of a Dirichlet(1, ..., 1) draw.
inline Vector dirichlet_ones(Index n, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = expo(rng);
  return v / v.sum();
}

// ---------------------------------------------------------------------------
// Warnings
// ---------------------------------------------------------------------------

using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler_storage() {
  static WarningHandler handler = [](std::string_view msg) {
    std::clog << "privchange warning: " << msg << '\n';
  };
  return handler;
}

inline void set_warning_handler(WarningHandler handler) {
  warning_handler_storage() = std::move(handler);
}

inline void warn(std::string_view message) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  if (warning_handler_storage()) warning_handler_storage()(message);
}

// ---------------------------------------------------------------------------
// Parallel loops
// ---------------------------------------------------------------------------

/// Worker count: hardware concurrency capped by PRIVCHANGE_THREADS.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PRIVCHANGE_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs body(i) for i in [0, count). Each index must write only to its own
/// output slot; callers reduce afterwards in index order.
template <typename Body>
void parallel_for(std::size_t count, Body&& body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(worker_count(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Summation
// ---------------------------------------------------------------------------

/// Neumaier-compensated running sum; used wherever Monte Carlo reductions must
/// not depend on magnitude ordering.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Two-sided 95% normal quantile.
inline constexpr double kZ95 = 1.959963984540054;

}  // namespace privchange
