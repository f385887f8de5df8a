// Copyright 2026 The npclab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "npclab/numerics.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "npclab/errors.hpp"

using namespace npclab;

namespace {

// Direct formula evaluation at extended precision, used as the oracle for
// softmax and KL.
std::vector<double> softmax_oracle(const std::vector<double>& scores,
                                   double tau) {
  long double denom = 0.0L;
  for (double s : scores) denom += std::exp(static_cast<long double>(tau * s));
  std::vector<double> out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    out[j] = static_cast<double>(
        std::exp(static_cast<long double>(tau * scores[j])) / denom);
  }
  return out;
}

double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      sum += static_cast<long double>(p[i]) *
             (std::log(static_cast<long double>(p[i])) -
              std::log(static_cast<long double>(q[i])));
    }
  }
  return static_cast<double>(sum);
}

std::vector<double> random_distribution(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& v : p) {
    v = unit(rng);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

TEST_CASE("log_sum_exp basics") {
  CHECK(log_sum_exp(std::vector<double>{0.0}) == 0.0);
  const double c = 2.75;
  CHECK(log_sum_exp(std::vector<double>{c, c, c, c}) ==
        doctest::Approx(c + std::log(4.0)).epsilon(1e-12));
  const double big = log_sum_exp(std::vector<double>{1000.0, 1000.0});
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), ContractViolation);
  CHECK_THROWS_AS(
      log_sum_exp(std::vector<double>{1.0, std::nan("")}),
      ContractViolation);
}

TEST_CASE("log_sum_exp never overflows for |s| <= 1e6") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1e6, 1e6);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> scores(1 + trial % 7);
    for (double& s : scores) s = dist(rng);
    CHECK(std::isfinite(log_sum_exp(scores)));
  }
}

TEST_CASE("softmax symmetry and singleton") {
  const std::vector<double> p = softmax(std::vector<double>{1.3, 1.3, 1.3}, 1.0);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  const std::vector<double> single = softmax(std::vector<double>{42.0}, 7.0);
  CHECK(single.size() == 1);
  CHECK(single[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0}, 0.0), ConfigError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0}, -2.0), ConfigError);
}

TEST_CASE("softmax matches direct evaluation") {
  const std::vector<double> scores{0.9, 0.1, 0.2};
  const std::vector<double> got = softmax(scores, 1.0);
  const std::vector<double> want = softmax_oracle(scores, 1.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
  // Temperature acts as a multiplier on the scores.
  const std::vector<double> got_tau = softmax(scores, 20.0);
  const std::vector<double> want_tau = softmax_oracle(scores, 20.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    CHECK(got_tau[j] == doctest::Approx(want_tau[j]).epsilon(1e-12));
  }
}

TEST_CASE("softmax sums to one and is shift invariant") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  std::uniform_real_distribution<double> shift_dist(-50.0, 50.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + trial % 9;
    std::vector<double> scores(n), shifted(n);
    const double shift = shift_dist(rng);
    for (int j = 0; j < n; ++j) {
      scores[j] = dist(rng);
      shifted[j] = scores[j] + shift;
    }
    const std::vector<double> p = softmax(scores, 1.0);
    const std::vector<double> ps = softmax(shifted, 1.0);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      CHECK(p[j] >= 0.0);
      CHECK(std::abs(p[j] - ps[j]) < 1e-9);
      sum += p[j];
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("kl_divergence basics") {
  const std::vector<double> p{0.3, 0.2, 0.5};
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0},
                      std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // 0.5 * ln(25/9), by direct summation.
  const std::vector<double> a{0.5, 0.5};
  const std::vector<double> b{0.9, 0.1};
  CHECK(kl_divergence(a, b) == doctest::Approx(kl_oracle(a, b)).epsilon(1e-12));
  CHECK(kl_divergence(a, b) ==
        doctest::Approx(0.5 * std::log(25.0 / 9.0)).epsilon(1e-12));

  CHECK_THROWS_AS(kl_divergence(std::vector<double>{1.0},
                                std::vector<double>{0.5, 0.5}),
                  ContractViolation);
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.5, 0.5},
                                std::vector<double>{1.0, 0.0}),
                  ContractViolation);
  // 0 * ln 0 treated as 0.
  CHECK(kl_divergence(std::vector<double>{0.0, 1.0},
                      std::vector<double>{0.0, 1.0}) == 0.0);
}

TEST_CASE("kl_divergence is non-negative, zero only at equality") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + trial % 6;
    const std::vector<double> p = random_distribution(rng, n);
    const std::vector<double> q = random_distribution(rng, n);
    const double kl = kl_divergence(p, q);
    CHECK(kl >= 0.0);
    double max_diff = 0.0;
    for (int j = 0; j < n; ++j) {
      max_diff = std::max(max_diff, std::abs(p[j] - q[j]));
    }
    if (kl == 0.0) {
      CHECK(max_diff < 1e-7);
    }
  }
}

TEST_CASE("similarity") {
  const std::vector<double> u{1.0, 2.0, -3.0};
  const std::vector<double> neg_u{-1.0, -2.0, 3.0};
  CHECK(similarity(u, u, Similarity::kCosine) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(similarity(u, neg_u, Similarity::kCosine) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(similarity(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, 4.0},
                   Similarity::kInnerProduct) == 11.0);
  CHECK_THROWS_AS(similarity(std::vector<double>{0.0, 0.0}, u,
                             Similarity::kCosine),
                  ContractViolation);
  CHECK_THROWS_AS(similarity(std::vector<double>{1.0}, u,
                             Similarity::kCosine),
                  ContractViolation);
}

TEST_CASE("cosine stays within [-1, 1] up to rounding") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + trial % 8;
    std::vector<double> u(n), v(n);
    bool u_zero = true, v_zero = true;
    for (int j = 0; j < n; ++j) {
      u[j] = dist(rng);
      v[j] = dist(rng);
      u_zero = u_zero && u[j] == 0.0;
      v_zero = v_zero && v[j] == 0.0;
    }
    if (u_zero || v_zero) continue;
    const double c = similarity(u, v, Similarity::kCosine);
    CHECK(c <= 1.0 + 1e-12);
    CHECK(c >= -1.0 - 1e-12);
  }
}
