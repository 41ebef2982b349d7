/*
 * Copyright 2026 The srflvm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "srflvm/polya_gamma.hpp"

#include "support.hpp"

#include <cmath>

using namespace srflvm;

namespace {

/// Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2)), b/24 at c = 0.
double pg_variance(double b, double c) {
  if (std::abs(c) < 1e-6) return b / 24.0;
  const double ch = std::cosh(c / 2.0);
  return b * (std::sinh(c) - c) / (4.0 * c * c * c * ch * ch);
}

struct Moments {
  double mean;
  double var;
};

Moments sample_moments(double b, double c, int draws, Rng& rng,
                       double (*sampler)(double, double, Rng&)) {
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double w = sampler(b, c, rng);
    REQUIRE(w > 0.0);
    s += w;
    ss += w * w;
  }
  const double m = s / draws;
  return {m, ss / draws - m * m};
}

double series_default(double b, double c, Rng& rng) { return pg_sample_series(b, c, rng); }

}  // namespace

TEST_CASE("pg_mean closed form") {
  CHECK(pg_mean(1.0, 0.0) == doctest::Approx(0.25));
  CHECK(std::abs(pg_mean(1.0, 2.0) - std::tanh(1.0) / 4.0) < 1e-15);
  CHECK(std::abs(pg_mean(3.0, 1.0) - 3.0 * std::tanh(0.5) / 2.0) < 1e-15);
  CHECK(std::abs(pg_mean(1.0, 1e-9) - 0.25) < 1e-12);
  CHECK(pg_mean(1.0, -2.0) == pg_mean(1.0, 2.0));
}

TEST_CASE("PG(1, c) sampler moments") {
  Rng rng(1);
  for (double c : {0.0, 2.0, -3.5, 10.0}) {
    const int n = 100000;
    const Moments m = sample_moments(1.0, c, n, rng, pg_sample);
    CHECK(std::abs(m.mean - pg_mean(1.0, c)) < 0.02 * pg_mean(1.0, c));
    CHECK(std::abs(m.mean - pg_mean(1.0, c)) <= 3.0 * std::sqrt(pg_variance(1.0, c) / n));
    CHECK(std::abs(m.var - pg_variance(1.0, c)) < 0.05 * pg_variance(1.0, c));
  }
  const Moments ref = sample_moments(1.0, 2.0, 100000, rng, pg_sample);
  CHECK(std::abs(ref.mean - 0.19040) < 0.02 * 0.19040);
}

TEST_CASE("integer b sums PG(1, c) draws") {
  Rng rng(2);
  const Moments m = sample_moments(3.0, 1.0, 100000, rng, pg_sample);
  CHECK(std::abs(m.mean - 0.69310) < 0.02 * 0.69310);
  CHECK(std::abs(m.var - pg_variance(3.0, 1.0)) < 0.05 * pg_variance(3.0, 1.0));
}

TEST_CASE("non-integer b uses the truncated series") {
  Rng rng(3);
  for (double b : {0.5, 2.5, 7.3}) {
    for (double c : {0.0, 1.5}) {
      const int n = 50000;
      const Moments m = sample_moments(b, c, n, rng, pg_sample);
      CHECK(std::abs(m.mean - pg_mean(b, c)) <= 3.0 * std::sqrt(pg_variance(b, c) / n));
      CHECK(std::abs(m.var - pg_variance(b, c)) < 0.06 * pg_variance(b, c));
    }
  }
  // The series path also matches the exact sampler at b = 1.
  const Moments s = sample_moments(1.0, 2.0, 50000, rng, series_default);
  CHECK(std::abs(s.mean - pg_mean(1.0, 2.0)) <= 3.0 * std::sqrt(pg_variance(1.0, 2.0) / 50000));
}

TEST_CASE("PG augmentation identity") {
  // e^{kappa psi} E[e^{-omega psi^2 / 2}] 2^{-b} = (e^psi)^a / (1 + e^psi)^b, omega ~ PG(1, 0).
  Rng rng(4);
  std::vector<double> w;
  for (int i = 0; i < 100000; ++i) w.push_back(pg_sample_one(0.0, rng));
  for (double a : {0.0, 1.0})
    for (double psi : {-2.0, 0.0, 1.0}) {
      double acc = 0.0;
      for (double x : w) acc += std::exp(-0.5 * x * psi * psi);
      const double lhs = std::exp((a - 0.5) * psi) * (acc / w.size()) * 0.5;
      const double rhs = std::exp(a * psi) / (1.0 + std::exp(psi));
      CHECK(std::abs(lhs - rhs) < 0.01 * rhs);
    }
}

TEST_CASE("PG draws are deterministic under a fixed seed") {
  Rng r1(5), r2(5);
  for (int i = 0; i < 100; ++i) CHECK(pg_sample(2.7, 0.3 * i, r1) == pg_sample(2.7, 0.3 * i, r2));
}
