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

#include <cmath>
#include <numbers>

namespace srflvm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;
constexpr double kTruncRecip = 1.0 / 0.64;

double log_norm_cdf(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

// n-th coefficient of the alternating series for the Jacobi density.
double series_coef(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                       2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(expnt);
}

// Probability of proposing from the truncated exponential piece.
double exponential_mass(double z) {
  const double t = kTrunc;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, 0.64].
double truncated_inverse_gaussian(double z, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  z = std::fabs(z);
  const double t = kTrunc;
  double x = t + 1.0;
  if (kTruncRecip > z) {
    double alpha = 0.0;
    while (unif(rng) > alpha) {
      double e1 = expo(rng);
      double e2 = expo(rng);
      while (e1 * e1 > 2.0 * e2 / t) {
        e1 = expo(rng);
        e2 = expo(rng);
      }
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > t) {
      double y = normal(rng);
      y *= y;
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (unif(rng) > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

bool is_integer(double b) { return std::fabs(b - std::round(b)) < 1e-12; }

}  // namespace

double pg_sample_one(double c, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const double z = 0.5 * std::fabs(c);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  for (;;) {
    double x;
    if (unif(rng) < exponential_mass(z))
      x = kTrunc + expo(rng) / fz;
    else
      x = truncated_inverse_gaussian(z, rng);

    double s = series_coef(0, x);
    const double y = unif(rng) * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

double pg_sample_series(double b, double c, Rng& rng, int terms) {
  if (!(b > 0.0)) throw DomainError("pg_sample_series: b must be positive");
  std::gamma_distribution<double> gamma(b, 1.0);
  const double shift = c * c / (4.0 * kPi * kPi);
  double sum = 0.0;
  for (int k = 1; k <= terms; ++k) {
    const double d = (k - 0.5) * (k - 0.5) + shift;
    sum += gamma(rng) / d;
  }

  // Tail sum_{k > T} g_k / d_k, approximated by the midpoint integral. With
  // u = k - 1/2 and a^2 = shift, the mean and variance weights are
  // int_T^inf du / (u^2 + a^2) and int_T^inf du / (u^2 + a^2)^2.
  const double big_t = static_cast<double>(terms);
  const double a = std::sqrt(shift);
  double tail_1;
  double tail_2;
  const double ratio = a / big_t;
  if (ratio < 1e-2) {
    tail_1 = (1.0 - ratio * ratio / 3.0) / big_t;
    tail_2 = (1.0 / 3.0 - 0.4 * ratio * ratio) / (big_t * big_t * big_t);
  } else {
    tail_1 = std::atan(ratio) / a;
    tail_2 = std::atan(ratio) / (2.0 * a * a * a) -
             big_t / (2.0 * a * a * (big_t * big_t + a * a));
  }
  const double tail_mean = b * tail_1;
  const double tail_var = b * tail_2;
  if (tail_mean > 0.0 && tail_var > 0.0) {
    std::gamma_distribution<double> tail(tail_mean * tail_mean / tail_var,
                                         tail_var / tail_mean);
    sum += tail(rng);
  }
  return sum / (2.0 * kPi * kPi);
}

double pg_sample(double b, double c, Rng& rng) {
  if (!(b > 0.0)) throw DomainError("pg_sample: b must be positive");
  if (is_integer(b)) {
    const long n = std::lround(b);
    double sum = 0.0;
    for (long i = 0; i < n; ++i) sum += pg_sample_one(c, rng);
    return sum;
  }
  return pg_sample_series(b, c, rng);
}

double pg_mean(double b, double c) {
  const double ac = std::fabs(c);
  if (ac < 1e-6) return b * (0.25 - ac * ac / 48.0);
  return b * std::tanh(0.5 * ac) / (2.0 * ac);
}

}  // namespace srflvm
