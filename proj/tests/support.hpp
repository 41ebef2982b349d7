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

// Shared fixtures for the unit tests.

#ifndef SRFLVM_TESTS_SUPPORT_HPP
#define SRFLVM_TESTS_SUPPORT_HPP

#include "srflvm/bcd_vi.hpp"
#include "srflvm/common.hpp"
#include "srflvm/model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace srflvm::testing {

/// Random lower-triangular factor with diagonal in [lo, lo + 0.5].
inline Matrix random_lower(Eigen::Index Q, double lo, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.2);
  Matrix R = Matrix::Zero(Q, Q);
  for (Eigen::Index j = 0; j < Q; ++j) {
    R(j, j) = lo + 0.5 * u(rng);
    for (Eigen::Index i = j + 1; i < Q; ++i) R(i, j) = g(rng);
  }
  return R;
}

/// A generic interior state with every parameter away from its bounds.
inline ModelState random_state(Eigen::Index N, Eigen::Index Q, Eigen::Index L, Eigen::Index K,
                               Eigen::Index M, std::uint64_t seed,
                               CovarianceMode mode = CovarianceMode::diagonal) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelState s;
  const Matrix mu = standard_normal(N, Q, rng);
  s.latent = mode == CovarianceMode::diagonal ? LatentState::diagonal(mu, 0.3)
                                              : LatentState::full(mu, 0.3);
  if (mode == CovarianceMode::diagonal)
    s.latent.log_std.array() += 0.3 * standard_normal(N, Q, rng).array();
  else
    for (auto& R : s.latent.chol) R = random_lower(Q, 0.2, rng);
  s.mixture.comps.means = standard_normal(K, Q, rng);
  for (Eigen::Index k = 0; k < K; ++k) s.mixture.comps.chol.push_back(random_lower(Q, 0.4, rng));
  s.mixture.assign.logits = standard_normal(L / 2, K, rng);
  s.mixture.stick = StickState::prior(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    s.mixture.stick.a_v(k) = 0.5 + 3.0 * u(rng);
    s.mixture.stick.b_v(k) = 0.5 + 3.0 * u(rng);
  }
  s.mixture.stick.a_alpha = 1.0 + u(rng);
  s.mixture.stick.b_alpha = 1.0 + u(rng);
  s.lik.log_noise_var = std::log(0.3);
  s.lik.log_dispersion = Vector(M);
  for (Eigen::Index m = 0; m < M; ++m) s.lik.log_dispersion(m) = std::log(0.5 + 2.5 * u(rng));
  return s;
}

struct Coord {
  std::string name;
  double* value;
  double grad;
};

/// Pairs every free parameter of `s` with its entry in `g`.
inline std::vector<Coord> coordinates(ModelState& s, const ElboGradient& g) {
  std::vector<Coord> out;
  const auto add_all = [&](const std::string& name, Matrix& A, const Matrix& G) {
    for (Eigen::Index i = 0; i < A.size(); ++i)
      out.push_back({name + "[" + std::to_string(i) + "]", A.data() + i, G.data()[i]});
  };
  const auto add_lower = [&](const std::string& name, Matrix& A, const Matrix& G) {
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      for (Eigen::Index i = j; i < A.rows(); ++i)
        out.push_back({name + "(" + std::to_string(i) + "," + std::to_string(j) + ")", &A(i, j),
                       G(i, j)});
  };
  add_all("latent.means", s.latent.means, g.latent.means);
  if (s.latent.mode == CovarianceMode::diagonal)
    add_all("latent.log_std", s.latent.log_std, g.latent.log_std);
  else
    for (std::size_t n = 0; n < s.latent.chol.size(); ++n)
      add_lower("latent.chol" + std::to_string(n), s.latent.chol[n], g.latent.chol[n]);
  add_all("logits", s.mixture.assign.logits, g.logits);
  add_all("comp.means", s.mixture.comps.means, g.comp_means);
  for (std::size_t k = 0; k < s.mixture.comps.chol.size(); ++k)
    add_lower("comp.chol" + std::to_string(k), s.mixture.comps.chol[k], g.comp_chol[k]);
  out.push_back({"log_noise_var", &s.lik.log_noise_var, g.log_noise_var});
  for (Eigen::Index m = 0; m < s.lik.log_dispersion.size(); ++m)
    out.push_back({"log_dispersion[" + std::to_string(m) + "]", &s.lik.log_dispersion(m),
                   g.log_dispersion(m)});
  return out;
}

/// Relative error used for gradient checks. Differences are measured against
/// max(|g|, |fd|, 1e-3) so coordinates whose true derivative is (near) zero
/// are held to an absolute 1e-7 at tol = 1e-4.
inline double relative_error(double g, double fd) {
  return std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-3});
}

struct GradCheck {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

/// Central differences with step h of f around `s` for every coordinate.
inline GradCheck check_gradient(ModelState s, const ElboGradient& g,
                                const std::function<double(const ModelState&)>& f,
                                double h = 1e-5) {
  GradCheck out;
  for (const Coord& c : coordinates(s, g)) {
    const double orig = *c.value;
    *c.value = orig + h;
    const double fp = f(s);
    *c.value = orig - h;
    const double fm = f(s);
    *c.value = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = relative_error(c.grad, fd);
    if (err > out.worst) {
      out.worst = err;
      out.worst_name = c.name + " analytic=" + std::to_string(c.grad) + " fd=" + std::to_string(fd);
    }
    ++out.checked;
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace srflvm::testing

#endif  // SRFLVM_TESTS_SUPPORT_HPP
