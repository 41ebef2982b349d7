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

#include "srflvm/latent_state.hpp"

#include "support.hpp"

#include <cmath>

using namespace srflvm;

namespace {

LatentState random_latent(CovarianceMode mode, Eigen::Index N, Eigen::Index Q, Rng& rng) {
  const Matrix mu = standard_normal(N, Q, rng);
  LatentState s = mode == CovarianceMode::diagonal ? LatentState::diagonal(mu, 1.0)
                                                   : LatentState::full(mu, 1.0);
  if (mode == CovarianceMode::diagonal)
    s.log_std = 0.5 * standard_normal(N, Q, rng);
  else
    for (auto& R : s.chol) R = srflvm::testing::random_lower(Q, 0.3, rng);
  return s;
}

void fd_check_kl(LatentState s) {
  const LatentGradient g = kl_to_prior_grad(s);
  const double h = 1e-5;
  const auto probe = [&](double& x, double analytic) {
    const double orig = x;
    x = orig + h;
    const double fp = kl_to_prior(s);
    x = orig - h;
    const double fm = kl_to_prior(s);
    x = orig;
    CHECK(srflvm::testing::relative_error(analytic, (fp - fm) / (2 * h)) < 1e-6);
  };
  for (Eigen::Index i = 0; i < s.means.size(); ++i) probe(s.means.data()[i], g.means.data()[i]);
  if (s.mode == CovarianceMode::diagonal) {
    for (Eigen::Index i = 0; i < s.log_std.size(); ++i) probe(s.log_std.data()[i], g.log_std.data()[i]);
    return;
  }
  for (std::size_t n = 0; n < s.chol.size(); ++n)
    for (Eigen::Index j = 0; j < s.dim(); ++j)
      for (Eigen::Index i = j; i < s.dim(); ++i) probe(s.chol[n](i, j), g.chol[n](i, j));
}

}  // namespace

TEST_CASE("sample_latents with zero noise returns the means") {
  Rng rng(1);
  for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
    const LatentState s = random_latent(mode, 5, 3, rng);
    CHECK((sample_latents(s, Matrix::Zero(5, 3)) - s.means).norm() == 0.0);
  }
  LatentState tiny = LatentState::diagonal(standard_normal(4, 2, rng), 1.0);
  tiny.log_std.setConstant(-100.0);
  clamp(tiny);
  CHECK((sample_latents(tiny, standard_normal(4, 2, rng)) - tiny.means).cwiseAbs().maxCoeff() < 1e-5);
  CHECK_THROWS_AS(sample_latents(tiny, Matrix::Zero(3, 2)), ShapeError);
}

TEST_CASE("sample covariance of sample_latents matches S_n") {
  Rng rng(2);
  const LatentState s = random_latent(CovarianceMode::full, 1, 2, rng);
  const Matrix S = s.covariance(0);
  const int draws = 1000000;
  Matrix sum = Matrix::Zero(1, 2);
  Matrix outer = Matrix::Zero(2, 2);
  for (int d = 0; d < draws; ++d) {
    const Matrix x = sample_latents(s, standard_normal(1, 2, rng));
    sum += x;
    const RowVector c = x.row(0) - s.means.row(0);
    outer += c.transpose() * c;
  }
  const Matrix cov = outer / draws;
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      // Var of x_i x_j for a zero-mean Gaussian is S_ii S_jj + S_ij^2.
      const double se = std::sqrt((S(i, i) * S(j, j) + S(i, j) * S(i, j)) / draws);
      CHECK(std::abs(cov(i, j) - S(i, j)) <= 3.0 * se);
    }
}

TEST_CASE("kl_to_prior closed-form values") {
  CHECK(kl_to_prior(LatentState::diagonal(Matrix::Zero(3, 2), 1.0)) == doctest::Approx(0.0));
  CHECK(std::abs(kl_to_prior(LatentState::full(Matrix::Zero(3, 2), 1.0))) < 1e-15);
  Matrix mu(1, 2);
  mu << 1.0, 0.0;
  CHECK(std::abs(kl_to_prior(LatentState::diagonal(mu, 1.0)) - 0.5) < 1e-15);
  CHECK(std::abs(kl_to_prior(LatentState::diagonal(Matrix::Zero(1, 1), 2.0)) - 0.80685282) < 1e-8);
  CHECK(std::abs(kl_to_prior(LatentState::full(Matrix::Zero(1, 1), 2.0)) - 0.80685282) < 1e-8);
}

TEST_CASE("kl_to_prior is non-negative") {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep)
    for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full})
      CHECK(kl_to_prior(random_latent(mode, 3, 2, rng)) >= 0.0);
  // Zero only at the prior.
  LatentState s = LatentState::diagonal(Matrix::Zero(2, 2), 1.0);
  s.means(1, 1) = 1e-3;
  CHECK(kl_to_prior(s) > 1e-10);
}

TEST_CASE("kl_to_prior gradient matches central differences") {
  Rng rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    fd_check_kl(random_latent(CovarianceMode::diagonal, 4, 3, rng));
    fd_check_kl(random_latent(CovarianceMode::full, 4, 3, rng));
  }
}

TEST_CASE("sample_latents_backward matches central differences") {
  Rng rng(5);
  for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
    LatentState s = random_latent(mode, 3, 2, rng);
    const Matrix eps = standard_normal(3, 2, rng);
    const Matrix C = standard_normal(3, 2, rng);
    LatentGradient g = LatentGradient::zeros_like(s);
    sample_latents_backward(s, eps, C, g);
    const auto f = [&] { return sample_latents(s, eps).cwiseProduct(C).sum(); };
    const double h = 1e-6;
    const auto probe = [&](double& x, double analytic) {
      const double orig = x;
      x = orig + h;
      const double fp = f();
      x = orig - h;
      const double fm = f();
      x = orig;
      CHECK(srflvm::testing::relative_error(analytic, (fp - fm) / (2 * h)) < 1e-6);
    };
    for (Eigen::Index i = 0; i < s.means.size(); ++i) probe(s.means.data()[i], g.means.data()[i]);
    if (mode == CovarianceMode::diagonal)
      for (Eigen::Index i = 0; i < s.log_std.size(); ++i) probe(s.log_std.data()[i], g.log_std.data()[i]);
    else
      for (std::size_t n = 0; n < 3; ++n)
        for (Eigen::Index j = 0; j < 2; ++j)
          for (Eigen::Index i = j; i < 2; ++i) probe(s.chol[n](i, j), g.chol[n](i, j));
  }
}

TEST_CASE("clamp keeps standard deviations inside bounds") {
  LatentState d = LatentState::diagonal(Matrix::Zero(2, 2), 1.0);
  d.log_std(0, 0) = -50.0;
  d.log_std(1, 1) = 50.0;
  clamp(d);
  CHECK(std::exp(d.log_std(0, 0)) == doctest::Approx(1e-6));
  CHECK(std::exp(d.log_std(1, 1)) == doctest::Approx(1e6));

  LatentState f = LatentState::full(Matrix::Zero(1, 2), 1.0);
  f.chol[0] << -3.0, 2.0, 0.4, 1e9;
  clamp(f);
  CHECK(f.chol[0](0, 0) == 1e-6);
  CHECK(f.chol[0](1, 1) == 1e6);
  CHECK(f.chol[0](0, 1) == 0.0);
  CHECK(f.chol[0](1, 0) == 0.4);
}

TEST_CASE("pca_init recovers a planar embedding") {
  Rng rng(6);
  const Matrix Z = standard_normal(200, 2, rng);
  const Matrix A = standard_normal(2, 10, rng);
  const Matrix Y = Z * A + 0.01 * standard_normal(200, 10, rng);
  const Matrix X = pca_init(Y, Mask::Constant(200, 10, true), 3);
  REQUIRE(X.rows() == 200);
  REQUIRE(X.cols() == 3);
  for (Eigen::Index q = 0; q < 2; ++q) {
    CHECK(std::abs(X.col(q).mean()) < 1e-10);
    CHECK(std::abs(X.col(q).squaredNorm() / 200.0 - 1.0) < 1e-10);
  }
  // Both recovered components lie in the span of Z.
  const Matrix Zc = Z.rowwise() - Z.colwise().mean();
  const Matrix coef = Zc.colPivHouseholderQr().solve(X.leftCols(2));
  CHECK((Zc * coef - X.leftCols(2)).norm() / X.leftCols(2).norm() < 0.05);

  Mask mask = Mask::Constant(200, 10, true);
  mask(3, 4) = false;
  const Matrix Xm = pca_init(Y, mask, 2);
  CHECK(Xm.allFinite());
  const Matrix X1 = pca_init(Y.leftCols(1), Mask::Constant(200, 1, true), 2);
  CHECK(X1.col(1).norm() == 0.0);
}
