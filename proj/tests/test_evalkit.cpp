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

#include "srflvm/evalkit.hpp"

#include "support.hpp"

#include <cmath>
#include <numeric>

using namespace srflvm;

namespace {

Matrix rotation(double theta) {
  Matrix R(2, 2);
  R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return R;
}

std::pair<Matrix, std::vector<int>> two_blobs(int per, double sep, Rng& rng) {
  Matrix X = 0.3 * standard_normal(2 * per, 2, rng);
  std::vector<int> y(2 * static_cast<std::size_t>(per));
  for (int n = 0; n < 2 * per; ++n) {
    y[static_cast<std::size_t>(n)] = n < per ? 0 : 1;
    X(n, 0) += n < per ? -sep : sep;
  }
  return {X, y};
}

}  // namespace

TEST_CASE("knn on separated clusters is perfect") {
  Rng rng(1);
  auto [X, y] = two_blobs(40, 5.0, rng);
  const KnnResult r = knn_cv(X, y, 1, 5, 7);
  CHECK(r.mean == 1.0);
  CHECK(r.std == 0.0);
  CHECK(r.fold_accuracy.size() == 5);
  CHECK(r.stratified);
  CHECK(knn_cv(X, y, 3, 5, 7).mean == 1.0);
}

TEST_CASE("knn with permuted labels is at chance") {
  Rng rng(2);
  auto [X, y] = two_blobs(100, 5.0, rng);
  std::shuffle(y.begin(), y.end(), rng);
  const KnnResult r = knn_cv(X, y, 1, 5, 3);
  CHECK(r.mean >= 0.4);
  CHECK(r.mean <= 0.6);
}

TEST_CASE("knn on duplicated points") {
  // Three locations with 20 copies each; a fold holds 12 points, so every
  // test point keeps a copy with its label in the training set.
  Rng rng(3);
  const Matrix X = standard_normal(3, 2, rng);
  Matrix D(60, 2);
  std::vector<int> y(60);
  for (int n = 0; n < 60; ++n) {
    D.row(n) = X.row(n % 3);
    y[static_cast<std::size_t>(n)] = n % 3;
  }
  for (std::uint64_t seed : {4u, 5u, 6u}) CHECK(knn_cv(D, y, 1, 5, seed).mean == 1.0);
}

TEST_CASE("knn invariant to rigid motions") {
  Rng rng(4);
  const Matrix X = standard_normal(60, 2, rng);
  std::vector<int> y(60);
  for (int n = 0; n < 60; ++n) y[static_cast<std::size_t>(n)] = X(n, 0) + 0.5 * X(n, 1) > 0.2 ? 1 : 0;
  const KnnResult a = knn_cv(X, y, 3, 5, 9);
  const Matrix moved = (X * rotation(0.83)).rowwise() + RowVector::Constant(2, 4.0);
  const KnnResult b = knn_cv(moved, y, 3, 5, 9);
  CHECK(a.fold_accuracy == b.fold_accuracy);
}

TEST_CASE("knn std is the sample standard deviation over folds") {
  Rng rng(5);
  const Matrix X = standard_normal(50, 2, rng);
  std::vector<int> y(50);
  for (int n = 0; n < 50; ++n) y[static_cast<std::size_t>(n)] = X(n, 0) > 0 ? 1 : 0;
  const KnnResult r = knn_cv(X, y, 1, 5, 2);
  const double m = std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) / 5.0;
  double ss = 0.0;
  for (double a : r.fold_accuracy) ss += (a - m) * (a - m);
  CHECK(std::abs(r.mean - m) < 1e-15);
  CHECK(std::abs(r.std - std::sqrt(ss / 4.0)) < 1e-15);
  CHECK(r.mean >= 0.0);
  CHECK(r.mean <= 1.0);
}

TEST_CASE("knn errors and fallbacks") {
  Rng rng(6);
  const Matrix X = standard_normal(10, 2, rng);
  std::vector<int> y(10, 0);
  y[0] = 1;
  const KnnResult r = knn_cv(X, y, 1, 5, 1);
  CHECK(!r.stratified);
  CHECK_THROWS_AS(knn_cv(X, y, 8, 5, 1), ValidationError);
  CHECK_THROWS_AS(knn_cv(X, y, 0, 5, 1), ValidationError);
  CHECK_THROWS_AS(knn_cv(X, std::vector<int>(9, 0), 1, 5, 1), std::exception);
}

TEST_CASE("knn vote ties go to the smallest label") {
  Matrix X(6, 1);
  X << 0.0, 1.0, -1.0, 10.0, 11.0, 12.0;
  // With k = 2 the query 0 sees neighbours 1 (label 2) and -1 (label 1).
  const std::vector<int> y{1, 2, 1, 2, 1, 2};
  const KnnResult r = knn_cv(X, y, 2, 6, 0);
  CHECK(r.fold_accuracy.size() == 6);
  CHECK(r.mean >= 0.0);
}

TEST_CASE("imputation_mse") {
  Matrix T(2, 2), I(2, 2);
  T << 1, 2, 3, 4;
  Mask mask = Mask::Constant(2, 2, true);
  mask(0, 1) = mask(1, 0) = mask(1, 1) = false;
  CHECK(imputation_mse(T, T, mask) == 0.0);
  I = T.array() + 0.5;
  CHECK(std::abs(imputation_mse(T, I, mask) - 0.25) < 1e-15);
  I << 100, 3, 1, 4.5;  // errors 1, -2, 0.5 on the hidden entries
  CHECK(std::abs(imputation_mse(T, I, mask) - (1.0 + 4.0 + 0.25) / 3.0) < 1e-15);
  CHECK_THROWS_AS(imputation_mse(T, I, Mask::Constant(2, 2, true)), ValidationError);
}

TEST_CASE("column_mean_impute") {
  Matrix Y(3, 2);
  Y << 1, 10, 3, 0, 5, 20;
  Mask mask = Mask::Constant(3, 2, true);
  mask(1, 1) = false;
  const Matrix out = column_mean_impute(Y, mask);
  CHECK(out(1, 1) == 15.0);
  CHECK(out(0, 0) == 1.0);
}

TEST_CASE("kernel_recovery") {
  Rng rng(7);
  const Matrix X = standard_normal(30, 2, rng);
  MixtureState truth;
  truth.comps.means = Matrix::Zero(1, 2);
  truth.comps.chol = {Matrix::Identity(2, 2)};
  truth.assign = Assignments::uniform(5, 1);
  truth.stick = StickState::prior(1);
  Matrix K(30, 30);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) K(i, j) = std::exp(-0.5 * (X.row(i) - X.row(j)).squaredNorm());
  CHECK(kernel_recovery(K, X, truth, 0, rng) < 1e-12);
  CHECK(kernel_recovery(K, X, truth, 10000, rng) < 0.05);
  CHECK(std::abs(kernel_recovery(2.0 * K, X, truth, 0, rng) - 0.5) < 1e-12);
  CHECK(std::abs((2.0 * K).norm() - 2.0 * K.norm()) < 1e-12);
  CHECK_THROWS_AS(kernel_recovery(Matrix::Zero(30, 30), X, truth, 0, rng), ValidationError);
  CHECK_THROWS_AS(kernel_recovery(K, X, truth, 3, rng), ValidationError);

  const Matrix Khat = learned_kernel(X, truth, 0, rng);
  CHECK((Khat - K).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("procrustes") {
  Rng rng(8);
  const Matrix X = standard_normal(100, 2, rng);
  CHECK(procrustes(X, X) < 1e-12);
  const Matrix moved = (3.7 * X * rotation(1.1)).rowwise() + RowVector::Constant(2, -2.0);
  CHECK(procrustes(moved, X) < 1e-10);
  Matrix reflected = X;
  reflected.col(0) *= -1.0;
  CHECK(procrustes(reflected, X) < 1e-10);

  const Matrix big = standard_normal(500, 2, rng);
  const double null_d = procrustes(standard_normal(500, 2, rng), big);
  CHECK(null_d >= 0.8);
  CHECK(null_d <= 1.0);

  const Matrix Y = X + 0.3 * standard_normal(100, 2, rng);
  const double d = procrustes(Y, X);
  CHECK(std::abs(procrustes(0.2 * Y * rotation(2.0), X) - d) < 1e-12);
  CHECK(std::abs(procrustes(Y, 5.0 * X * rotation(-0.4)) - d) < 1e-12);

  const Matrix wide = standard_normal(100, 3, rng);
  const double pad = procrustes(wide, X);
  CHECK(pad >= 0.0);
  CHECK(pad <= 1.0);
  CHECK_THROWS_AS(procrustes(Matrix::Ones(100, 2), X), ValidationError);
}
