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

#include "srflvm/features.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace srflvm {

namespace {

std::vector<int> assign_folds(const std::vector<int>& labels, int folds, std::uint64_t seed,
                              bool& stratified) {
  const std::size_t N = labels.size();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < N; ++i) by_class[labels[i]].push_back(i);
  stratified = std::all_of(by_class.begin(), by_class.end(), [&](const auto& kv) {
    return kv.second.size() >= static_cast<std::size_t>(folds);
  });

  Rng rng(seed);
  std::vector<int> fold(N, 0);
  if (stratified) {
    std::size_t next = 0;
    for (auto& kv : by_class) {
      std::shuffle(kv.second.begin(), kv.second.end(), rng);
      for (std::size_t idx : kv.second) fold[idx] = static_cast<int>(next++ % static_cast<std::size_t>(folds));
    }
  } else {
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < N; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  return fold;
}

int vote(const std::vector<std::pair<double, std::size_t>>& nearest, const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (const auto& [d, idx] : nearest) ++counts[labels[idx]];
  int best = 0, best_count = -1;
  for (const auto& [label, c] : counts)  // ascending labels: ties keep the smallest
    if (c > best_count) {
      best = label;
      best_count = c;
    }
  return best;
}

Matrix center_and_scale(const Matrix& A, const char* which) {
  Matrix c = A.rowwise() - A.colwise().mean();
  const double norm = c.norm();
  if (!(norm > 1e-300)) throw ValidationError(std::string("procrustes: ") + which + " has zero variance");
  return c / norm;
}

}  // namespace

KnnResult knn_cv(const Matrix& latents, const std::vector<int>& labels, int k, int folds,
                 std::uint64_t seed) {
  const auto N = static_cast<std::size_t>(latents.rows());
  require_shape(labels.size() == N, "knn_cv: one label per latent row");
  if (k < 1) throw ValidationError("knn_cv: k must be >= 1");
  if (folds < 2 || static_cast<std::size_t>(folds) > N)
    throw ValidationError("knn_cv: folds must lie in [2, N]");

  KnnResult out;
  out.k = k;
  const std::vector<int> fold = assign_folds(labels, folds, seed, out.stratified);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < N; ++i) (fold[i] == f ? test : train).push_back(i);
    if (static_cast<std::size_t>(k) >= train.size())
      throw ValidationError("knn_cv: k = " + std::to_string(k) + " is not below the training-fold size " +
                            std::to_string(train.size()));
    std::size_t correct = 0;
    for (std::size_t i : test) {
      std::vector<std::pair<double, std::size_t>> d;
      d.reserve(train.size());
      for (std::size_t j : train) d.emplace_back((latents.row(static_cast<Eigen::Index>(i)) -
                                                  latents.row(static_cast<Eigen::Index>(j))).squaredNorm(), j);
      std::partial_sort(d.begin(), d.begin() + k, d.end());
      d.resize(static_cast<std::size_t>(k));
      if (vote(d, labels) == labels[i]) ++correct;
    }
    out.fold_accuracy.push_back(test.empty() ? 0.0
                                             : static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  const auto F = static_cast<double>(folds);
  out.mean = std::accumulate(out.fold_accuracy.begin(), out.fold_accuracy.end(), 0.0) / F;
  double ss = 0.0;
  for (double a : out.fold_accuracy) ss += (a - out.mean) * (a - out.mean);
  out.std = std::sqrt(ss / (F - 1.0));
  return out;
}

double imputation_mse(const Matrix& Y_true, const Matrix& Y_imputed, const Mask& mask) {
  require_shape(Y_true.rows() == Y_imputed.rows() && Y_true.cols() == Y_imputed.cols() &&
                    mask.rows() == Y_true.rows() && mask.cols() == Y_true.cols(),
                "imputation_mse: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index m = 0; m < Y_true.cols(); ++m)
    for (Eigen::Index n = 0; n < Y_true.rows(); ++n)
      if (!mask(n, m)) {
        const double d = Y_true(n, m) - Y_imputed(n, m);
        sum += d * d;
        ++count;
      }
  if (count == 0) throw ValidationError("imputation_mse: no hidden entries");
  return sum / static_cast<double>(count);
}

Matrix column_mean_impute(const Matrix& Y, const Mask& mask) {
  Matrix out = Y;
  for (Eigen::Index m = 0; m < Y.cols(); ++m) {
    double sum = 0.0, cnt = 0.0;
    for (Eigen::Index n = 0; n < Y.rows(); ++n)
      if (mask(n, m)) {
        sum += Y(n, m);
        cnt += 1.0;
      }
    const double mean = cnt > 0.0 ? sum / cnt : 0.0;
    for (Eigen::Index n = 0; n < Y.rows(); ++n)
      if (!mask(n, m)) out(n, m) = mean;
  }
  return out;
}

Matrix learned_kernel(const Matrix& latents, const MixtureState& mixture, Eigen::Index L_eval,
                      Rng& rng) {
  const SpectralMoments mom = mixture_moments(mixture.assign.probs(), mixture.comps);
  require_shape(mom.input_dim() == latents.cols(), "kernel_recovery: latent dimension mismatch");
  if (L_eval == 0) return expected_kernel(latents, mom);
  if (L_eval < 0 || L_eval % 2 != 0) throw ValidationError("kernel_recovery: L_eval must be even");

  const Eigen::Index P = mom.num_points();
  const Eigen::Index Q = mom.input_dim();
  std::vector<Matrix> roots;
  for (const auto& V : mom.covs) {
    Eigen::LLT<Matrix> llt(V);
    if (llt.info() != Eigen::Success) throw NumericError("kernel_recovery: covariance not SPD");
    roots.emplace_back(llt.matrixL());
  }
  Matrix W(L_eval / 2, Q);
  for (Eigen::Index j = 0; j < W.rows(); ++j) {
    const Eigen::Index l = j % P;
    const Vector eps = standard_normal(Q, 1, rng).col(0);
    W.row(j) = mom.means.row(l) + (roots[static_cast<std::size_t>(l)] * eps).transpose();
  }
  return kernel_estimate(feature_map(latents, SpectralPoints{W}));
}

double kernel_recovery(const Matrix& K_true, const Matrix& latents, const MixtureState& mixture,
                       Eigen::Index L_eval, Rng& rng) {
  require_shape(K_true.rows() == latents.rows() && K_true.cols() == latents.rows(),
                "kernel_recovery: K_true must be N x N");
  const double denom = K_true.norm();
  if (!(denom > 0.0)) throw ValidationError("kernel_recovery: K_true is zero");
  return (learned_kernel(latents, mixture, L_eval, rng) - K_true).norm() / denom;
}

double procrustes(const Matrix& latents, const Matrix& X_true) {
  require_shape(latents.rows() == X_true.rows(), "procrustes: row counts differ");
  const Eigen::Index D = std::max(latents.cols(), X_true.cols());
  Matrix A = Matrix::Zero(latents.rows(), D);
  Matrix B = Matrix::Zero(X_true.rows(), D);
  A.leftCols(latents.cols()) = latents;
  B.leftCols(X_true.cols()) = X_true;
  const Matrix a = center_and_scale(B, "X_true");
  const Matrix b = center_and_scale(A, "latents");
  Eigen::JacobiSVD<Matrix> svd(a.transpose() * b);
  const double s = svd.singularValues().sum();
  return std::max(0.0, 1.0 - s * s);
}

}  // namespace srflvm
