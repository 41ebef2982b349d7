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

// Metrics for learned latent spaces and imputations.

#ifndef SRFLVM_EVALKIT_HPP
#define SRFLVM_EVALKIT_HPP

#include "srflvm/common.hpp"
#include "srflvm/dp_mixture.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace srflvm {

struct KnnResult {
  int k = 1;
  double mean = 0.0;
  double std = 0.0;                 // sample standard deviation over folds
  std::vector<double> fold_accuracy;
  bool stratified = false;
};

/// Euclidean k-nearest-neighbour classification under `folds`-fold cross
/// validation. Folds are stratified by label when every class has at least
/// `folds` members, otherwise a plain seeded shuffle. Neighbours at equal
/// distance are taken in index order; vote ties go to the smallest label.
KnnResult knn_cv(const Matrix& latents, const std::vector<int>& labels, int k, int folds,
                 std::uint64_t seed);

/// Mean squared error over the hidden entries (mask false).
double imputation_mse(const Matrix& Y_true, const Matrix& Y_imputed, const Mask& mask);

/// Column-mean imputation of hidden entries (baseline).
Matrix column_mean_impute(const Matrix& Y, const Mask& mask);

/// Relative Frobenius error |K_hat - K_true| / |K_true| of the learned Gram
/// matrix at the latent means. With L_eval > 0, K_hat = Phi Phi^T from L_eval
/// random features whose frequencies are drawn from q(w_l), cycling through
/// the learned spectral points; with L_eval = 0, K_hat is the exact
/// expectation under q(W).
double kernel_recovery(const Matrix& K_true, const Matrix& latents, const MixtureState& mixture,
                       Eigen::Index L_eval, Rng& rng);

/// Learned Gram matrix used by kernel_recovery.
Matrix learned_kernel(const Matrix& latents, const MixtureState& mixture, Eigen::Index L_eval,
                      Rng& rng);

/// Procrustes disparity after optimal translation, uniform scaling and
/// orthogonal alignment; both inputs are centred and scaled to unit Frobenius
/// norm, so the result lies in [0, 1]. Narrower input is zero-padded.
double procrustes(const Matrix& latents, const Matrix& X_true);

struct EvalReport {
  std::vector<KnnResult> knn;
  std::optional<double> imputation_mse;
  std::optional<double> kernel_frobenius_rel_err;
  std::optional<double> procrustes_disparity;
  std::uint64_t fold_seed = 0;
  double wall_time = 0.0;
};

}  // namespace srflvm

#endif  // SRFLVM_EVALKIT_HPP
