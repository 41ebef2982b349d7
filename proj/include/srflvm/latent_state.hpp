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

#ifndef SRFLVM_LATENT_STATE_HPP
#define SRFLVM_LATENT_STATE_HPP

#include "srflvm/common.hpp"

#include <vector>

namespace srflvm {

enum class CovarianceMode { diagonal, full };

/// q(X) = prod_n N(mu_n, S_n).
///
/// Diagonal mode stores log standard deviations (N x Q); full mode stores one
/// lower-triangular Cholesky factor R_n per observation, S_n = R_n R_n^T.
/// Standard deviations and Cholesky diagonals are kept in [1e-6, 1e6].
struct LatentState {
  Matrix means;
  CovarianceMode mode = CovarianceMode::diagonal;
  Matrix log_std;
  std::vector<Matrix> chol;

  Eigen::Index size() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }

  /// S_n as a dense Q x Q matrix.
  Matrix covariance(Eigen::Index n) const;

  static LatentState diagonal(const Matrix& means, double std_dev);
  static LatentState full(const Matrix& means, double std_dev);
};

/// Gradient with the same layout as LatentState.
struct LatentGradient {
  Matrix means;
  Matrix log_std;
  std::vector<Matrix> chol;

  static LatentGradient zeros_like(const LatentState& state);
  LatentGradient& operator+=(const LatentGradient& other);
};

/// x_n = mu_n + R_n eps_n.
Matrix sample_latents(const LatentState& state, const Matrix& noise);

/// Chain rule through sample_latents for fixed noise.
void sample_latents_backward(const LatentState& state, const Matrix& noise,
                             const Matrix& dX, LatentGradient& grad);

/// KL(q(X) || N(0, I)) = 1/2 sum_n [tr S_n + mu_n^T mu_n - log|S_n| - Q].
double kl_to_prior(const LatentState& state);

/// d kl_to_prior / d parameters.
LatentGradient kl_to_prior_grad(const LatentState& state);

/// Keeps every standard deviation / Cholesky diagonal inside [1e-6, 1e6] and
/// full-mode factors lower-triangular.
void clamp(LatentState& state);

/// PCA warm start: the top-Q principal component scores of the column-
/// standardised data, each scaled to unit variance. Missing entries (mask
/// false) are replaced by the column mean. Components beyond rank(Y) are 0.
Matrix pca_init(const Matrix& Y, const Mask& mask, Eigen::Index Q);

}  // namespace srflvm

#endif  // SRFLVM_LATENT_STATE_HPP
