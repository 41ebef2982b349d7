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

// Gaussian likelihood: Y_m ~ N(0, Phi Phi^T + s2 I) per column, with the
// weights integrated out.

#ifndef SRFLVM_GAUSSIAN_BLOCK_HPP
#define SRFLVM_GAUSSIAN_BLOCK_HPP

#include "srflvm/common.hpp"
#include "srflvm/features.hpp"
#include "srflvm/model.hpp"

namespace srflvm {

using MaskColumn = Eigen::Matrix<bool, Eigen::Dynamic, 1>;

/// Noise variance, stored on the log scale. s2 is kept in [1e-8, 1e8].
struct GaussianLikelihood {
  double log_noise_var = std::log(0.1);

  double noise_variance() const { return std::exp(log_noise_var); }
  static GaussianLikelihood from_variance(double s2);
};

/// log N(y_obs | 0, Phi_obs Phi_obs^T + s2 I), through the L x L system
/// s2 I + Phi_obs^T Phi_obs. Only rows with mask_col true are used.
double marginal_loglik(const Vector& y, const FeatureMatrix& phi, double noise_var,
                       const MaskColumn& mask_col);
double marginal_loglik(const Vector& y, const FeatureMatrix& phi, double noise_var);

/// MC estimate (1/I) sum_i sum_m marginal_loglik(y_m, Phi_i) - KL(q(X) || p(X))
/// for explicit noise draws (one per sample).
ElboTerms gaussian_elbo(const ObservationSet& obs, const ModelState& state,
                        const NoiseDraws& noise, const ElboOptions& options = {});

/// Same estimator with fresh draws from `rng`.
ElboTerms gaussian_elbo(const ObservationSet& obs, const ModelState& state, int samples,
                        Rng& rng);

/// Value and exact gradient of the fixed-noise estimator.
ElboResult gaussian_elbo_grad(const ObservationSet& obs, const ModelState& state,
                              const NoiseDraws& noise, const ElboOptions& options = {});

/// Posterior mean of the masked entries, averaged over `samples` draws of
/// (X, W). Observed entries are copied from obs.Y unchanged.
Matrix gaussian_impute(const ObservationSet& obs, const ModelState& state, int samples,
                       Rng& rng);

}  // namespace srflvm

#endif  // SRFLVM_GAUSSIAN_BLOCK_HPP
