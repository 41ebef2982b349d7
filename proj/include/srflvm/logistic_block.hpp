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

// Logistic-family likelihoods
//   p(y_nm | psi_nm) = c_nm exp(psi_nm)^a_nm / (1 + exp(psi_nm))^b_nm,  psi = Phi h_m,
// made conditionally Gaussian in h_m by Polya-Gamma variables omega_nm.
//
//   Bernoulli:          a = y, b = 1,     c = 1
//   negative binomial:  a = y, b = y + r, c = binom(y + r - 1, y)

#ifndef SRFLVM_LOGISTIC_BLOCK_HPP
#define SRFLVM_LOGISTIC_BLOCK_HPP

#include "srflvm/common.hpp"
#include "srflvm/model.hpp"

#include <cstdint>
#include <vector>

namespace srflvm {

/// Per-entry coefficients. Unobserved entries hold a = 0, b = 1, c = 1 and
/// never enter a likelihood.
struct LogisticParams {
  Matrix a;
  Matrix b;
  Matrix log_c;
  Matrix kappa;  // a - b/2

  Matrix c() const { return log_c.array().exp().matrix(); }
};

/// Throws ValidationError if an observed y lies outside the family's support.
LogisticParams likelihood_params(Family family, const ObservationSet& obs,
                                 const Vector& dispersion);
LogisticParams likelihood_params(const LikelihoodSpec& spec, const Matrix& Y);

/// Conditional posterior of one weight column given omega:
///   V = (Phi^T diag(omega) Phi + I)^-1,  m = V Phi^T kappa.
struct WeightPosterior {
  Vector mean;
  Matrix cov;
  Matrix chol;  // lower Cholesky factor of cov
};

WeightPosterior weight_posterior(const Matrix& phi, const Vector& omega, const Vector& kappa);

/// h = m + chol(V) eps.
Vector sample_weights(const WeightPosterior& post, const Vector& noise);
Vector sample_weights(const WeightPosterior& post, Rng& rng);

/// omega_nm ~ PG(b_nm, Phi_n h_m) for weights H (L x M). Entry (n, m) is drawn
/// from the substream derive_seed(seed, m, sweep).
Matrix sample_pg_matrix(const Matrix& H, const Matrix& phi, const LogisticParams& params,
                        std::uint64_t seed, std::uint64_t sweep);
Matrix sample_pg_matrix(const Matrix& H, const Matrix& phi, const LogisticParams& params,
                        Rng& rng);

/// Value, optional gradient and the linear predictors psi (one N x M matrix
/// per MC sample) of the fixed-noise logistic ELBO estimator. `omega` holds
/// one PG matrix per MC sample; it is treated as constant. The likelihood
/// weight scales terms (a) and (c).
struct LogisticEvaluation {
  ElboResult result;
  std::vector<Matrix> psi;
};

LogisticEvaluation logistic_evaluate(const ObservationSet& obs, Family family,
                                     const ModelState& state, const NoiseDraws& noise,
                                     const std::vector<Matrix>& omega, bool with_grad,
                                     const ElboOptions& options = {});

ElboTerms logistic_elbo(const ObservationSet& obs, Family family, const ModelState& state,
                        const NoiseDraws& noise, const std::vector<Matrix>& omega,
                        const ElboOptions& options = {});

ElboResult logistic_elbo_grad(const ObservationSet& obs, Family family, const ModelState& state,
                              const NoiseDraws& noise, const std::vector<Matrix>& omega,
                              const ElboOptions& options = {});

/// Fresh draws from `rng`; omega for each sample comes from `sweeps` Gibbs
/// sweeps (alternating weights and PG variables) started from PG(b, 0).
ElboTerms logistic_elbo(const ObservationSet& obs, Family family, const ModelState& state,
                        int samples, Rng& rng, int sweeps = 5);

/// Gibbs refresh of omega for a fixed design Phi, starting from `omega`.
Matrix gibbs_omega(const Matrix& phi, const ObservationSet& obs, const LogisticParams& params,
                   Matrix omega, int sweeps, Rng& rng);

/// MC average of the family mean at masked entries: sigmoid(psi) for
/// Bernoulli, r exp(psi) for negative binomial. Observed entries unchanged.
Matrix logistic_impute(const ObservationSet& obs, Family family, const ModelState& state,
                       int samples, Rng& rng, int sweeps = 5);

}  // namespace srflvm

#endif  // SRFLVM_LOGISTIC_BLOCK_HPP
