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

// State shared by the likelihood blocks and the optimiser.

#ifndef SRFLVM_MODEL_HPP
#define SRFLVM_MODEL_HPP

#include "srflvm/common.hpp"
#include "srflvm/dp_mixture.hpp"
#include "srflvm/features.hpp"
#include "srflvm/latent_state.hpp"

#include <string>
#include <vector>

namespace srflvm {

enum class Family { gaussian, bernoulli, negbinomial };

std::string to_string(Family family);
Family family_from_string(const std::string& name);
inline bool is_logistic(Family f) { return f != Family::gaussian; }

/// Likelihood family plus the initial negative-binomial dispersion r.
struct LikelihoodSpec {
  Family family = Family::gaussian;
  double dispersion = 1.0;
};

/// Observed data. mask(n, m) == true marks an observed entry.
struct ObservationSet {
  Matrix Y;
  Mask mask;

  static ObservationSet fully_observed(const Matrix& Y);
  Eigen::Index rows() const { return Y.rows(); }
  Eigen::Index cols() const { return Y.cols(); }
  bool complete() const { return mask.all(); }
};

/// Shapes agree, every column has an observed entry, observed values finite.
void validate(const ObservationSet& obs);

/// Likelihood hyperparameters: log sigma^2 (Gaussian) and log r_m per column
/// (negative binomial). sigma^2 is kept in [1e-8, 1e8], r_m in [1e-3, 1e3].
struct LikelihoodParams {
  double log_noise_var = std::log(0.1);
  Vector log_dispersion;

  double noise_var() const { return std::exp(log_noise_var); }
  Vector dispersion() const { return log_dispersion.array().exp(); }
};

void clamp(LikelihoodParams& params);

struct ModelState {
  LatentState latent;
  MixtureState mixture;
  LikelihoodParams lik;

  Eigen::Index num_features() const { return 2 * mixture.assign.logits.rows(); }
};

/// Standard-normal draws for one Monte-Carlo sample of the ELBO. The noise is
/// an explicit input so value and gradient evaluations share it.
struct NoiseDraw {
  Matrix latent;                // N x Q
  std::vector<Matrix> spectral; // K matrices of (L/2) x Q
  Matrix weight_rows;           // N x M (logistic families only)
  Matrix weight_prior;          // L x M (logistic families only)
};

using NoiseDraws = std::vector<NoiseDraw>;

NoiseDraws draw_noise(const ModelState& state, int samples, Family family,
                      Eigen::Index columns, Rng& rng);

struct ElboTerms {
  double likelihood = 0.0;  // MC estimate of E[log p(Y | ...)] (term a)
  double latent_kl = 0.0;   // KL(q(X) || p(X)) (term b)
  double weight_kl = 0.0;   // MC estimate of the weight-posterior KL (term c)

  double value() const { return likelihood - latent_kl - weight_kl; }
};

struct ElboGradient {
  LatentGradient latent;
  Matrix logits;
  Matrix comp_means;
  std::vector<Matrix> comp_chol;
  double log_noise_var = 0.0;
  Vector log_dispersion;

  static ElboGradient zeros_like(const ModelState& state);
};

struct ElboResult {
  ElboTerms terms;
  ElboGradient grad;  // empty unless requested
};

struct ElboOptions {
  /// Multiplies the likelihood term (and its gradient); 0 leaves only the KL.
  double likelihood_weight = 1.0;
};

/// One Monte-Carlo draw of the random-feature design: X, W and Phi(X, W).
struct FeatureDraw {
  Matrix X;
  SpectralPoints W;
  FeatureMatrix features;
};

FeatureDraw build_features(const ModelState& state, const NoiseDraw& noise);

/// Adds weight * d/d(parameters) of a function of Phi, given its derivative
/// dphi, to `grad` (chain rule through feature_map and both reparameterisations).
void backprop_features(const ModelState& state, const NoiseDraw& noise, const FeatureDraw& draw,
                       const Matrix& dphi, double weight, ElboGradient& grad);

}  // namespace srflvm

#endif  // SRFLVM_MODEL_HPP
