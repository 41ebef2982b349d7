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

#include "srflvm/model.hpp"

#include <algorithm>
#include <cmath>

namespace srflvm {

std::string to_string(Family family) {
  switch (family) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli: return "bernoulli";
    case Family::negbinomial: return "negbinomial";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "bernoulli") return Family::bernoulli;
  if (name == "negbinomial" || name == "negative_binomial") return Family::negbinomial;
  throw ValidationError("unknown likelihood family '" + name + "'");
}

ObservationSet ObservationSet::fully_observed(const Matrix& Y) {
  return ObservationSet{Y, Mask::Constant(Y.rows(), Y.cols(), true)};
}

void validate(const ObservationSet& obs) {
  require_shape(obs.mask.rows() == obs.Y.rows() && obs.mask.cols() == obs.Y.cols(),
                "observation set: mask shape " + std::to_string(obs.mask.rows()) + "x" +
                    std::to_string(obs.mask.cols()) + " differs from Y " +
                    std::to_string(obs.Y.rows()) + "x" + std::to_string(obs.Y.cols()));
  if (obs.Y.rows() == 0 || obs.Y.cols() == 0) throw ValidationError("observation set: empty Y");
  for (Eigen::Index m = 0; m < obs.Y.cols(); ++m) {
    if (!obs.mask.col(m).any())
      throw ValidationError("observation set: column " + std::to_string(m) +
                            " has no observed entries");
    for (Eigen::Index n = 0; n < obs.Y.rows(); ++n)
      if (obs.mask(n, m) && !std::isfinite(obs.Y(n, m)))
        throw ValidationError("observation set: non-finite observed value at (" +
                              std::to_string(n) + ", " + std::to_string(m) + ")");
  }
}

void clamp(LikelihoodParams& params) {
  params.log_noise_var = std::clamp(params.log_noise_var, std::log(1e-8), std::log(1e8));
  params.log_dispersion = params.log_dispersion.cwiseMax(std::log(1e-3)).cwiseMin(std::log(1e3));
}

NoiseDraws draw_noise(const ModelState& state, int samples, Family family, Eigen::Index columns,
                      Rng& rng) {
  const Eigen::Index N = state.latent.size();
  const Eigen::Index Q = state.latent.dim();
  const Eigen::Index P = state.mixture.assign.logits.rows();
  const Eigen::Index K = state.mixture.comps.size();
  NoiseDraws draws(static_cast<std::size_t>(samples));
  for (auto& d : draws) {
    d.latent = standard_normal(N, Q, rng);
    d.spectral.reserve(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) d.spectral.push_back(standard_normal(P, Q, rng));
    if (is_logistic(family)) {
      d.weight_rows = standard_normal(N, columns, rng);
      d.weight_prior = standard_normal(2 * P, columns, rng);
    }
  }
  return draws;
}

ElboGradient ElboGradient::zeros_like(const ModelState& state) {
  ElboGradient g;
  g.latent = LatentGradient::zeros_like(state.latent);
  g.logits = Matrix::Zero(state.mixture.assign.logits.rows(), state.mixture.assign.logits.cols());
  g.comp_means = Matrix::Zero(state.mixture.comps.size(), state.mixture.comps.dim());
  g.comp_chol.assign(state.mixture.comps.chol.size(),
                     Matrix::Zero(state.mixture.comps.dim(), state.mixture.comps.dim()));
  g.log_dispersion = Vector::Zero(state.lik.log_dispersion.size());
  return g;
}

FeatureDraw build_features(const ModelState& state, const NoiseDraw& noise) {
  FeatureDraw d;
  d.X = sample_latents(state.latent, noise.latent);
  d.W = draw_spectral_points(state.mixture.assign.probs(), state.mixture.comps, noise.spectral);
  d.features = feature_map(d.X, d.W);
  return d;
}

void backprop_features(const ModelState& state, const NoiseDraw& noise, const FeatureDraw& draw,
                       const Matrix& dphi, double weight, ElboGradient& grad) {
  const FeatureGradient fg = feature_map_backward(draw.X, draw.W, weight * dphi);
  sample_latents_backward(state.latent, noise.latent, fg.dX, grad.latent);
  const SpectralGradient sg =
      spectral_points_backward(state.mixture.assign, state.mixture.comps, noise.spectral, fg.dW);
  grad.logits += sg.dlogits;
  grad.comp_means += sg.dmeans;
  for (std::size_t k = 0; k < sg.dchol.size(); ++k) grad.comp_chol[k] += sg.dchol[k];
}

}  // namespace srflvm
