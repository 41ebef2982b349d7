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

#include "srflvm/gaussian_block.hpp"

#include "srflvm/kernels.hpp"

namespace srflvm {

namespace {

ElboResult evaluate(const ObservationSet& obs, const ModelState& state, const NoiseDraws& noise,
                    const ElboOptions& options, bool with_grad) {
  validate(obs);
  if (noise.empty()) throw ValidationError("gaussian_elbo: need at least one MC sample");
  const double s2 = state.lik.noise_var();
  const double w = options.likelihood_weight / static_cast<double>(noise.size());

  ElboResult out;
  if (with_grad) out.grad = ElboGradient::zeros_like(state);
  for (const auto& eps : noise) {
    const FeatureDraw draw = build_features(state, eps);
    const auto terms =
        kernels::omp::gaussian_columns(draw.features.phi, obs.Y, obs.mask, s2, with_grad);
    out.terms.likelihood += w * terms.loglik;
    if (!with_grad) continue;
    backprop_features(state, eps, draw, terms.dphi, w, out.grad);
    out.grad.log_noise_var += w * terms.dnoise_var * s2;
  }

  out.terms.latent_kl = kl_to_prior(state.latent);
  if (with_grad) {
    const LatentGradient kg = kl_to_prior_grad(state.latent);
    out.grad.latent.means -= kg.means;
    if (kg.log_std.size() > 0) out.grad.latent.log_std -= kg.log_std;
    for (std::size_t n = 0; n < kg.chol.size(); ++n) out.grad.latent.chol[n] -= kg.chol[n];
  }
  return out;
}

}  // namespace

GaussianLikelihood GaussianLikelihood::from_variance(double s2) {
  if (!(s2 >= 1e-8 && s2 <= 1e8)) throw DomainError("noise variance must lie in [1e-8, 1e8]");
  return GaussianLikelihood{std::log(s2)};
}

double marginal_loglik(const Vector& y, const FeatureMatrix& phi, double noise_var,
                       const MaskColumn& mask_col) {
  require_shape(y.size() == phi.rows() && mask_col.size() == y.size(),
                "marginal_loglik: y, Phi and mask must have N rows");
  if (!(noise_var > 0.0)) throw DomainError("marginal_loglik: noise variance must be positive");
  const Mask mask = mask_col;
  return kernels::serial::gaussian_columns(phi.phi, y, mask, noise_var, false).loglik;
}

double marginal_loglik(const Vector& y, const FeatureMatrix& phi, double noise_var) {
  return marginal_loglik(y, phi, noise_var, MaskColumn::Constant(y.size(), true));
}

ElboTerms gaussian_elbo(const ObservationSet& obs, const ModelState& state,
                        const NoiseDraws& noise, const ElboOptions& options) {
  return evaluate(obs, state, noise, options, false).terms;
}

ElboTerms gaussian_elbo(const ObservationSet& obs, const ModelState& state, int samples,
                        Rng& rng) {
  if (samples < 1) throw ValidationError("gaussian_elbo: need at least one MC sample");
  return gaussian_elbo(obs, state, draw_noise(state, samples, Family::gaussian, obs.cols(), rng));
}

ElboResult gaussian_elbo_grad(const ObservationSet& obs, const ModelState& state,
                              const NoiseDraws& noise, const ElboOptions& options) {
  return evaluate(obs, state, noise, options, true);
}

Matrix gaussian_impute(const ObservationSet& obs, const ModelState& state, int samples,
                       Rng& rng) {
  validate(obs);
  if (samples < 1) throw ValidationError("gaussian_impute: need at least one MC sample");
  Matrix out = obs.Y;
  if (obs.complete()) return out;

  const Eigen::Index N = obs.rows();
  const double s2 = state.lik.noise_var();
  Matrix acc = Matrix::Zero(N, obs.cols());
  const NoiseDraws noise = draw_noise(state, samples, Family::gaussian, obs.cols(), rng);
  for (const auto& eps : noise) {
    const Matrix phi = build_features(state, eps).features.phi;
    const Eigen::Index L = phi.cols();
    for (Eigen::Index m = 0; m < obs.cols(); ++m) {
      if (obs.mask.col(m).all()) continue;
      Matrix A = s2 * Matrix::Identity(L, L);
      Vector rhs = Vector::Zero(L);
      for (Eigen::Index n = 0; n < N; ++n)
        if (obs.mask(n, m)) {
          A.selfadjointView<Eigen::Lower>().rankUpdate(phi.row(n).transpose());
          rhs += obs.Y(n, m) * phi.row(n).transpose();
        }
      A = A.selfadjointView<Eigen::Lower>();
      const Vector beta = kernels::robust_cholesky(A, "gaussian imputation").solve(rhs);
      for (Eigen::Index n = 0; n < N; ++n)
        if (!obs.mask(n, m)) acc(n, m) += phi.row(n).dot(beta);
    }
  }
  acc /= static_cast<double>(samples);
  for (Eigen::Index m = 0; m < obs.cols(); ++m)
    for (Eigen::Index n = 0; n < N; ++n)
      if (!obs.mask(n, m)) out(n, m) = acc(n, m);
  return out;
}

}  // namespace srflvm
