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

#include "srflvm/logistic_block.hpp"

#include "srflvm/kernels.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>

namespace srflvm {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_count(double y) { return y >= 0.0 && y == std::floor(y) && y < 9.0e15; }

std::string at(Eigen::Index n, Eigen::Index m) {
  return "(" + std::to_string(n) + ", " + std::to_string(m) + ")";
}

LogisticParams params_for(Family family, const ObservationSet& obs, const ModelState& state) {
  const Vector r = family == Family::negbinomial ? state.lik.dispersion()
                                                 : Vector::Ones(obs.cols()).eval();
  return likelihood_params(family, obs, r);
}

kernels::LogisticColumnInput column_input(const Matrix& phi, const LogisticParams& p,
                                          const Matrix& omega, const Mask& mask,
                                          const Matrix& eps_rows, const Matrix& eps_prior) {
  return kernels::LogisticColumnInput{&phi,   &p.a,  &p.b,      &p.log_c,
                                      &omega, &mask, &eps_rows, &eps_prior};
}

}  // namespace

LogisticParams likelihood_params(Family family, const ObservationSet& obs,
                                 const Vector& dispersion) {
  validate(obs);
  if (family == Family::gaussian)
    throw ValidationError("likelihood_params: gaussian family has no logistic form");
  const Eigen::Index N = obs.rows();
  const Eigen::Index M = obs.cols();
  if (family == Family::negbinomial) {
    require_shape(dispersion.size() == M, "likelihood_params: one dispersion per column");
    if (!(dispersion.array() > 0.0).all())
      throw DomainError("likelihood_params: dispersion must be positive");
  }

  LogisticParams p{Matrix::Zero(N, M), Matrix::Ones(N, M), Matrix::Zero(N, M), Matrix()};
  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index n = 0; n < N; ++n) {
      if (!obs.mask(n, m)) continue;
      const double y = obs.Y(n, m);
      if (family == Family::bernoulli) {
        if (y != 0.0 && y != 1.0)
          throw ValidationError("bernoulli data must be 0 or 1; found " + std::to_string(y) +
                                " at " + at(n, m));
        p.a(n, m) = y;
      } else {
        if (!is_count(y))
          throw ValidationError("negative binomial data must be non-negative integers; found " +
                                std::to_string(y) + " at " + at(n, m));
        const double r = dispersion(m);
        p.a(n, m) = y;
        p.b(n, m) = y + r;
        p.log_c(n, m) = std::lgamma(y + r) - std::lgamma(y + 1.0) - std::lgamma(r);
      }
    }
  p.kappa = p.a - 0.5 * p.b;
  return p;
}

LogisticParams likelihood_params(const LikelihoodSpec& spec, const Matrix& Y) {
  return likelihood_params(spec.family, ObservationSet::fully_observed(Y),
                           Vector::Constant(Y.cols(), spec.dispersion));
}

WeightPosterior weight_posterior(const Matrix& phi, const Vector& omega, const Vector& kappa) {
  require_shape(omega.size() == phi.rows() && kappa.size() == phi.rows(),
                "weight_posterior: omega and kappa need one entry per row of Phi");
  if ((omega.array() < 0.0).any()) throw DomainError("weight_posterior: omega must be >= 0");
  const Eigen::Index L = phi.cols();
  Matrix lambda = phi.transpose() * omega.asDiagonal() * phi;
  lambda.diagonal().array() += 1.0;
  const auto llt = kernels::robust_cholesky(lambda, "weight posterior");
  WeightPosterior post;
  post.cov = llt.solve(Matrix::Identity(L, L));
  post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
  post.mean = post.cov * (phi.transpose() * kappa);
  Eigen::LLT<Matrix> vchol(post.cov);
  if (vchol.info() != Eigen::Success) throw NumericError("weight posterior: covariance not SPD");
  post.chol = vchol.matrixL();
  return post;
}

Vector sample_weights(const WeightPosterior& post, const Vector& noise) {
  require_shape(noise.size() == post.mean.size(), "sample_weights: noise length must be L");
  return post.mean + post.chol * noise;
}

Vector sample_weights(const WeightPosterior& post, Rng& rng) {
  return sample_weights(post, standard_normal(post.mean.size(), 1, rng).col(0).eval());
}

Matrix sample_pg_matrix(const Matrix& H, const Matrix& phi, const LogisticParams& params,
                        std::uint64_t seed, std::uint64_t sweep) {
  require_shape(H.rows() == phi.cols() && H.cols() == params.b.cols() &&
                    phi.rows() == params.b.rows(),
                "sample_pg_matrix: H must be L x M and Phi N x L");
  return kernels::omp::pg_matrix(params.b, phi * H, seed, sweep);
}

Matrix sample_pg_matrix(const Matrix& H, const Matrix& phi, const LogisticParams& params,
                        Rng& rng) {
  return sample_pg_matrix(H, phi, params, rng(), 0);
}

LogisticEvaluation logistic_evaluate(const ObservationSet& obs, Family family,
                                     const ModelState& state, const NoiseDraws& noise,
                                     const std::vector<Matrix>& omega, bool with_grad,
                                     const ElboOptions& options) {
  if (noise.empty()) throw ValidationError("logistic_elbo: need at least one MC sample");
  require_shape(omega.size() == noise.size(), "logistic_elbo: one PG matrix per MC sample");
  const LogisticParams p = params_for(family, obs, state);
  const double w = options.likelihood_weight / static_cast<double>(noise.size());

  LogisticEvaluation out;
  ElboResult& res = out.result;
  if (with_grad) res.grad = ElboGradient::zeros_like(state);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const NoiseDraw& eps = noise[i];
    require_shape(omega[i].rows() == obs.rows() && omega[i].cols() == obs.cols(),
                  "logistic_elbo: PG matrix must be N x M");
    const FeatureDraw draw = build_features(state, eps);
    const auto in = column_input(draw.features.phi, p, omega[i], obs.mask, eps.weight_rows,
                                 eps.weight_prior);
    const auto terms = kernels::omp::logistic_columns(in, with_grad);
    res.terms.likelihood += w * terms.loglik;
    res.terms.weight_kl += w * terms.weight_kl;
    out.psi.push_back(terms.psi);
    if (!with_grad) continue;
    backprop_features(state, eps, draw, terms.dphi, w, res.grad);

    if (family == Family::negbinomial) {
      for (Eigen::Index m = 0; m < obs.cols(); ++m) {
        const double r = std::exp(state.lik.log_dispersion(m));
        const double dg_r = boost::math::digamma(r);
        double dr = 0.0;
        for (Eigen::Index n = 0; n < obs.rows(); ++n) {
          if (!obs.mask(n, m)) continue;
          dr += boost::math::digamma(p.b(n, m)) - dg_r - softplus(terms.psi(n, m)) -
                0.5 * terms.dkappa(n, m);
        }
        res.grad.log_dispersion(m) += w * dr * r;
      }
    }
  }

  res.terms.latent_kl = kl_to_prior(state.latent);
  if (with_grad) {
    const LatentGradient kg = kl_to_prior_grad(state.latent);
    res.grad.latent.means -= kg.means;
    if (kg.log_std.size() > 0) res.grad.latent.log_std -= kg.log_std;
    for (std::size_t n = 0; n < kg.chol.size(); ++n) res.grad.latent.chol[n] -= kg.chol[n];
  }
  return out;
}

ElboTerms logistic_elbo(const ObservationSet& obs, Family family, const ModelState& state,
                        const NoiseDraws& noise, const std::vector<Matrix>& omega,
                        const ElboOptions& options) {
  return logistic_evaluate(obs, family, state, noise, omega, false, options).result.terms;
}

ElboResult logistic_elbo_grad(const ObservationSet& obs, Family family, const ModelState& state,
                              const NoiseDraws& noise, const std::vector<Matrix>& omega,
                              const ElboOptions& options) {
  return logistic_evaluate(obs, family, state, noise, omega, true, options).result;
}

Matrix gibbs_omega(const Matrix& phi, const ObservationSet& obs, const LogisticParams& params,
                   Matrix omega, int sweeps, Rng& rng) {
  const std::uint64_t seed = rng();
  for (int s = 0; s < sweeps; ++s) {
    const Matrix eps_rows = standard_normal(obs.rows(), obs.cols(), rng);
    const Matrix eps_prior = standard_normal(phi.cols(), obs.cols(), rng);
    const auto in = column_input(phi, params, omega, obs.mask, eps_rows, eps_prior);
    const auto terms = kernels::omp::logistic_columns(in, false);
    omega = kernels::omp::pg_matrix(params.b, terms.psi, seed, static_cast<std::uint64_t>(s));
  }
  return omega;
}

ElboTerms logistic_elbo(const ObservationSet& obs, Family family, const ModelState& state,
                        int samples, Rng& rng, int sweeps) {
  validate(obs);
  if (samples < 1) throw ValidationError("logistic_elbo: need at least one MC sample");
  const NoiseDraws noise = draw_noise(state, samples, family, obs.cols(), rng);
  const LogisticParams p = params_for(family, obs, state);
  std::vector<Matrix> omega;
  for (const auto& eps : noise) {
    const Matrix phi = build_features(state, eps).features.phi;
    const Matrix start = kernels::omp::pg_matrix(p.b, Matrix::Zero(obs.rows(), obs.cols()), rng(), 0);
    omega.push_back(gibbs_omega(phi, obs, p, start, sweeps, rng));
  }
  return logistic_elbo(obs, family, state, noise, omega);
}

Matrix logistic_impute(const ObservationSet& obs, Family family, const ModelState& state,
                       int samples, Rng& rng, int sweeps) {
  validate(obs);
  if (samples < 1) throw ValidationError("logistic_impute: need at least one MC sample");
  Matrix out = obs.Y;
  if (obs.complete()) return out;

  const LogisticParams p = params_for(family, obs, state);
  const Vector r = state.lik.dispersion();
  Matrix acc = Matrix::Zero(obs.rows(), obs.cols());
  const NoiseDraws noise = draw_noise(state, samples, family, obs.cols(), rng);
  for (const auto& eps : noise) {
    const Matrix phi = build_features(state, eps).features.phi;
    const Matrix start = kernels::omp::pg_matrix(p.b, Matrix::Zero(obs.rows(), obs.cols()), rng(), 0);
    const Matrix omega = gibbs_omega(phi, obs, p, start, sweeps, rng);
    const auto in = column_input(phi, p, omega, obs.mask, eps.weight_rows, eps.weight_prior);
    const Matrix psi = kernels::omp::logistic_columns(in, false).psi;
    for (Eigen::Index m = 0; m < obs.cols(); ++m)
      for (Eigen::Index n = 0; n < obs.rows(); ++n) {
        if (obs.mask(n, m)) continue;
        acc(n, m) += family == Family::bernoulli ? sigmoid(psi(n, m))
                                                 : r(m) * std::exp(std::min(psi(n, m), 700.0));
      }
  }
  acc /= static_cast<double>(samples);
  for (Eigen::Index m = 0; m < obs.cols(); ++m)
    for (Eigen::Index n = 0; n < obs.rows(); ++n)
      if (!obs.mask(n, m)) out(n, m) = acc(n, m);
  return out;
}

}  // namespace srflvm
