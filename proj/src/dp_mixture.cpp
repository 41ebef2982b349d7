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

#include "srflvm/dp_mixture.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>

namespace srflvm {

namespace {

constexpr double kCholFloor = 1e-8;

double digamma(double x) { return boost::math::digamma(x); }

// E[log q(v)] for v ~ Beta(a, b).
double beta_neg_entropy(double a, double b) {
  const double dab = digamma(a + b);
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * (digamma(a) - dab) + (b - 1.0) * (digamma(b) - dab);
}

}  // namespace

void validate(const MixtureComponents& comps) {
  const Eigen::Index K = comps.size();
  const Eigen::Index Q = comps.dim();
  require_shape(static_cast<Eigen::Index>(comps.chol.size()) == K,
                "mixture components: one Cholesky factor per component");
  for (const auto& L : comps.chol) {
    require_shape(L.rows() == Q && L.cols() == Q, "mixture components: factor must be Q x Q");
    if (L.diagonal().minCoeff() < kCholFloor)
      throw DomainError("mixture components: Cholesky diagonal below 1e-8");
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index l = 0; l < logits.rows(); ++l) {
    const double mx = logits.row(l).maxCoeff();
    const RowVector e = (logits.row(l).array() - mx).exp().matrix();
    out.row(l) = e / e.sum();
  }
  return out;
}

Matrix Assignments::probs() const { return softmax_rows(logits); }

Assignments Assignments::uniform(Eigen::Index points, Eigen::Index components) {
  return Assignments{Matrix::Zero(points, components)};
}

Assignments Assignments::from_probs(const Matrix& phi) {
  return Assignments{phi.array().max(1e-300).log().matrix()};
}

StickState StickState::prior(Eigen::Index components, double alpha0, double beta0) {
  StickState s;
  s.a_v = Vector::Ones(components);
  s.b_v = Vector::Ones(components);
  s.alpha0 = alpha0;
  s.beta0 = beta0;
  s.a_alpha = alpha0;
  s.b_alpha = beta0;
  return s;
}

void validate(const StickState& stick) {
  require_shape(stick.a_v.size() == stick.b_v.size(), "stick state: a_v and b_v differ in length");
  const bool ok = (stick.a_v.array() > 0.0).all() && (stick.b_v.array() > 0.0).all() &&
                  stick.a_alpha > 0.0 && stick.b_alpha > 0.0 && stick.alpha0 > 0.0 &&
                  stick.beta0 > 0.0;
  if (!ok) throw DomainError("stick state: all parameters must be positive");
}

StickLogMoments stick_log_moments(const StickState& stick) {
  validate(stick);
  const Eigen::Index K = stick.size();
  StickLogMoments out{Vector(K), Vector(K)};
  for (Eigen::Index k = 0; k < K; ++k) {
    const double dab = digamma(stick.a_v(k) + stick.b_v(k));
    out.log_v(k) = digamma(stick.a_v(k)) - dab;
    out.log_one_minus_v(k) = digamma(stick.b_v(k)) - dab;
  }
  return out;
}

Vector expected_log_weights(const StickState& stick) {
  const auto m = stick_log_moments(stick);
  Vector out(stick.size());
  double prefix = 0.0;
  for (Eigen::Index k = 0; k < stick.size(); ++k) {
    out(k) = m.log_v(k) + prefix;
    prefix += m.log_one_minus_v(k);
  }
  return out;
}

SpectralMoments mixture_moments(const Matrix& phi, const MixtureComponents& comps) {
  require_shape(phi.cols() == comps.size(), "mixture_moments: phi has " +
                                                std::to_string(phi.cols()) + " columns, K = " +
                                                std::to_string(comps.size()));
  const Eigen::Index Q = comps.dim();
  std::vector<Matrix> sigma;
  sigma.reserve(static_cast<std::size_t>(comps.size()));
  for (Eigen::Index k = 0; k < comps.size(); ++k) sigma.push_back(comps.covariance(k));

  SpectralMoments out;
  out.means = phi * comps.means;
  out.covs.assign(static_cast<std::size_t>(phi.rows()), Matrix::Zero(Q, Q));
  for (Eigen::Index l = 0; l < phi.rows(); ++l)
    for (Eigen::Index k = 0; k < comps.size(); ++k)
      out.covs[static_cast<std::size_t>(l)] += phi(l, k) * sigma[static_cast<std::size_t>(k)];
  return out;
}

BetaParams update_v(const Matrix& phi, double expected_alpha) {
  if (!(expected_alpha > 0.0)) throw DomainError("update_v: E[alpha] must be positive");
  const Eigen::Index K = phi.cols();
  const Vector mass = phi.colwise().sum().transpose();
  BetaParams out{Vector(K), Vector(K)};
  double tail = 0.0;
  for (Eigen::Index k = K - 1; k >= 0; --k) {
    out.a(k) = 1.0 + mass(k);
    out.b(k) = expected_alpha + tail;
    tail += mass(k);
  }
  return out;
}

GammaParams update_alpha(const StickState& stick) {
  const auto m = stick_log_moments(stick);
  const double rate = stick.beta0 - m.log_one_minus_v.sum();
  if (!(rate > 0.0)) throw NumericError("update_alpha: non-positive Gamma rate");
  return GammaParams{stick.alpha0, rate};
}

double assignment_kl(const Matrix& phi, const StickState& stick) {
  require_shape(phi.cols() == stick.size(), "assignment_kl: K mismatch");
  const Vector elog_pi = expected_log_weights(stick);
  double kl = 0.0;
  for (Eigen::Index l = 0; l < phi.rows(); ++l)
    for (Eigen::Index k = 0; k < phi.cols(); ++k) {
      const double p = phi(l, k);
      if (p > 0.0) kl += p * (std::log(p) - elog_pi(k));
    }
  return kl;
}

Matrix assignment_kl_grad(const Assignments& assign, const StickState& stick) {
  const Matrix phi = assign.probs();
  const Vector elog_pi = expected_log_weights(stick);
  Matrix out(phi.rows(), phi.cols());
  for (Eigen::Index l = 0; l < phi.rows(); ++l) {
    // d/dphi_lk = log phi_lk + 1 - E[log pi_k]; softmax Jacobian removes the
    // constant, so use log phi - E[log pi] directly.
    RowVector g(phi.cols());
    for (Eigen::Index k = 0; k < phi.cols(); ++k)
      g(k) = std::log(std::max(phi(l, k), 1e-300)) - elog_pi(k);
    const double avg = phi.row(l).dot(g);
    out.row(l) = phi.row(l).array() * (g.array() - avg);
  }
  return out;
}

double sample_alpha(const StickState& stick, Rng& rng) {
  validate(stick);
  std::gamma_distribution<double> gamma(stick.a_alpha, 1.0 / stick.b_alpha);
  return gamma(rng);
}

double stick_objective(const Matrix& phi, const StickState& stick) {
  const auto m = stick_log_moments(stick);
  const Vector elog_pi = expected_log_weights(stick);
  const double e_alpha = stick.expected_alpha();
  double f = (phi * elog_pi).sum();
  for (Eigen::Index k = 0; k < stick.size(); ++k) {
    f += (e_alpha - 1.0) * m.log_one_minus_v(k);
    f -= beta_neg_entropy(stick.a_v(k), stick.b_v(k));
  }
  return f;
}

double concentration_objective(const StickState& stick) {
  const auto m = stick_log_moments(stick);
  const double a = stick.a_alpha;
  const double b = stick.b_alpha;
  const double e_alpha = a / b;
  const double e_log_alpha = digamma(a) - std::log(b);
  const double entropy = a - std::log(b) + std::lgamma(a) + (1.0 - a) * digamma(a);
  return (m.log_one_minus_v.sum() - stick.beta0) * e_alpha +
         (stick.alpha0 - 1.0) * e_log_alpha + entropy;
}

double dp_elbo_terms(const Matrix& phi, const StickState& stick) {
  const auto m = stick_log_moments(stick);
  const double a = stick.a_alpha;
  const double b = stick.b_alpha;
  const double e_alpha = a / b;
  const double e_log_alpha = digamma(a) - std::log(b);
  const auto K = static_cast<double>(stick.size());

  double f = -assignment_kl(phi, stick);
  f += K * e_log_alpha + (e_alpha - 1.0) * m.log_one_minus_v.sum();
  for (Eigen::Index k = 0; k < stick.size(); ++k) f -= beta_neg_entropy(stick.a_v(k), stick.b_v(k));
  f += stick.alpha0 * std::log(stick.beta0) - std::lgamma(stick.alpha0) +
       (stick.alpha0 - 1.0) * e_log_alpha - stick.beta0 * e_alpha;
  f += a - std::log(b) + std::lgamma(a) + (1.0 - a) * digamma(a);
  return f;
}

SpectralPoints draw_spectral_points(const Matrix& phi, const MixtureComponents& comps,
                                    const std::vector<Matrix>& noise) {
  const Eigen::Index K = comps.size();
  require_shape(phi.cols() == K && static_cast<Eigen::Index>(noise.size()) == K,
                "draw_spectral_points: K mismatch");
  Matrix W = phi * comps.means;
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& eps = noise[static_cast<std::size_t>(k)];
    require_shape(eps.rows() == phi.rows() && eps.cols() == comps.dim(),
                  "draw_spectral_points: noise shape");
    const Vector root = phi.col(k).array().sqrt();
    W.noalias() += root.asDiagonal() * (eps * comps.chol[static_cast<std::size_t>(k)].transpose());
  }
  return SpectralPoints{W};
}

SpectralGradient spectral_points_backward(const Assignments& assign,
                                          const MixtureComponents& comps,
                                          const std::vector<Matrix>& noise,
                                          const Matrix& dW) {
  const Matrix phi = assign.probs();
  const Eigen::Index P = phi.rows();
  const Eigen::Index K = comps.size();

  SpectralGradient g;
  g.dmeans = phi.transpose() * dW;
  g.dchol.reserve(static_cast<std::size_t>(K));

  const Matrix dphi_mean = dW * comps.means.transpose();  // P x K
  Matrix t(P, K);                                          // dw_l . L_k eps_lk
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& eps = noise[static_cast<std::size_t>(k)];
    const auto& L = comps.chol[static_cast<std::size_t>(k)];
    const Vector root = phi.col(k).array().sqrt();
    t.col(k) = (dW.array() * (eps * L.transpose()).array()).rowwise().sum();
    Matrix dL = dW.transpose() * root.asDiagonal() * eps;
    g.dchol.push_back(dL.triangularView<Eigen::Lower>());
  }

  g.dlogits.resize(P, K);
  for (Eigen::Index l = 0; l < P; ++l) {
    const RowVector p = phi.row(l);
    const RowVector root = p.array().sqrt();
    const double mean_avg = p.dot(dphi_mean.row(l));
    const double root_avg = root.dot(t.row(l));
    for (Eigen::Index j = 0; j < K; ++j)
      g.dlogits(l, j) = p(j) * (dphi_mean(l, j) - mean_avg) + 0.5 * root(j) * t(l, j) -
                        0.5 * p(j) * root_avg;
  }
  return g;
}

void clamp_components(MixtureComponents& comps) {
  for (auto& L : comps.chol) {
    L = L.triangularView<Eigen::Lower>();
    for (Eigen::Index q = 0; q < L.rows(); ++q) L(q, q) = std::max(L(q, q), kCholFloor);
  }
}

}  // namespace srflvm
