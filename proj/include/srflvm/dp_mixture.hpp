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

// Truncated stick-breaking Dirichlet-process mixture over spectral
// frequencies.
//
//   v_k ~ Beta(1, alpha),  pi_k = v_k prod_{j<k} (1 - v_j),  alpha ~ Ga(alpha0, beta0)
//   z_l ~ Cat(pi),         w_l | z_l = k ~ N(mu_k, Sigma_k)
//
// Variational factors: q(z_l) = Cat(phi_l), q(v_k) = Beta(a_k, b_k),
// q(alpha) = Ga(a_alpha, b_alpha). q(W) integrates z out and is summarised
// per spectral point by the Gaussian N(sum_k phi_lk mu_k, sum_k phi_lk Sigma_k).

#ifndef SRFLVM_DP_MIXTURE_HPP
#define SRFLVM_DP_MIXTURE_HPP

#include "srflvm/common.hpp"
#include "srflvm/features.hpp"

#include <vector>

namespace srflvm {

/// Component means (K x Q) and lower-triangular Cholesky factors of the
/// component covariances (diagonal >= 1e-8).
struct MixtureComponents {
  Matrix means;
  std::vector<Matrix> chol;

  Eigen::Index size() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }
  Matrix covariance(Eigen::Index k) const {
    const Matrix& L = chol[static_cast<std::size_t>(k)];
    return L * L.transpose();
  }
};

void validate(const MixtureComponents& comps);

/// q(z): unconstrained logits, (L/2) x K. Rows of probs() lie on the simplex.
struct Assignments {
  Matrix logits;

  Matrix probs() const;
  static Assignments uniform(Eigen::Index points, Eigen::Index components);
  static Assignments from_probs(const Matrix& phi);
};

Matrix softmax_rows(const Matrix& logits);

struct StickState {
  Vector a_v;
  Vector b_v;
  double a_alpha = 1.0;
  double b_alpha = 1.0;
  double alpha0 = 1.0;
  double beta0 = 1.0;

  double expected_alpha() const { return a_alpha / b_alpha; }
  Eigen::Index size() const { return a_v.size(); }
  /// a_v = b_v = 1, q(alpha) = prior.
  static StickState prior(Eigen::Index components, double alpha0 = 1.0, double beta0 = 1.0);
};

void validate(const StickState& stick);

struct MixtureState {
  MixtureComponents comps;
  Assignments assign;
  StickState stick;
};

struct StickLogMoments {
  Vector log_v;           // E[log v_k]
  Vector log_one_minus_v; // E[log(1 - v_k)]
};

StickLogMoments stick_log_moments(const StickState& stick);

/// E[log pi_k] = E[log v_k] + sum_{j<k} E[log(1 - v_j)].
Vector expected_log_weights(const StickState& stick);

/// m_l = sum_k phi_lk mu_k, V_l = sum_k phi_lk Sigma_k.
SpectralMoments mixture_moments(const Matrix& phi, const MixtureComponents& comps);

struct BetaParams {
  Vector a;
  Vector b;
};

/// a_k = 1 + sum_l phi_lk, b_k = E[alpha] + sum_l sum_{j>k} phi_lj.
BetaParams update_v(const Matrix& phi, double expected_alpha);

struct GammaParams {
  double shape;
  double rate;
};

/// shape = alpha0, rate = beta0 - sum_k E[log(1 - v_k)].
GammaParams update_alpha(const StickState& stick);

/// sum_l sum_k phi_lk (log phi_lk - E[log pi_k]); zero probabilities add 0.
double assignment_kl(const Matrix& phi, const StickState& stick);

/// d assignment_kl / d logits.
Matrix assignment_kl_grad(const Assignments& assign, const StickState& stick);

/// Gamma(a_alpha, rate b_alpha) draw.
double sample_alpha(const StickState& stick, Rng& rng);

/// Local objective of the v block with everything else fixed:
///   sum_lk phi_lk E[log pi_k] + sum_k (E[alpha] - 1) E[log(1 - v_k)] + H[q(v)].
/// update_v is its exact maximiser.
double stick_objective(const Matrix& phi, const StickState& stick);

/// Local objective of the alpha block with q(v) fixed:
///   (sum_k E[log(1 - v_k)] - beta0) E[alpha] + (alpha0 - 1) E[log alpha] + H[q(alpha)].
/// update_alpha is its exact maximiser.
double concentration_objective(const StickState& stick);

/// Collapsed DP part of the ELBO:
///   E[log p(z | v)] - E[log q(z)] + E[log p(v | alpha)] - E[log q(v)]
///   + E[log p(alpha)] - E[log q(alpha)].
double dp_elbo_terms(const Matrix& phi, const StickState& stick);

/// Reparameterised draw of the spectral points:
///   w_l = sum_k phi_lk mu_k + sum_k sqrt(phi_lk) L_k eps_lk,
/// which is N(m_l, V_l) with the moments of mixture_moments(). `noise` holds
/// K matrices of shape (L/2) x Q.
SpectralPoints draw_spectral_points(const Matrix& phi, const MixtureComponents& comps,
                                    const std::vector<Matrix>& noise);

struct SpectralGradient {
  Matrix dlogits;            // (L/2) x K
  Matrix dmeans;             // K x Q
  std::vector<Matrix> dchol; // K lower-triangular Q x Q
};

SpectralGradient spectral_points_backward(const Assignments& assign,
                                          const MixtureComponents& comps,
                                          const std::vector<Matrix>& noise,
                                          const Matrix& dW);

/// Projects Cholesky factors back to lower-triangular with diagonal >= 1e-8.
void clamp_components(MixtureComponents& comps);

}  // namespace srflvm

#endif  // SRFLVM_DP_MIXTURE_HPP
