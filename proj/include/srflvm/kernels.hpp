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

// Hot loops of the library, each in two flavours:
//
//   kernels::serial  straightforward single-threaded reference, kept for
//                    testing and benchmarking;
//   kernels::omp     OpenMP version used by the library.
//
// The OpenMP versions partition work into chunks whose boundaries depend only
// on the problem shape, never on the thread count, and reduce the chunk
// partials in index order. Results are therefore bitwise identical for any
// number of worker threads. They agree with the serial reference to rounding.

#ifndef SRFLVM_KERNELS_HPP
#define SRFLVM_KERNELS_HPP

#include "srflvm/common.hpp"

#include <cstdint>

namespace srflvm::kernels {

/// Sum over columns of the masked Gaussian marginal log-likelihood
/// log N(y_obs | 0, Phi_obs Phi_obs^T + s2 I), with optional gradients.
struct GaussianColumnTerms {
  double loglik = 0.0;
  Matrix dphi;              // N x L, empty unless gradients requested
  double dnoise_var = 0.0;  // d loglik / d s2
};

/// Per-column inputs of the Polya-Gamma augmented logistic likelihood.
struct LogisticColumnInput {
  const Matrix* phi;       // N x L
  const Matrix* a;         // N x M
  const Matrix* b;         // N x M
  const Matrix* log_c;     // N x M
  const Matrix* omega;     // N x M, PG draws (stop-gradient)
  const Mask* mask;        // N x M
  const Matrix* eps_rows;  // N x M standard normal, weight perturbation
  const Matrix* eps_prior; // L x M standard normal, weight perturbation
};

/// Term (a) minus the weight-posterior KL term (c), summed over columns.
struct LogisticColumnTerms {
  double loglik = 0.0;    // sum of term (a)
  double weight_kl = 0.0; // sum of term (c)
  Matrix dphi;            // d (a - c) / d Phi, N x L
  Matrix dkappa;          // d (a - c) / d kappa, N x M (observed rows)
  Matrix psi;             // Phi h_m per column, N x M
  Matrix weights;         // h_m per column, L x M
};

namespace serial {

Matrix feature_map(const Matrix& X, const Matrix& W);
/// d/d(w_l^T x_n) given d/dPhi; N x (L/2).
Matrix feature_angle_grad(const Matrix& X, const Matrix& W, const Matrix& dphi);
GaussianColumnTerms gaussian_columns(const Matrix& phi, const Matrix& Y,
                                     const Mask& mask, double noise_var,
                                     bool with_grad);
LogisticColumnTerms logistic_columns(const LogisticColumnInput& in, bool with_grad);
Matrix pg_matrix(const Matrix& b, const Matrix& psi, std::uint64_t seed,
                 std::uint64_t sweep);
Matrix expected_kernel(const Matrix& X, const Matrix& means,
                       const std::vector<Matrix>& covs);

}  // namespace serial

namespace omp {

Matrix feature_map(const Matrix& X, const Matrix& W);
Matrix feature_angle_grad(const Matrix& X, const Matrix& W, const Matrix& dphi);
GaussianColumnTerms gaussian_columns(const Matrix& phi, const Matrix& Y,
                                     const Mask& mask, double noise_var,
                                     bool with_grad);
LogisticColumnTerms logistic_columns(const LogisticColumnInput& in, bool with_grad);
Matrix pg_matrix(const Matrix& b, const Matrix& psi, std::uint64_t seed,
                 std::uint64_t sweep);
Matrix expected_kernel(const Matrix& X, const Matrix& means,
                       const std::vector<Matrix>& covs);

}  // namespace omp

/// Cholesky of a symmetric positive definite matrix. Tries the plain matrix
/// first, then retries with 1e-6 and 1e-4 times the mean diagonal added.
/// Throws NumericError if all three attempts fail.
Eigen::LLT<Matrix> robust_cholesky(const Matrix& A, const char* what);

/// Worker threads used by the omp kernels (0 = OpenMP default).
void set_worker_count(int workers);
int worker_count();

}  // namespace srflvm::kernels

#endif  // SRFLVM_KERNELS_HPP
