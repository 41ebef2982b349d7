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

#include "srflvm/kernels.hpp"

#include "srflvm/polya_gamma.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <numbers>
#include <vector>

namespace srflvm::kernels {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr Eigen::Index kColumnChunk = 32;

int g_workers = 0;

struct ChunkRange {
  Eigen::Index begin;
  Eigen::Index end;
};

std::vector<ChunkRange> column_chunks(Eigen::Index cols) {
  std::vector<ChunkRange> out;
  for (Eigen::Index b = 0; b < cols; b += kColumnChunk)
    out.push_back({b, std::min(cols, b + kColumnChunk)});
  return out;
}

std::vector<Eigen::Index> observed_rows(const Mask& mask, Eigen::Index col) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index n = 0; n < mask.rows(); ++n)
    if (mask(n, col)) rows.push_back(n);
  return rows;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// One column with an arbitrary observation pattern. Accumulates into `out`.
void gaussian_single_column(const Matrix& phi, const Matrix& Y, const Mask& mask,
                            Eigen::Index col, double s2, bool with_grad,
                            GaussianColumnTerms& out) {
  const auto rows = observed_rows(mask, col);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index L = phi.cols();
  if (n == 0) throw ValidationError("gaussian likelihood: column has no observed entries");

  Matrix phi_o(n, L);
  Vector y_o(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    phi_o.row(i) = phi.row(rows[i]);
    y_o(i) = Y(rows[i], col);
  }

  Matrix A = phi_o.transpose() * phi_o;
  A.diagonal().array() += s2;
  const auto llt = robust_cholesky(A, "gaussian marginal likelihood");
  const Vector proj = phi_o.transpose() * y_o;
  const Vector beta = llt.solve(proj);
  const double quad = (y_o.squaredNorm() - proj.dot(beta)) / s2;
  out.loglik += -0.5 * static_cast<double>(n) * kLog2Pi -
                0.5 * (static_cast<double>(n - L) * std::log(s2) + log_det(llt)) - 0.5 * quad;
  if (!with_grad) return;

  const Vector alpha = (y_o - phi_o * beta) / s2;
  const Matrix a_inv = llt.solve(Matrix::Identity(L, L));
  // alpha^T Phi = beta^T because A beta = Phi^T y.
  const Matrix d_o = alpha * beta.transpose() - phi_o * a_inv;
  for (Eigen::Index i = 0; i < n; ++i) out.dphi.row(rows[i]) += d_o.row(i);
  out.dnoise_var += 0.5 * (alpha.squaredNorm() -
                           (static_cast<double>(n - L) + s2 * a_inv.trace()) / s2);
}

// Shared factorisation for columns without missing entries.
struct FullColumnFactor {
  Eigen::LLT<Matrix> llt;
  double log_det_a = 0.0;
  double trace_a_inv = 0.0;
  Matrix a_inv;  // only with gradients
};

FullColumnFactor factor_full(const Matrix& phi, double s2, bool with_grad) {
  const Eigen::Index L = phi.cols();
  Matrix A = Matrix::Zero(L, L);
  A.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  A = A.selfadjointView<Eigen::Lower>();
  A.diagonal().array() += s2;
  FullColumnFactor f;
  f.llt = robust_cholesky(A, "gaussian marginal likelihood");
  f.log_det_a = log_det(f.llt);
  if (with_grad) {
    f.a_inv = f.llt.solve(Matrix::Identity(L, L));
    f.trace_a_inv = f.a_inv.trace();
  }
  return f;
}

// Full columns of one chunk. With alpha = (y - Phi beta) / s2 and
// A beta = Phi^T y, the column gradient alpha beta^T - Phi A^-1 splits into
// y beta^T / s2, added to `out.dphi` here, and -Phi (beta beta^T / s2 + A^-1),
// whose L x L factor is accumulated in `inner` and applied once by the caller.
void gaussian_full_columns(const Matrix& phi, const Matrix& Y,
                           const std::vector<Eigen::Index>& cols, double s2,
                           bool with_grad, const FullColumnFactor& f,
                           GaussianColumnTerms& out, Matrix& inner) {
  if (cols.empty()) return;
  const Eigen::Index N = phi.rows();
  const Eigen::Index L = phi.cols();
  const auto J = static_cast<Eigen::Index>(cols.size());
  Matrix Yc(N, J);
  for (Eigen::Index j = 0; j < J; ++j) Yc.col(j) = Y.col(cols[j]);
  const Matrix proj = phi.transpose() * Yc;
  const Matrix beta = f.llt.solve(proj);
  const double per_col_const = -0.5 * static_cast<double>(N) * kLog2Pi -
                               0.5 * (static_cast<double>(N - L) * std::log(s2) + f.log_det_a);
  const double trace_k_inv = (static_cast<double>(N - L) + s2 * f.trace_a_inv) / s2;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double yy = Yc.col(j).squaredNorm();
    const double py = proj.col(j).dot(beta.col(j));
    out.loglik += per_col_const - 0.5 * (yy - py) / s2;
    if (with_grad) {
      // |y - Phi beta|^2 = y^T y - proj^T beta - s2 beta^T beta.
      const double resid = std::max(yy - py - s2 * beta.col(j).squaredNorm(), 0.0);
      out.dnoise_var += 0.5 * (resid / (s2 * s2) - trace_k_inv);
    }
  }
  if (!with_grad) return;
  out.dphi.noalias() += Yc * beta.transpose() / s2;
  inner.noalias() += beta * beta.transpose() / s2;
  inner += static_cast<double>(J) * f.a_inv;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct LogisticColumnOut {
  double loglik = 0.0;
  double weight_kl = 0.0;
};

// One column of the augmented logistic likelihood. Adds d/dPhi into `dphi`
// and writes column `m` of dkappa, psi and weights.
//
// Weights are drawn as h = Lambda^-1 (Phi^T (kappa + sqrt(omega) e1) + e2),
// Lambda = Phi^T Omega Phi + I, which is distributed N(m, Lambda^-1) and is a
// smooth function of Phi for fixed (omega, e1, e2).
LogisticColumnOut logistic_single_column(const LogisticColumnInput& in, Eigen::Index m,
                                         bool with_grad, Matrix* dphi,
                                         LogisticColumnTerms& out) {
  const Matrix& phi = *in.phi;
  const Eigen::Index N = phi.rows();
  const Eigen::Index L = phi.cols();

  Vector omega(N);
  Vector kappa(N);
  Vector t(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    if ((*in.mask)(n, m)) {
      omega(n) = (*in.omega)(n, m);
      kappa(n) = (*in.a)(n, m) - 0.5 * (*in.b)(n, m);
      t(n) = kappa(n) + std::sqrt(omega(n)) * (*in.eps_rows)(n, m);
    } else {
      omega(n) = 0.0;
      kappa(n) = 0.0;
      t(n) = 0.0;
    }
  }

  const Matrix omega_phi = omega.asDiagonal() * phi;
  Matrix lambda = phi.transpose() * omega_phi;
  lambda.diagonal().array() += 1.0;
  const auto llt = robust_cholesky(lambda, "weight posterior");

  const Vector r = phi.transpose() * t + in.eps_prior->col(m);
  const Vector h = llt.solve(r);
  const Vector psi = phi * h;

  const Matrix V = llt.solve(Matrix::Identity(L, L));
  const Vector mean = V * (phi.transpose() * kappa);

  LogisticColumnOut res;
  Vector g_psi = Vector::Zero(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    if (!(*in.mask)(n, m)) continue;
    const double a = (*in.a)(n, m);
    const double b = (*in.b)(n, m);
    res.loglik += (*in.log_c)(n, m) + a * psi(n) - b * softplus(psi(n));
    g_psi(n) = a - b * sigmoid(psi(n));
  }
  res.weight_kl = 0.5 * (V.trace() + mean.squaredNorm() - static_cast<double>(L) + log_det(llt));

  out.psi.col(m) = psi;
  out.weights.col(m) = h;
  if (!with_grad) return res;

  // Term (a) through psi = Phi h and h = Lambda^-1 r.
  const Vector h_bar = phi.transpose() * g_psi;
  const Vector lam = llt.solve(h_bar);
  Matrix d = g_psi * h.transpose();
  d.noalias() += t * lam.transpose();
  d.noalias() -= (omega_phi * h) * lam.transpose();
  d.noalias() -= (omega_phi * lam) * h.transpose();
  Vector dkappa = phi * lam;

  // Term (c) = (tr V + m^T m - L + log|Lambda|) / 2, subtracted.
  const Vector vm = V * mean;
  Matrix g_sym = V - V * V;
  g_sym.noalias() -= vm * mean.transpose();
  g_sym.noalias() -= mean * vm.transpose();
  d.noalias() -= omega_phi * g_sym;
  d.noalias() -= kappa * vm.transpose();
  dkappa.noalias() -= phi * vm;

  for (Eigen::Index n = 0; n < N; ++n)
    if (!(*in.mask)(n, m)) dkappa(n) = 0.0;
  *dphi += d;
  out.dkappa.col(m) = dkappa;
  return res;
}

void init_logistic_out(const LogisticColumnInput& in, bool with_grad, LogisticColumnTerms& out) {
  const Eigen::Index N = in.phi->rows();
  const Eigen::Index L = in.phi->cols();
  const Eigen::Index M = in.a->cols();
  out.psi = Matrix::Zero(N, M);
  out.weights = Matrix::Zero(L, M);
  if (with_grad) {
    out.dphi = Matrix::Zero(N, L);
    out.dkappa = Matrix::Zero(N, M);
  }
}

double expected_kernel_entry(const Matrix& X, const Matrix& means,
                             const std::vector<Matrix>& covs, Eigen::Index i,
                             Eigen::Index j) {
  const Vector d = (X.row(i) - X.row(j)).transpose();
  double acc = 0.0;
  for (Eigen::Index l = 0; l < means.rows(); ++l) {
    const double quad = d.dot(covs[static_cast<std::size_t>(l)] * d);
    acc += std::exp(std::max(-0.5 * quad, -745.0)) * std::cos(means.row(l).dot(d));
  }
  return acc / static_cast<double>(means.rows());
}

}  // namespace

Eigen::LLT<Matrix> robust_cholesky(const Matrix& A, const char* what) {
  if (!A.allFinite()) throw NumericError(std::string("cholesky of a non-finite matrix: ") + what);
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() == Eigen::Success) return llt;
  const double mean_diag = A.diagonal().mean();
  for (double jitter : {1e-6, 1e-4}) {
    Matrix J = A;
    J.diagonal().array() += jitter * std::fabs(mean_diag);
    llt.compute(J);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericError(std::string("cholesky failed: ") + what);
}

void set_worker_count(int workers) {
  g_workers = workers;
  if (workers > 0) omp_set_num_threads(workers);
}

int worker_count() { return g_workers > 0 ? g_workers : omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------

namespace serial {

Matrix feature_map(const Matrix& X, const Matrix& W) {
  const Eigen::Index N = X.rows();
  const Eigen::Index P = W.rows();
  const double s = std::sqrt(1.0 / static_cast<double>(P));  // sqrt(2/L), L = 2P
  Matrix phi(N, 2 * P);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index l = 0; l < P; ++l) {
      const double u = X.row(n).dot(W.row(l));
      phi(n, 2 * l) = s * std::sin(u);
      phi(n, 2 * l + 1) = s * std::cos(u);
    }
  }
  return phi;
}

Matrix feature_angle_grad(const Matrix& X, const Matrix& W, const Matrix& dphi) {
  const Eigen::Index N = X.rows();
  const Eigen::Index P = W.rows();
  const double s = std::sqrt(1.0 / static_cast<double>(P));
  Matrix g(N, P);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index l = 0; l < P; ++l) {
      const double u = X.row(n).dot(W.row(l));
      g(n, l) = s * (dphi(n, 2 * l) * std::cos(u) - dphi(n, 2 * l + 1) * std::sin(u));
    }
  }
  return g;
}

GaussianColumnTerms gaussian_columns(const Matrix& phi, const Matrix& Y, const Mask& mask,
                                     double noise_var, bool with_grad) {
  GaussianColumnTerms out;
  if (with_grad) out.dphi = Matrix::Zero(phi.rows(), phi.cols());
  for (Eigen::Index m = 0; m < Y.cols(); ++m)
    gaussian_single_column(phi, Y, mask, m, noise_var, with_grad, out);
  return out;
}

LogisticColumnTerms logistic_columns(const LogisticColumnInput& in, bool with_grad) {
  LogisticColumnTerms out;
  init_logistic_out(in, with_grad, out);
  for (Eigen::Index m = 0; m < in.a->cols(); ++m) {
    const auto r = logistic_single_column(in, m, with_grad, &out.dphi, out);
    out.loglik += r.loglik;
    out.weight_kl += r.weight_kl;
  }
  return out;
}

Matrix pg_matrix(const Matrix& b, const Matrix& psi, std::uint64_t seed, std::uint64_t sweep) {
  Matrix omega(b.rows(), b.cols());
  for (Eigen::Index m = 0; m < b.cols(); ++m) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m), sweep));
    for (Eigen::Index n = 0; n < b.rows(); ++n) omega(n, m) = pg_sample(b(n, m), psi(n, m), rng);
  }
  return omega;
}

Matrix expected_kernel(const Matrix& X, const Matrix& means, const std::vector<Matrix>& covs) {
  const Eigen::Index N = X.rows();
  Matrix K(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) K(i, j) = expected_kernel_entry(X, means, covs, i, j);
  return K;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------

namespace omp {

Matrix feature_map(const Matrix& X, const Matrix& W) {
  const Eigen::Index N = X.rows();
  const Eigen::Index P = W.rows();
  const double s = std::sqrt(1.0 / static_cast<double>(P));
  Matrix phi(N, 2 * P);
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index l = 0; l < P; ++l) {
      const double u = X.row(n).dot(W.row(l));
      phi(n, 2 * l) = s * std::sin(u);
      phi(n, 2 * l + 1) = s * std::cos(u);
    }
  }
  return phi;
}

Matrix feature_angle_grad(const Matrix& X, const Matrix& W, const Matrix& dphi) {
  const Eigen::Index N = X.rows();
  const Eigen::Index P = W.rows();
  const double s = std::sqrt(1.0 / static_cast<double>(P));
  Matrix g(N, P);
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index l = 0; l < P; ++l) {
      const double u = X.row(n).dot(W.row(l));
      g(n, l) = s * (dphi(n, 2 * l) * std::cos(u) - dphi(n, 2 * l + 1) * std::sin(u));
    }
  }
  return g;
}

GaussianColumnTerms gaussian_columns(const Matrix& phi, const Matrix& Y, const Mask& mask,
                                     double noise_var, bool with_grad) {
  const Eigen::Index N = phi.rows();
  const Eigen::Index L = phi.cols();
  const Eigen::Index M = Y.cols();

  std::vector<bool> full(static_cast<std::size_t>(M));
  bool any_full = false;
  for (Eigen::Index m = 0; m < M; ++m) {
    full[static_cast<std::size_t>(m)] = mask.col(m).all();
    any_full = any_full || full[static_cast<std::size_t>(m)];
  }
  FullColumnFactor factor;
  if (any_full) factor = factor_full(phi, noise_var, with_grad);

  const auto chunks = column_chunks(M);
  std::vector<GaussianColumnTerms> partial(chunks.size());
  std::vector<Matrix> inner(chunks.size());
  const auto n_chunks = static_cast<std::ptrdiff_t>(chunks.size());

  // Exceptions must not escape the parallel region.
  std::vector<std::exception_ptr> errors(chunks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    auto& part = partial[ci];
    try {
      if (with_grad) {
        part.dphi = Matrix::Zero(N, L);
        inner[ci] = Matrix::Zero(L, L);
      }
      std::vector<Eigen::Index> full_cols;
      for (Eigen::Index m = chunks[ci].begin; m < chunks[ci].end; ++m) {
        if (full[static_cast<std::size_t>(m)])
          full_cols.push_back(m);
        else
          gaussian_single_column(phi, Y, mask, m, noise_var, with_grad, part);
      }
      gaussian_full_columns(phi, Y, full_cols, noise_var, with_grad, factor, part, inner[ci]);
    } catch (...) {
      errors[ci] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  GaussianColumnTerms out;
  Matrix inner_sum;
  if (with_grad) {
    out.dphi = Matrix::Zero(N, L);
    inner_sum = Matrix::Zero(L, L);
  }
  for (std::size_t c = 0; c < partial.size(); ++c) {
    out.loglik += partial[c].loglik;
    if (with_grad) {
      out.dphi += partial[c].dphi;
      out.dnoise_var += partial[c].dnoise_var;
      inner_sum += inner[c];
    }
  }
  if (with_grad && any_full) out.dphi.noalias() -= phi * inner_sum;
  return out;
}

LogisticColumnTerms logistic_columns(const LogisticColumnInput& in, bool with_grad) {
  const Eigen::Index N = in.phi->rows();
  const Eigen::Index L = in.phi->cols();
  LogisticColumnTerms out;
  init_logistic_out(in, with_grad, out);

  const auto chunks = column_chunks(in.a->cols());
  const auto n_chunks = static_cast<std::ptrdiff_t>(chunks.size());
  std::vector<Matrix> dphi(chunks.size());
  std::vector<LogisticColumnOut> sums(chunks.size());
  std::vector<std::exception_ptr> errors(chunks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    try {
      if (with_grad) dphi[ci] = Matrix::Zero(N, L);
      for (Eigen::Index m = chunks[ci].begin; m < chunks[ci].end; ++m) {
        // Distinct chunks write disjoint columns of out.psi/weights/dkappa.
        const auto r = logistic_single_column(in, m, with_grad, &dphi[ci], out);
        sums[ci].loglik += r.loglik;
        sums[ci].weight_kl += r.weight_kl;
      }
    } catch (...) {
      errors[ci] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    out.loglik += sums[c].loglik;
    out.weight_kl += sums[c].weight_kl;
    if (with_grad) out.dphi += dphi[c];
  }
  return out;
}

Matrix pg_matrix(const Matrix& b, const Matrix& psi, std::uint64_t seed, std::uint64_t sweep) {
  if (!(b.array() > 0.0).all()) throw DomainError("pg_matrix: b must be positive");
  Matrix omega(b.rows(), b.cols());
  const auto M = static_cast<std::ptrdiff_t>(b.cols());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t m = 0; m < M; ++m) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m), sweep));
    for (Eigen::Index n = 0; n < b.rows(); ++n) omega(n, m) = pg_sample(b(n, m), psi(n, m), rng);
  }
  return omega;
}

Matrix expected_kernel(const Matrix& X, const Matrix& means, const std::vector<Matrix>& covs) {
  const auto N = static_cast<std::ptrdiff_t>(X.rows());
  Matrix K(N, N);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < N; ++i)
    for (std::ptrdiff_t j = 0; j < N; ++j) K(i, j) = expected_kernel_entry(X, means, covs, i, j);
  return K;
}

}  // namespace omp

}  // namespace srflvm::kernels
