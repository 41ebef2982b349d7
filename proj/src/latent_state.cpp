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

#include "srflvm/latent_state.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace srflvm {

namespace {

constexpr double kStdFloor = 1e-6;
constexpr double kStdCeil = 1e6;

}  // namespace

Matrix LatentState::covariance(Eigen::Index n) const {
  if (mode == CovarianceMode::diagonal) {
    const Vector var = (2.0 * log_std.row(n).array()).exp();
    return var.asDiagonal();
  }
  const Matrix& R = chol[static_cast<std::size_t>(n)];
  return R * R.transpose();
}

LatentState LatentState::diagonal(const Matrix& means, double std_dev) {
  LatentState s;
  s.means = means;
  s.mode = CovarianceMode::diagonal;
  s.log_std = Matrix::Constant(means.rows(), means.cols(), std::log(std_dev));
  return s;
}

LatentState LatentState::full(const Matrix& means, double std_dev) {
  LatentState s;
  s.means = means;
  s.mode = CovarianceMode::full;
  s.chol.assign(static_cast<std::size_t>(means.rows()),
                std_dev * Matrix::Identity(means.cols(), means.cols()));
  return s;
}

LatentGradient LatentGradient::zeros_like(const LatentState& state) {
  LatentGradient g;
  g.means = Matrix::Zero(state.size(), state.dim());
  if (state.mode == CovarianceMode::diagonal)
    g.log_std = Matrix::Zero(state.size(), state.dim());
  else
    g.chol.assign(state.chol.size(), Matrix::Zero(state.dim(), state.dim()));
  return g;
}

LatentGradient& LatentGradient::operator+=(const LatentGradient& other) {
  means += other.means;
  if (log_std.size() > 0) log_std += other.log_std;
  for (std::size_t n = 0; n < chol.size(); ++n) chol[n] += other.chol[n];
  return *this;
}

Matrix sample_latents(const LatentState& state, const Matrix& noise) {
  require_shape(noise.rows() == state.size() && noise.cols() == state.dim(),
                "sample_latents: noise must be N x Q");
  if (state.mode == CovarianceMode::diagonal)
    return state.means + (state.log_std.array().exp() * noise.array()).matrix();
  Matrix X = state.means;
  for (Eigen::Index n = 0; n < state.size(); ++n)
    X.row(n) += (state.chol[static_cast<std::size_t>(n)] * noise.row(n).transpose()).transpose();
  return X;
}

void sample_latents_backward(const LatentState& state, const Matrix& noise, const Matrix& dX,
                             LatentGradient& grad) {
  grad.means += dX;
  if (state.mode == CovarianceMode::diagonal) {
    grad.log_std.array() += dX.array() * noise.array() * state.log_std.array().exp();
    return;
  }
  for (Eigen::Index n = 0; n < state.size(); ++n) {
    const Matrix outer = dX.row(n).transpose() * noise.row(n);
    grad.chol[static_cast<std::size_t>(n)] += outer.triangularView<Eigen::Lower>().toDenseMatrix();
  }
}

double kl_to_prior(const LatentState& state) {
  const auto Q = static_cast<double>(state.dim());
  double kl = 0.5 * state.means.squaredNorm();
  if (state.mode == CovarianceMode::diagonal) {
    const auto& s = state.log_std.array();
    kl += 0.5 * ((2.0 * s).exp() - 2.0 * s).sum() - 0.5 * Q * static_cast<double>(state.size());
    return kl;
  }
  for (const auto& R : state.chol)
    kl += 0.5 * (R.squaredNorm() - 2.0 * R.diagonal().array().log().sum() - Q);
  return kl;
}

LatentGradient kl_to_prior_grad(const LatentState& state) {
  LatentGradient g = LatentGradient::zeros_like(state);
  g.means = state.means;
  if (state.mode == CovarianceMode::diagonal) {
    g.log_std = ((2.0 * state.log_std.array()).exp() - 1.0).matrix();
    return g;
  }
  for (std::size_t n = 0; n < state.chol.size(); ++n) {
    const Matrix& R = state.chol[n];
    Matrix d = R.triangularView<Eigen::Lower>();
    d.diagonal() -= R.diagonal().cwiseInverse();
    g.chol[n] = d;
  }
  return g;
}

void clamp(LatentState& state) {
  if (state.mode == CovarianceMode::diagonal) {
    state.log_std = state.log_std.cwiseMax(std::log(kStdFloor)).cwiseMin(std::log(kStdCeil));
    return;
  }
  for (auto& R : state.chol) {
    R = R.triangularView<Eigen::Lower>();
    for (Eigen::Index q = 0; q < R.rows(); ++q)
      R(q, q) = std::clamp(R(q, q), kStdFloor, kStdCeil);
  }
}

Matrix pca_init(const Matrix& Y, const Mask& mask, Eigen::Index Q) {
  const Eigen::Index N = Y.rows();
  const Eigen::Index M = Y.cols();
  Matrix Z(N, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    double sum = 0.0, sq = 0.0, cnt = 0.0;
    for (Eigen::Index n = 0; n < N; ++n)
      if (mask(n, m)) {
        sum += Y(n, m);
        sq += Y(n, m) * Y(n, m);
        cnt += 1.0;
      }
    const double mean = cnt > 0.0 ? sum / cnt : 0.0;
    const double var = cnt > 0.0 ? sq / cnt - mean * mean : 0.0;
    const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    for (Eigen::Index n = 0; n < N; ++n) Z(n, m) = mask(n, m) ? (Y(n, m) - mean) / sd : 0.0;
  }

  Eigen::BDCSVD<Matrix> svd(Z, Eigen::ComputeThinU);
  Matrix out = Matrix::Zero(N, Q);
  const Eigen::Index r = std::min<Eigen::Index>(Q, svd.singularValues().size());
  for (Eigen::Index q = 0; q < r; ++q) {
    if (svd.singularValues()(q) < 1e-12) continue;
    Vector score = svd.matrixU().col(q);
    // Sign convention: largest-magnitude entry positive, for reproducibility.
    Eigen::Index imax;
    score.cwiseAbs().maxCoeff(&imax);
    if (score(imax) < 0.0) score = -score;
    score.array() -= score.mean();
    const double sd = std::sqrt(score.squaredNorm() / static_cast<double>(N));
    if (sd > 0.0) out.col(q) = score / sd;
  }
  return out;
}

}  // namespace srflvm
