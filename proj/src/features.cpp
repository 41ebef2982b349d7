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

#include "srflvm/features.hpp"

#include "srflvm/kernels.hpp"

#include <Eigen/Eigenvalues>

namespace srflvm {

void validate(const SpectralPoints& points) {
  require_shape(points.freqs.rows() >= 1 && points.freqs.cols() >= 1,
                "spectral points: need L/2 >= 1 and Q >= 1");
  if (!points.freqs.allFinite()) throw DomainError("spectral points: non-finite entry");
}

void validate(const SpectralMoments& moments) {
  require_shape(moments.means.rows() >= 1 && moments.means.cols() >= 1,
                "spectral moments: need L/2 >= 1 and Q >= 1");
  require_shape(static_cast<Eigen::Index>(moments.covs.size()) == moments.means.rows(),
                "spectral moments: one covariance per spectral point");
  const Eigen::Index Q = moments.means.cols();
  for (const auto& V : moments.covs) {
    require_shape(V.rows() == Q && V.cols() == Q, "spectral moments: covariance must be Q x Q");
    if (!V.allFinite()) throw DomainError("spectral moments: non-finite covariance");
    if ((V - V.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + V.cwiseAbs().maxCoeff()))
      throw DomainError("spectral moments: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(V, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10)
      throw DomainError("spectral moments: covariance not positive semi-definite");
  }
}

FeatureMatrix feature_map(const Matrix& X, const SpectralPoints& points) {
  validate(points);
  require_shape(X.cols() == points.input_dim(), "feature_map: X has " +
                                                    std::to_string(X.cols()) +
                                                    " columns, spectral points have Q = " +
                                                    std::to_string(points.input_dim()));
  return FeatureMatrix{kernels::omp::feature_map(X, points.freqs)};
}

Matrix kernel_estimate(const FeatureMatrix& features) {
  return features.phi * features.phi.transpose();
}

Matrix expected_feature_map(const Matrix& X, const SpectralMoments& moments) {
  validate(moments);
  require_shape(X.cols() == moments.input_dim(), "expected_feature_map: dimension mismatch");
  const Eigen::Index N = X.rows();
  const Eigen::Index P = moments.num_points();
  const double s = std::sqrt(1.0 / static_cast<double>(P));
  Matrix out(N, 2 * P);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Vector x = X.row(n).transpose();
    for (Eigen::Index l = 0; l < P; ++l) {
      const double damp = clamped_exp(-0.5 * x.dot(moments.covs[static_cast<std::size_t>(l)] * x));
      const double u = moments.means.row(l).dot(x);
      out(n, 2 * l) = s * damp * std::sin(u);
      out(n, 2 * l + 1) = s * damp * std::cos(u);
    }
  }
  return out;
}

Matrix expected_feature_gram(const Matrix& X, const SpectralMoments& moments) {
  const Matrix E = expected_feature_map(X, moments);
  const Eigen::Index P = moments.num_points();
  const double scale2 = 1.0 / static_cast<double>(P);  // 2/L
  Matrix G = E.transpose() * E;

  // Replace the 2x2 block of each spectral point: the factorised product is
  // wrong there because both features share the same w_l.
  for (Eigen::Index l = 0; l < P; ++l) {
    const Matrix& V = moments.covs[static_cast<std::size_t>(l)];
    double ss = 0.0, cc = 0.0, sc = 0.0;
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      const Vector x = X.row(n).transpose();
      const double damp2 = clamped_exp(-2.0 * x.dot(V * x));
      const double u2 = 2.0 * moments.means.row(l).dot(x);
      ss += 0.5 - 0.5 * damp2 * std::cos(u2);
      cc += 0.5 + 0.5 * damp2 * std::cos(u2);
      sc += 0.5 * damp2 * std::sin(u2);
    }
    G(2 * l, 2 * l) = scale2 * ss;
    G(2 * l + 1, 2 * l + 1) = scale2 * cc;
    G(2 * l, 2 * l + 1) = scale2 * sc;
    G(2 * l + 1, 2 * l) = scale2 * sc;
  }
  return G;
}

Matrix expected_kernel(const Matrix& X, const SpectralMoments& moments) {
  validate(moments);
  require_shape(X.cols() == moments.input_dim(), "expected_kernel: dimension mismatch");
  return kernels::omp::expected_kernel(X, moments.means, moments.covs);
}

FeatureGradient feature_map_backward(const Matrix& X, const SpectralPoints& points,
                                     const Matrix& dphi) {
  require_shape(dphi.rows() == X.rows() && dphi.cols() == points.num_features(),
                "feature_map_backward: gradient shape mismatch");
  const Matrix g = kernels::omp::feature_angle_grad(X, points.freqs, dphi);
  return FeatureGradient{g * points.freqs, g.transpose() * X};
}

}  // namespace srflvm
