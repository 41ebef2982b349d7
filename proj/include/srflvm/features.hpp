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

#ifndef SRFLVM_FEATURES_HPP
#define SRFLVM_FEATURES_HPP

#include "srflvm/common.hpp"

#include <vector>

namespace srflvm {

/// Spectral frequencies, one row per frequency: (L/2) x Q.
struct SpectralPoints {
  Matrix freqs;

  Eigen::Index num_points() const { return freqs.rows(); }
  Eigen::Index num_features() const { return 2 * freqs.rows(); }
  Eigen::Index input_dim() const { return freqs.cols(); }
};

/// Random Fourier feature design matrix, N x L.
///
/// Column layout: for spectral point l (0-based), column 2l holds
/// sqrt(2/L) sin(w_l^T x) and column 2l+1 holds sqrt(2/L) cos(w_l^T x).
/// Every row has unit squared norm.
struct FeatureMatrix {
  Matrix phi;

  Eigen::Index rows() const { return phi.rows(); }
  Eigen::Index num_features() const { return phi.cols(); }
  double scale() const { return std::sqrt(2.0 / static_cast<double>(phi.cols())); }
};

/// Gaussian moments of each spectral point under q(W): w_l ~ N(means.row(l), covs[l]).
struct SpectralMoments {
  Matrix means;               // (L/2) x Q
  std::vector<Matrix> covs;   // L/2 entries, each Q x Q

  Eigen::Index num_points() const { return means.rows(); }
  Eigen::Index input_dim() const { return means.cols(); }
};

/// Validates L/2 >= 1, Q >= 1 and finiteness.
void validate(const SpectralPoints& points);
/// Validates shapes, symmetry and eigenvalues >= -1e-10 of every covariance.
void validate(const SpectralMoments& moments);

FeatureMatrix feature_map(const Matrix& X, const SpectralPoints& points);

/// Unbiased Gram estimate Phi Phi^T.
Matrix kernel_estimate(const FeatureMatrix& features);

/// E[Phi] under independent Gaussian spectral points (characteristic function
/// of the Gaussian): exp(-x^T V x / 2) (sin, cos)(m^T x), scaled by sqrt(2/L).
Matrix expected_feature_map(const Matrix& X, const SpectralMoments& moments);

/// E[Phi^T Phi] (L x L). Entries coupling distinct spectral points factor by
/// independence; the 2x2 blocks of one spectral point use the double-angle
/// forms E[sin^2], E[cos^2] and E[sin cos] = exp(-2 x^T V x) sin(2 m^T x) / 2.
Matrix expected_feature_gram(const Matrix& X, const SpectralMoments& moments);

/// E[Phi Phi^T] (N x N): (2/L) sum_l exp(-d^T V_l d / 2) cos(m_l^T d), d = x_n - x_n'.
Matrix expected_kernel(const Matrix& X, const SpectralMoments& moments);

/// Backward pass of feature_map: given dF/dPhi, returns dF/dX and dF/dW.
struct FeatureGradient {
  Matrix dX;  // N x Q
  Matrix dW;  // (L/2) x Q
};
FeatureGradient feature_map_backward(const Matrix& X, const SpectralPoints& points,
                                     const Matrix& dphi);

/// exp() with the argument clamped at -745 so the result never underflows
/// to an exact zero that later produces log(0).
inline double clamped_exp(double x) { return std::exp(x < -745.0 ? -745.0 : x); }

}  // namespace srflvm

#endif  // SRFLVM_FEATURES_HPP
