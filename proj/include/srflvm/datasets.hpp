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

// Synthetic data, file loaders and missing-data masks.

#ifndef SRFLVM_DATASETS_HPP
#define SRFLVM_DATASETS_HPP

#include "srflvm/common.hpp"
#include "srflvm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace srflvm {

/// Latent layouts. scurve: points along the planar S, labelled by half
/// (t < 0 -> 0, t >= 0 -> 1). two_clusters: two isotropic Gaussian blobs
/// centred at (-2, 0) and (2, 0) with standard deviation 0.5, labelled by blob.
enum class LatentLayout { scurve, two_clusters };

std::string to_string(LatentLayout layout);
LatentLayout layout_from_string(const std::string& name);

struct SyntheticSpec {
  Eigen::Index N = 500;
  Eigen::Index M = 100;
  double rbf_scale = 0.5;       // l_o
  double rbf_length = 1.0;      // l_l
  double periodic_scale = 0.5;  // l_o
  double periodic_length = 1.0; // l_l
  double period = 4.5;          // p
  double noise_std = 0.1;       // Gaussian family
  std::uint64_t seed = 0;
  LikelihoodSpec likelihood;    // dispersion = r for negative binomial data
  LatentLayout layout = LatentLayout::scurve;
};

/// Throws ValidationError naming the offending field.
void validate(const SyntheticSpec& spec);

/// l_o exp(-|x - x'|^2 / (2 l_l^2)).
double k_rbf(const RowVector& x, const RowVector& y, const SyntheticSpec& spec);
/// l_o exp(-2 sin^2(|x - x'| / p) / l_l^2).
double k_periodic(const RowVector& x, const RowVector& y, const SyntheticSpec& spec);
double k_hybrid(const RowVector& x, const RowVector& y, const SyntheticSpec& spec);
Matrix hybrid_kernel(const Matrix& X, const SyntheticSpec& spec);

struct SyntheticData {
  Matrix X_true;            // N x 2, standardised per coordinate
  Matrix Y;                 // N x M
  Matrix K_true;            // N x N
  std::vector<int> labels;  // per layout, see LatentLayout
};

/// Column m of the latent GP draw uses the substream derive_seed(seed, 1, m).
/// Gaussian: Y = F + noise. Bernoulli: y ~ Bern(sigmoid(f)). Negative binomial:
/// y ~ NB(r, sigmoid(f)), drawn as Poisson(Gamma(r, exp(f))).
SyntheticData generate_scurve(const SyntheticSpec& spec);

/// Parses comma-separated numeric text. Cells reading "nan" mark missing
/// entries (mask false). `source` names the input in error messages.
ObservationSet parse_csv(const std::string& text, const std::string& source);
ObservationSet load_csv(const std::string& path);

/// One integer label per line.
std::vector<int> load_labels(const std::string& path);

struct IdxData {
  ObservationSet obs;       // one image per row, pixels / 255
  std::vector<int> labels;
};

/// Big-endian IDX image (magic 0x00000803) and label (0x00000801) files.
IdxData load_idx(const std::string& images_path, const std::string& labels_path);
IdxData parse_idx(const std::string& images, const std::string& labels);

struct MissingMaskSpec {
  double fraction = 0.0;
  std::uint64_t seed = 0;
};

/// Hides floor(fraction * rows * cols) entries chosen uniformly without
/// replacement; an entry is skipped if hiding it would empty its column.
Mask make_mask(Eigen::Index rows, Eigen::Index cols, const MissingMaskSpec& spec);

}  // namespace srflvm

#endif  // SRFLVM_DATASETS_HPP
