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

#include "srflvm/datasets.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace srflvm {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ValidationError("synthetic spec: " + field + " must be positive, got " +
                          std::to_string(v));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint32_t read_be32(const std::string& buf, std::size_t pos) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + 3]));
}

}  // namespace

std::string to_string(LatentLayout layout) {
  return layout == LatentLayout::scurve ? "scurve" : "two_clusters";
}

LatentLayout layout_from_string(const std::string& name) {
  if (name == "scurve") return LatentLayout::scurve;
  if (name == "two_clusters") return LatentLayout::two_clusters;
  throw ValidationError("synthetic spec: layout must be scurve or two_clusters, got '" + name + "'");
}

void validate(const SyntheticSpec& spec) {
  if (spec.N < 2) throw ValidationError("synthetic spec: N must be >= 2");
  if (spec.M < 1) throw ValidationError("synthetic spec: M must be >= 1");
  require_positive(spec.rbf_scale, "rbf_scale");
  require_positive(spec.rbf_length, "rbf_length");
  require_positive(spec.periodic_scale, "periodic_scale");
  require_positive(spec.periodic_length, "periodic_length");
  require_positive(spec.period, "period");
  if (!(spec.noise_std >= 0.0)) throw ValidationError("synthetic spec: noise_std must be >= 0");
  if (spec.likelihood.family == Family::negbinomial) require_positive(spec.likelihood.dispersion, "dispersion");
}

double k_rbf(const RowVector& x, const RowVector& y, const SyntheticSpec& spec) {
  const double d2 = (x - y).squaredNorm();
  return spec.rbf_scale * std::exp(-d2 / (2.0 * spec.rbf_length * spec.rbf_length));
}

double k_periodic(const RowVector& x, const RowVector& y, const SyntheticSpec& spec) {
  const double s = std::sin((x - y).norm() / spec.period);
  return spec.periodic_scale *
         std::exp(-2.0 * s * s / (spec.periodic_length * spec.periodic_length));
}

double k_hybrid(const RowVector& x, const RowVector& y, const SyntheticSpec& spec) {
  return k_rbf(x, y, spec) + k_periodic(x, y, spec);
}

Matrix hybrid_kernel(const Matrix& X, const SyntheticSpec& spec) {
  const Eigen::Index N = X.rows();
  Matrix K(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = j; i < N; ++i) K(i, j) = K(j, i) = k_hybrid(X.row(i), X.row(j), spec);
  return K;
}

SyntheticData generate_scurve(const SyntheticSpec& spec) {
  validate(spec);
  const Eigen::Index N = spec.N;
  SyntheticData out;
  out.X_true.resize(N, 2);
  out.labels.resize(static_cast<std::size_t>(N));
  if (spec.layout == LatentLayout::scurve) {
    for (Eigen::Index n = 0; n < N; ++n) {
      const double t = -1.5 * kPi + 3.0 * kPi * static_cast<double>(n) / static_cast<double>(N - 1);
      const double sgn = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
      out.X_true(n, 0) = std::sin(t);
      out.X_true(n, 1) = sgn * (std::cos(t) - 1.0);
      out.labels[static_cast<std::size_t>(n)] = t < 0.0 ? 0 : 1;
    }
  } else {
    Rng rng(derive_seed(spec.seed, 0));
    std::normal_distribution<double> normal(0.0, 0.5);
    for (Eigen::Index n = 0; n < N; ++n) {
      const int label = n < N / 2 ? 0 : 1;
      out.X_true(n, 0) = (label == 0 ? -2.0 : 2.0) + normal(rng);
      out.X_true(n, 1) = normal(rng);
      out.labels[static_cast<std::size_t>(n)] = label;
    }
  }
  for (Eigen::Index q = 0; q < 2; ++q) {
    auto col = out.X_true.col(q);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(N));
    if (sd > 0.0) col /= sd;
  }

  out.K_true = hybrid_kernel(out.X_true, spec);
  // Symmetric square root with clipped eigenvalues: stable for the
  // numerically rank-deficient kernels of smooth latent curves.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.K_true);
  if (eig.info() != Eigen::Success) throw NumericError("generate_scurve: eigensolver failed");
  const Matrix root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  out.Y.resize(N, spec.M);
  for (Eigen::Index m = 0; m < spec.M; ++m) {
    Rng rng(derive_seed(spec.seed, 1, static_cast<std::uint64_t>(m)));
    const Vector f = root * standard_normal(N, 1, rng).col(0);
    for (Eigen::Index n = 0; n < N; ++n) {
      switch (spec.likelihood.family) {
        case Family::gaussian: {
          std::normal_distribution<double> noise(0.0, 1.0);
          out.Y(n, m) = f(n) + spec.noise_std * noise(rng);
          break;
        }
        case Family::bernoulli: {
          std::bernoulli_distribution coin(sigmoid(f(n)));
          out.Y(n, m) = coin(rng) ? 1.0 : 0.0;
          break;
        }
        case Family::negbinomial: {
          std::gamma_distribution<double> gamma(spec.likelihood.dispersion, std::exp(f(n)));
          std::poisson_distribution<long long> poisson(gamma(rng));
          out.Y(n, m) = static_cast<double>(poisson(rng));
          break;
        }
      }
    }
  }
  return out;
}

ObservationSet parse_csv(const std::string& text, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    std::size_t col = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string cell =
          trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      ++col;
      double v = 0.0;
      if (cell == "nan" || cell == "NaN") {
        v = std::nan("");
      } else {
        const char* b = cell.data();
        const char* e = b + cell.size();
        const auto r = std::from_chars(b, e, v);
        if (cell.empty() || r.ec != std::errc() || r.ptr != e)
          throw ParseError(source + ": non-numeric cell '" + cell + "' at row " +
                           std::to_string(line_no) + ", column " + std::to_string(col));
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(source + ": row " + std::to_string(line_no) + " has " +
                       std::to_string(row.size()) + " columns, expected " +
                       std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(source + ": empty file");

  const auto N = static_cast<Eigen::Index>(rows.size());
  const auto M = static_cast<Eigen::Index>(rows.front().size());
  ObservationSet obs{Matrix(N, M), Mask(N, M)};
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index m = 0; m < M; ++m) {
      const double v = rows[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)];
      obs.Y(n, m) = v;
      obs.mask(n, m) = !std::isnan(v);
    }
  return obs;
}

ObservationSet load_csv(const std::string& path) { return parse_csv(read_file(path), path); }

std::vector<int> load_labels(const std::string& path) {
  const ObservationSet obs = load_csv(path);
  if (obs.cols() != 1) throw ParseError(path + ": labels must have one column");
  std::vector<int> out;
  for (Eigen::Index n = 0; n < obs.rows(); ++n) {
    const double v = obs.Y(n, 0);
    if (!obs.mask(n, 0) || v != std::floor(v) || std::abs(v) > 1e9)
      throw ParseError(path + ": label at row " + std::to_string(n + 1) + " is not an integer");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

IdxData parse_idx(const std::string& images, const std::string& labels) {
  if (images.size() < 16 || read_be32(images, 0) != 0x00000803u)
    throw ParseError("idx images: bad magic number (expected 0x00000803)");
  if (labels.size() < 8 || read_be32(labels, 0) != 0x00000801u)
    throw ParseError("idx labels: bad magic number (expected 0x00000801)");
  const std::size_t count = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t pixels = rows * cols;
  if (images.size() != 16 + count * pixels)
    throw ParseError("idx images: file length does not match header");
  const std::size_t label_count = read_be32(labels, 4);
  if (label_count != count)
    throw ParseError("idx: " + std::to_string(count) + " images but " +
                     std::to_string(label_count) + " labels");
  if (labels.size() != 8 + label_count) throw ParseError("idx labels: file length does not match header");

  IdxData out;
  out.obs.Y.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t p = 0; p < pixels; ++p)
      out.obs.Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          static_cast<double>(static_cast<unsigned char>(images[16 + i * pixels + p])) / 255.0;
  out.obs.mask = Mask::Constant(out.obs.Y.rows(), out.obs.Y.cols(), true);
  for (std::size_t i = 0; i < count; ++i)
    out.labels.push_back(static_cast<unsigned char>(labels[8 + i]));
  return out;
}

IdxData load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path));
}

Mask make_mask(Eigen::Index rows, Eigen::Index cols, const MissingMaskSpec& spec) {
  if (!(spec.fraction >= 0.0 && spec.fraction < 1.0))
    throw ValidationError("mask: fraction must lie in [0, 1)");
  if (rows < 1 || cols < 1) throw ValidationError("mask: shape must be non-empty");
  const auto total = rows * cols;
  const auto hide = static_cast<Eigen::Index>(std::floor(spec.fraction * static_cast<double>(total)));
  if (hide > total - cols)
    throw ValidationError("mask: cannot hide " + std::to_string(hide) +
                          " entries and keep one observed entry per column");
  Mask mask = Mask::Constant(rows, cols, true);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Eigen::Index> left(static_cast<std::size_t>(cols), rows);
  Eigen::Index hidden = 0;
  for (const Eigen::Index idx : order) {
    if (hidden == hide) break;
    const Eigen::Index m = idx / rows;
    const Eigen::Index n = idx % rows;
    if (left[static_cast<std::size_t>(m)] == 1) continue;
    mask(n, m) = false;
    --left[static_cast<std::size_t>(m)];
    ++hidden;
  }
  return mask;
}

}  // namespace srflvm
