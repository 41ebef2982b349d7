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

// Block-coordinate variational inference. Each outer iteration runs
//   1. the likelihood block: Adam on q(X), the mixture components and the
//      likelihood hyperparameters (with fresh weight / PG draws per step for
//      logistic families),
//   2. the z block: Adam on the assignment logits,
//   3. the closed-form q(v) update, then the closed-form q(alpha) update.

#ifndef SRFLVM_BCD_VI_HPP
#define SRFLVM_BCD_VI_HPP

#include "srflvm/common.hpp"
#include "srflvm/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace srflvm {

enum class ResampleMode { per_step, per_outer };

std::string to_string(ResampleMode mode);
ResampleMode resample_mode_from_string(const std::string& name);
std::string to_string(CovarianceMode mode);
CovarianceMode covariance_mode_from_string(const std::string& name);

struct FitConfig {
  Eigen::Index Q = 2;
  Eigen::Index L = 100;
  Eigen::Index K = 20;
  LikelihoodSpec likelihood;
  int mc_samples = 5;
  int outer_iters = 200;
  int likelihood_block_steps = 50;
  int z_block_steps = 20;
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double convergence_tol = 1e-4;
  int convergence_window = 10;
  ResampleMode resample_mode = ResampleMode::per_step;

  CovarianceMode covariance = CovarianceMode::diagonal;
  bool standardize = true;      // Gaussian family only
  bool stop_on_convergence = true;
  /// Single fixed spectral component N(0, I): the RBF kernel with unit
  /// length-scale. Requires K = 1; only X and the likelihood hyperparameters
  /// are learned.
  bool fix_spectral = false;
  bool debug_checks = false;    // assert monotone conjugate updates
  double init_noise_variance = 0.1;
  double init_latent_std = 0.1;
  double alpha0 = 1.0;
  double beta0 = 1.0;
};

/// Throws ValidationError naming the offending field.
void validate(const FitConfig& config);

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam step in the ascent direction.
void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps);

/// Per-column standardisation of Gaussian data (observed entries only).
struct Standardization {
  bool enabled = false;
  Vector mean;
  Vector scale;

  static Standardization fit(const ObservationSet& obs);
  static Standardization identity(Eigen::Index columns);
  Matrix apply(const Matrix& Y) const;
  Matrix invert(const Matrix& Z) const;
};

struct FitReport {
  std::vector<double> elbo_trace;  // per outer iteration, mean over the likelihood-block steps
  double wall_time_seconds = 0.0;
  bool converged = false;
  int iterations = 0;
  double expected_alpha = 0.0;
  Vector occupancy;                // sum_l phi_lk
  double noise_variance = 0.0;     // Gaussian family
  Vector dispersion;               // negative binomial family
  bool standardized = false;
  bool aborted = false;
  std::string message;
};

struct FitResult {
  ModelState state;
  FitReport report;
  Standardization standardization;
};

/// Everything needed to continue a fit bit-for-bit.
struct FitCheckpoint {
  ModelState state;
  AdamState likelihood_adam;
  AdamState z_adam;
  std::vector<Matrix> omega;
  FitReport report;
  std::string rng_state;
  std::uint64_t pg_sweep = 0;
  std::uint64_t config_hash = 0;
};

struct BlockDescriptor {
  std::string name;
  std::vector<std::string> variables;
  std::string solver;                 // "RGVI" or "MFVI"
  std::vector<std::string> sampled;   // drawn from exact conditionals each step
};

/// Block partition used by fit() for this configuration.
std::vector<BlockDescriptor> partition_check(const FitConfig& config);

/// Fingerprint of the settings that shape a fit; guards checkpoint resumes.
std::uint64_t config_hash(const FitConfig& config);

class Fitter {
 public:
  Fitter(const ObservationSet& data, const FitConfig& config);

  const ModelState& state() const { return state_; }
  const FitReport& report() const { return report_; }
  const ObservationSet& data() const { return data_; }
  const Standardization& standardization() const { return standardization_; }
  int iteration() const { return report_.iterations; }

  /// T1 Adam steps; returns the mean ELBO estimate over the steps.
  double likelihood_block();
  void z_block();
  void v_update();
  void alpha_update();

  /// One outer iteration; appends to the trace and returns the convergence flag.
  bool outer_iteration();

  using Progress = std::function<void(int iteration, double elbo, double seconds)>;
  using CheckpointSink = std::function<void(const FitCheckpoint&)>;

  /// Runs until outer_iters or convergence. A NumericError stops the fit and
  /// is recorded in the report (aborted = true); other errors propagate.
  FitResult run(const Progress& progress = {}, int checkpoint_every = 0,
                const CheckpointSink& sink = {});

  FitCheckpoint checkpoint() const;
  void restore(const FitCheckpoint& ck);

 private:
  NoiseDraws noise_for_step();
  ElboResult evaluate(const NoiseDraws& noise, bool refresh_omega);
  void refresh_omega(const std::vector<Matrix>& psi);
  double dp_terms() const;
  void finish_report();

  Vector pack_likelihood() const;
  void unpack_likelihood(const Vector& x);
  Vector pack_likelihood_grad(const ElboGradient& g) const;

  FitConfig config_;
  ObservationSet data_;
  Standardization standardization_;
  ModelState state_;
  AdamState lik_adam_;
  AdamState z_adam_;
  std::vector<Matrix> omega_;
  NoiseDraws frozen_;
  FitReport report_;
  Rng rng_;
  std::uint64_t pg_sweep_ = 0;
};

FitResult fit(const ObservationSet& data, const FitConfig& config);

}  // namespace srflvm

#endif  // SRFLVM_BCD_VI_HPP
