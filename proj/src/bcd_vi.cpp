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

#include "srflvm/bcd_vi.hpp"

#include "srflvm/gaussian_block.hpp"
#include "srflvm/kernels.hpp"
#include "srflvm/logistic_block.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>

namespace srflvm {

namespace {

constexpr std::uint64_t kOmegaStream = 0x5047;  // substreams of the PG draws

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ValidationError("config: " + field + " " + rule);
}

// Lower-triangular entries of a square matrix, column by column.
void push_lower(const Matrix& A, std::vector<double>& out) {
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = j; i < A.rows(); ++i) out.push_back(A(i, j));
}

void pull_lower(const Vector& x, Eigen::Index& pos, Matrix& A) {
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = j; i < A.rows(); ++i) A(i, j) = x(pos++);
}

void push_all(const Matrix& A, std::vector<double>& out) {
  out.insert(out.end(), A.data(), A.data() + A.size());
}

void pull_all(const Vector& x, Eigen::Index& pos, Matrix& A) {
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = x(pos++);
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(ResampleMode mode) {
  return mode == ResampleMode::per_step ? "per_step" : "per_outer";
}

ResampleMode resample_mode_from_string(const std::string& name) {
  if (name == "per_step") return ResampleMode::per_step;
  if (name == "per_outer") return ResampleMode::per_outer;
  throw ValidationError("config: resample_mode must be per_step or per_outer, got '" + name + "'");
}

std::string to_string(CovarianceMode mode) {
  return mode == CovarianceMode::diagonal ? "diagonal" : "full";
}

CovarianceMode covariance_mode_from_string(const std::string& name) {
  if (name == "diagonal") return CovarianceMode::diagonal;
  if (name == "full") return CovarianceMode::full;
  throw ValidationError("config: covariance must be diagonal or full, got '" + name + "'");
}

void validate(const FitConfig& c) {
  require(c.Q >= 1, "Q", "must be >= 1");
  require(c.L >= 2 && c.L % 2 == 0, "L", "must be a positive even number");
  require(c.K >= 1, "K", "must be >= 1");
  require(c.mc_samples >= 1, "mc_samples", "must be >= 1");
  require(c.outer_iters >= 1, "outer_iters", "must be >= 1");
  require(c.likelihood_block_steps >= 1, "likelihood_block_steps", "must be >= 1");
  require(c.z_block_steps >= 1, "z_block_steps", "must be >= 1");
  require(c.learning_rate > 0.0, "learning_rate", "must be positive");
  require(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  require(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  require(c.adam_eps > 0.0, "adam_eps", "must be positive");
  require(c.convergence_tol > 0.0, "convergence_tol", "must be positive");
  require(c.convergence_window >= 1, "convergence_window", "must be >= 1");
  require(!c.fix_spectral || c.K == 1, "fix_spectral", "requires K = 1");
  require(c.init_noise_variance >= 1e-8 && c.init_noise_variance <= 1e8, "noise_variance",
          "must lie in [1e-8, 1e8]");
  require(c.init_latent_std >= 1e-6 && c.init_latent_std <= 1e6, "latent_std",
          "must lie in [1e-6, 1e6]");
  require(c.alpha0 > 0.0, "alpha0", "must be positive");
  require(c.beta0 > 0.0, "beta0", "must be positive");
  require(c.likelihood.dispersion >= 1e-3 && c.likelihood.dispersion <= 1e3, "dispersion",
          "must lie in [1e-3, 1e3]");
}

void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  require_shape(grads.size() == params.size(), "adam_step: gradient/parameter size mismatch");
  if (state.m.size() == 0) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  require_shape(state.m.size() == params.size() && state.v.size() == params.size(),
                "adam_step: moment/parameter size mismatch");
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseAbs2();
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  params.array() += lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

Standardization Standardization::fit(const ObservationSet& obs) {
  Standardization s;
  s.enabled = true;
  s.mean = Vector::Zero(obs.cols());
  s.scale = Vector::Ones(obs.cols());
  for (Eigen::Index m = 0; m < obs.cols(); ++m) {
    double sum = 0.0, cnt = 0.0;
    for (Eigen::Index n = 0; n < obs.rows(); ++n)
      if (obs.mask(n, m)) {
        sum += obs.Y(n, m);
        cnt += 1.0;
      }
    const double mean = sum / cnt;
    double ss = 0.0;
    for (Eigen::Index n = 0; n < obs.rows(); ++n)
      if (obs.mask(n, m)) ss += (obs.Y(n, m) - mean) * (obs.Y(n, m) - mean);
    const double sd = std::sqrt(ss / cnt);
    s.mean(m) = mean;
    s.scale(m) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Standardization Standardization::identity(Eigen::Index columns) {
  return Standardization{false, Vector::Zero(columns), Vector::Ones(columns)};
}

Matrix Standardization::apply(const Matrix& Y) const {
  if (!enabled) return Y;
  return (Y.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Matrix Standardization::invert(const Matrix& Z) const {
  if (!enabled) return Z;
  return (Z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
}

std::vector<BlockDescriptor> partition_check(const FitConfig& config) {
  validate(config);
  const bool logistic = is_logistic(config.likelihood.family);
  BlockDescriptor lik{"likelihood", {"X.means", "X.covariance"}, "RGVI", {}};
  if (!config.fix_spectral) {
    lik.variables.push_back("W.component_means");
    lik.variables.push_back("W.component_covariances");
  }
  if (config.likelihood.family == Family::gaussian) lik.variables.push_back("noise_variance");
  if (config.likelihood.family == Family::negbinomial) lik.variables.push_back("dispersion");
  if (logistic) lik.sampled = {"H", "Omega"};
  return {lik,
          BlockDescriptor{"z", {"phi.logits"}, "RGVI", {}},
          BlockDescriptor{"v", {"v.a", "v.b"}, "MFVI", {}},
          BlockDescriptor{"alpha", {"alpha.shape", "alpha.rate"}, "MFVI", {}}};
}

std::uint64_t config_hash(const FitConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.Q << ',' << c.L << ',' << c.K << ',' << to_string(c.likelihood.family) << ','
     << c.likelihood.dispersion << ',' << c.mc_samples << ',' << c.likelihood_block_steps << ','
     << c.z_block_steps << ',' << c.learning_rate << ',' << c.adam_beta1 << ',' << c.adam_beta2
     << ',' << c.adam_eps << ',' << c.seed << ',' << to_string(c.resample_mode) << ','
     << to_string(c.covariance) << ',' << c.standardize << ',' << c.fix_spectral << ','
     << c.init_noise_variance << ',' << c.init_latent_std << ',' << c.alpha0 << ',' << c.beta0;
  return fnv1a(os.str());
}

Fitter::Fitter(const ObservationSet& data, const FitConfig& config)
    : config_(config), data_(data), rng_(config.seed) {
  validate(config_);
  validate(data);
  const Family family = config_.likelihood.family;
  const Eigen::Index M = data.cols();
  if (is_logistic(family))
    likelihood_params(family, data, Vector::Constant(M, config_.likelihood.dispersion));

  standardization_ = family == Family::gaussian && config_.standardize
                         ? Standardization::fit(data)
                         : Standardization::identity(M);
  data_.Y = standardization_.apply(data.Y);
  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index n = 0; n < data_.rows(); ++n)
      if (!data_.mask(n, m)) data_.Y(n, m) = 0.0;

  const Matrix mu = pca_init(data_.Y, data_.mask, config_.Q);
  state_.latent = config_.covariance == CovarianceMode::diagonal
                      ? LatentState::diagonal(mu, config_.init_latent_std)
                      : LatentState::full(mu, config_.init_latent_std);
  const Eigen::Index P = config_.L / 2;
  state_.mixture.comps.means = config_.fix_spectral ? Matrix::Zero(config_.K, config_.Q)
                                                    : standard_normal(config_.K, config_.Q, rng_);
  state_.mixture.comps.chol.assign(static_cast<std::size_t>(config_.K),
                                   Matrix::Identity(config_.Q, config_.Q));
  state_.mixture.assign = Assignments::uniform(P, config_.K);
  state_.mixture.stick = StickState::prior(config_.K, config_.alpha0, config_.beta0);
  state_.lik.log_noise_var = std::log(config_.init_noise_variance);
  state_.lik.log_dispersion = Vector::Constant(M, std::log(config_.likelihood.dispersion));
  clamp(state_.lik);

  if (is_logistic(family)) {
    const LogisticParams p = likelihood_params(family, data_, state_.lik.dispersion());
    const Matrix zero = Matrix::Zero(data_.rows(), M);
    for (int i = 0; i < config_.mc_samples; ++i)
      omega_.push_back(kernels::omp::pg_matrix(
          p.b, zero, derive_seed(config_.seed, kOmegaStream, static_cast<std::uint64_t>(i)), 0));
    pg_sweep_ = 1;
  }
  report_.standardized = standardization_.enabled;
}

NoiseDraws Fitter::noise_for_step() {
  if (config_.resample_mode == ResampleMode::per_outer) return frozen_;
  return draw_noise(state_, config_.mc_samples, config_.likelihood.family, data_.cols(), rng_);
}

void Fitter::refresh_omega(const std::vector<Matrix>& psi) {
  const LogisticParams p =
      likelihood_params(config_.likelihood.family, data_, state_.lik.dispersion());
  for (std::size_t i = 0; i < omega_.size(); ++i)
    omega_[i] = kernels::omp::pg_matrix(p.b, psi[i], derive_seed(config_.seed, kOmegaStream, i),
                                        pg_sweep_);
  ++pg_sweep_;
}

ElboResult Fitter::evaluate(const NoiseDraws& noise, bool refresh) {
  const Family family = config_.likelihood.family;
  if (family == Family::gaussian) return gaussian_elbo_grad(data_, state_, noise);
  auto ev = logistic_evaluate(data_, family, state_, noise, omega_, true);
  if (refresh) refresh_omega(ev.psi);
  return std::move(ev.result);
}

Vector Fitter::pack_likelihood() const {
  std::vector<double> x;
  push_all(state_.latent.means, x);
  if (state_.latent.mode == CovarianceMode::diagonal)
    push_all(state_.latent.log_std, x);
  else
    for (const auto& R : state_.latent.chol) push_lower(R, x);
  if (!config_.fix_spectral) {
    push_all(state_.mixture.comps.means, x);
    for (const auto& L : state_.mixture.comps.chol) push_lower(L, x);
  }
  if (config_.likelihood.family == Family::gaussian) x.push_back(state_.lik.log_noise_var);
  if (config_.likelihood.family == Family::negbinomial)
    x.insert(x.end(), state_.lik.log_dispersion.data(),
             state_.lik.log_dispersion.data() + state_.lik.log_dispersion.size());
  return to_vector(x);
}

void Fitter::unpack_likelihood(const Vector& x) {
  Eigen::Index pos = 0;
  pull_all(x, pos, state_.latent.means);
  if (state_.latent.mode == CovarianceMode::diagonal)
    pull_all(x, pos, state_.latent.log_std);
  else
    for (auto& R : state_.latent.chol) pull_lower(x, pos, R);
  if (!config_.fix_spectral) {
    pull_all(x, pos, state_.mixture.comps.means);
    for (auto& L : state_.mixture.comps.chol) pull_lower(x, pos, L);
  }
  if (config_.likelihood.family == Family::gaussian) state_.lik.log_noise_var = x(pos++);
  if (config_.likelihood.family == Family::negbinomial)
    for (Eigen::Index m = 0; m < state_.lik.log_dispersion.size(); ++m)
      state_.lik.log_dispersion(m) = x(pos++);
  clamp(state_.latent);
  clamp_components(state_.mixture.comps);
  clamp(state_.lik);
}

Vector Fitter::pack_likelihood_grad(const ElboGradient& g) const {
  std::vector<double> x;
  push_all(g.latent.means, x);
  if (state_.latent.mode == CovarianceMode::diagonal)
    push_all(g.latent.log_std, x);
  else
    for (const auto& R : g.latent.chol) push_lower(R, x);
  if (!config_.fix_spectral) {
    push_all(g.comp_means, x);
    for (const auto& L : g.comp_chol) push_lower(L, x);
  }
  if (config_.likelihood.family == Family::gaussian) x.push_back(g.log_noise_var);
  if (config_.likelihood.family == Family::negbinomial)
    x.insert(x.end(), g.log_dispersion.data(), g.log_dispersion.data() + g.log_dispersion.size());
  return to_vector(x);
}

double Fitter::likelihood_block() {
  double sum = 0.0;
  for (int t = 0; t < config_.likelihood_block_steps; ++t) {
    const NoiseDraws noise = noise_for_step();
    const ElboResult res = evaluate(noise, true);
    const Vector g = pack_likelihood_grad(res.grad);
    if (!std::isfinite(res.terms.value()) || !g.allFinite())
      throw NumericError("non-finite ELBO or gradient at outer iteration " +
                         std::to_string(report_.iterations + 1));
    sum += res.terms.value();
    Vector x = pack_likelihood();
    adam_step(x, g, lik_adam_, config_.learning_rate,
              config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
    unpack_likelihood(x);
  }
  return sum / static_cast<double>(config_.likelihood_block_steps);
}

void Fitter::z_block() {
  if (config_.K == 1) return;  // phi is one-hot
  Matrix& logits = state_.mixture.assign.logits;
  for (int t = 0; t < config_.z_block_steps; ++t) {
    const NoiseDraws noise = noise_for_step();
    const ElboResult res = evaluate(noise, true);
    const Matrix g =
        res.grad.logits - assignment_kl_grad(state_.mixture.assign, state_.mixture.stick);
    if (!g.allFinite()) throw NumericError("non-finite assignment gradient");
    Vector x = Eigen::Map<const Vector>(logits.data(), logits.size());
    adam_step(x, Eigen::Map<const Vector>(g.data(), g.size()), z_adam_, config_.learning_rate,
              config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
    logits = Eigen::Map<const Matrix>(x.data(), logits.rows(), logits.cols());
  }
}

void Fitter::v_update() {
  StickState& stick = state_.mixture.stick;
  const Matrix phi = state_.mixture.assign.probs();
  const double before = config_.debug_checks ? stick_objective(phi, stick) : 0.0;
  const BetaParams v = update_v(phi, stick.expected_alpha());
  stick.a_v = v.a;
  stick.b_v = v.b;
  if (config_.debug_checks) {
    const double after = stick_objective(phi, stick);
    if (after < before - 1e-10 * std::max(1.0, std::abs(before)))
      throw NumericError("v update decreased its local objective");
  }
}

void Fitter::alpha_update() {
  StickState& stick = state_.mixture.stick;
  const double before = config_.debug_checks ? concentration_objective(stick) : 0.0;
  const GammaParams g = update_alpha(stick);
  stick.a_alpha = g.shape;
  stick.b_alpha = g.rate;
  if (config_.debug_checks) {
    const double after = concentration_objective(stick);
    if (after < before - 1e-10 * std::max(1.0, std::abs(before)))
      throw NumericError("alpha update decreased its local objective");
  }
}

double Fitter::dp_terms() const {
  return dp_elbo_terms(state_.mixture.assign.probs(), state_.mixture.stick);
}

bool Fitter::outer_iteration() {
  if (config_.resample_mode == ResampleMode::per_outer)
    frozen_ = draw_noise(state_, config_.mc_samples, config_.likelihood.family, data_.cols(), rng_);
  const double dp = dp_terms();
  const double lik = likelihood_block();
  z_block();
  v_update();
  alpha_update();
  report_.elbo_trace.push_back(lik + dp);
  ++report_.iterations;

  const auto& tr = report_.elbo_trace;
  const auto w = static_cast<std::size_t>(config_.convergence_window);
  if (tr.size() < 2 * w) return false;
  double now = 0.0, then = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    now += tr[tr.size() - 1 - i];
    then += tr[tr.size() - 1 - w - i];
  }
  now /= static_cast<double>(w);
  then /= static_cast<double>(w);
  return std::abs(now - then) / std::max(std::abs(then), 1e-12) < config_.convergence_tol;
}

void Fitter::finish_report() {
  report_.expected_alpha = state_.mixture.stick.expected_alpha();
  report_.occupancy = state_.mixture.assign.probs().colwise().sum().transpose();
  report_.noise_variance = state_.lik.noise_var();
  report_.dispersion = state_.lik.dispersion();
}

FitResult Fitter::run(const Progress& progress, int checkpoint_every, const CheckpointSink& sink) {
  const auto start = std::chrono::steady_clock::now();
  const double base = report_.wall_time_seconds;
  try {
    while (report_.iterations < config_.outer_iters) {
      const bool conv = outer_iteration();
      report_.converged = conv;
      report_.wall_time_seconds =
          base + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (progress) progress(report_.iterations, report_.elbo_trace.back(), report_.wall_time_seconds);
      if (sink && checkpoint_every > 0 && report_.iterations % checkpoint_every == 0) {
        finish_report();
        sink(checkpoint());
      }
      if (conv && config_.stop_on_convergence) break;
    }
  } catch (const NumericError& e) {
    report_.aborted = true;
    report_.message = e.what();
  }
  report_.wall_time_seconds =
      base + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  finish_report();
  return FitResult{state_, report_, standardization_};
}

FitCheckpoint Fitter::checkpoint() const {
  std::ostringstream os;
  os << rng_;
  return FitCheckpoint{state_,  lik_adam_, z_adam_,          omega_,
                       report_, os.str(),  pg_sweep_,        config_hash(config_)};
}

void Fitter::restore(const FitCheckpoint& ck) {
  if (ck.config_hash != config_hash(config_))
    throw ValidationError("checkpoint was written with a different configuration");
  const ModelState& s = ck.state;
  const bool shapes_ok =
      s.latent.means.rows() == state_.latent.means.rows() &&
      s.latent.means.cols() == state_.latent.means.cols() && s.latent.mode == state_.latent.mode &&
      s.mixture.assign.logits.rows() == state_.mixture.assign.logits.rows() &&
      s.mixture.assign.logits.cols() == state_.mixture.assign.logits.cols() &&
      s.lik.log_dispersion.size() == state_.lik.log_dispersion.size() &&
      ck.omega.size() == omega_.size();
  if (!shapes_ok) throw ValidationError("checkpoint shapes do not match the data and config");
  state_ = ck.state;
  lik_adam_ = ck.likelihood_adam;
  z_adam_ = ck.z_adam;
  omega_ = ck.omega;
  report_ = ck.report;
  pg_sweep_ = ck.pg_sweep;
  std::istringstream is(ck.rng_state);
  is >> rng_;
  if (!is) throw ParseError("checkpoint: malformed RNG state");
}

FitResult fit(const ObservationSet& data, const FitConfig& config) {
  Fitter fitter(data, config);
  return fitter.run();
}

}  // namespace srflvm
