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

#include "srflvm/dp_mixture.hpp"

#include "support.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <cmath>

using namespace srflvm;
using srflvm::testing::mean;
using srflvm::testing::stderr_of;

namespace {

StickState random_stick(Eigen::Index K, Rng& rng) {
  std::uniform_real_distribution<double> u(0.2, 5.0);
  StickState s = StickState::prior(K, u(rng), u(rng));
  for (Eigen::Index k = 0; k < K; ++k) {
    s.a_v(k) = u(rng);
    s.b_v(k) = u(rng);
  }
  s.a_alpha = u(rng);
  s.b_alpha = u(rng);
  return s;
}

Matrix random_phi(Eigen::Index P, Eigen::Index K, Rng& rng) {
  return softmax_rows(2.0 * standard_normal(P, K, rng));
}

double beta_draw(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  return x / (x + gb(rng));
}

}  // namespace

TEST_CASE("stick_log_moments closed forms") {
  StickState s = StickState::prior(1);
  auto m = stick_log_moments(s);
  CHECK(std::abs(m.log_v(0) + 1.0) < 1e-14);
  CHECK(std::abs(m.log_one_minus_v(0) + 1.0) < 1e-14);

  s.a_v(0) = 2.0;
  m = stick_log_moments(s);
  CHECK(std::abs(m.log_v(0) + 0.5) < 1e-14);
}

TEST_CASE("stick_log_moments agrees with quadrature") {
  StickState s = StickState::prior(1);
  s.a_v(0) = 3.7;
  s.b_v(0) = 0.9;
  const auto m = stick_log_moments(s);
  const boost::math::beta_distribution<double> dist(3.7, 0.9);
  using boost::math::quadrature::gauss_kronrod;
  const double elog_v = gauss_kronrod<double, 61>::integrate(
      [&](double v) { return std::log(v) * boost::math::pdf(dist, v); }, 0.0, 1.0, 15, 1e-14);
  // log(1 - v) against the (1 - v)^(-0.1) singularity: substitute u = 1 - v and
  // write the density in u directly so nothing is lost to rounding near u = 0.
  const double norm = boost::math::beta(3.7, 0.9);
  boost::math::quadrature::tanh_sinh<double> ts;
  const double elog_1mv = ts.integrate(
      [&](double u) { return std::log(u) * std::pow(1.0 - u, 2.7) * std::pow(u, -0.1) / norm; }, 0.0, 1.0);
  CHECK(std::abs(m.log_v(0) - elog_v) < 1e-8);
  CHECK(std::abs(m.log_one_minus_v(0) - elog_1mv) < 1e-8);
}

TEST_CASE("stick_log_moments rejects non-positive parameters") {
  StickState s = StickState::prior(2);
  s.b_v(1) = 0.0;
  CHECK_THROWS_AS(stick_log_moments(s), DomainError);
  s.b_v(1) = 1.0;
  s.a_alpha = -1.0;
  CHECK_THROWS_AS(stick_log_moments(s), DomainError);
}

TEST_CASE("mixture_moments") {
  MixtureComponents c;
  c.means = Matrix(2, 2);
  c.means << 0.0, 0.0, 2.0, 0.0;
  c.chol = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  Matrix phi(2, 2);
  phi << 0.5, 0.5, 0.0, 1.0;
  const SpectralMoments m = mixture_moments(phi, c);
  CHECK(std::abs(m.means(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(m.means(0, 1)) < 1e-15);
  CHECK((m.covs[0] - Matrix::Identity(2, 2)).norm() < 1e-15);
  CHECK((m.means.row(1) - c.means.row(1)).norm() < 1e-15);

  Rng rng(1);
  MixtureComponents r;
  r.means = standard_normal(4, 3, rng);
  for (int k = 0; k < 4; ++k) r.chol.push_back(Matrix(standard_normal(3, 3, rng).triangularView<Eigen::Lower>()));
  const Matrix p = random_phi(6, 4, rng);
  const SpectralMoments rm = mixture_moments(p, r);
  for (Eigen::Index l = 0; l < 6; ++l) {
    RowVector brute = RowVector::Zero(3);
    Matrix cov = Matrix::Zero(3, 3);
    for (Eigen::Index k = 0; k < 4; ++k) {
      brute += p(l, k) * r.means.row(k);
      cov += p(l, k) * r.chol[static_cast<std::size_t>(k)] * r.chol[static_cast<std::size_t>(k)].transpose();
    }
    CHECK((rm.means.row(l) - brute).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((rm.covs[static_cast<std::size_t>(l)] - cov).cwiseAbs().maxCoeff() < 1e-13);
  }
  CHECK_THROWS_AS(mixture_moments(Matrix::Ones(2, 3), c), ShapeError);
}

TEST_CASE("update_v arithmetic") {
  Matrix phi = Matrix::Zero(10, 2);
  phi.col(0).setOnes();
  BetaParams v = update_v(phi, 2.0);
  CHECK(v.a(0) == 11.0);
  CHECK(v.b(0) == 2.0);
  CHECK(v.a(1) == 1.0);
  CHECK(v.b(1) == 2.0);

  v = update_v(Matrix::Constant(4, 2, 0.5), 1.0);
  CHECK(v.a(0) == 3.0);
  CHECK(v.b(0) == 3.0);

  v = update_v(Matrix(0, 3), 1.5);
  CHECK((v.a.array() == 1.0).all());
  CHECK((v.b.array() == 1.5).all());

  CHECK_THROWS_AS(update_v(phi, 0.0), DomainError);
}

TEST_CASE("update_alpha") {
  GammaParams g = update_alpha(StickState::prior(1));
  CHECK(g.shape == 1.0);
  CHECK(std::abs(g.rate - 2.0) < 1e-14);
  StickState s = StickState::prior(1);
  s.a_alpha = g.shape;
  s.b_alpha = g.rate;
  CHECK(s.expected_alpha() == g.shape / g.rate);
  CHECK(std::abs(s.expected_alpha() - 0.5) < 1e-14);

  const GammaParams g0 = update_alpha(StickState::prior(0, 2.5, 0.7));
  CHECK(g0.shape == 2.5);
  CHECK(g0.rate == 0.7);

  Rng rng(2);
  const StickState r = random_stick(3, rng);
  double direct = r.beta0;
  for (Eigen::Index k = 0; k < 3; ++k)
    direct -= boost::math::digamma(r.b_v(k)) - boost::math::digamma(r.a_v(k) + r.b_v(k));
  const GammaParams gr = update_alpha(r);
  CHECK(gr.shape == r.alpha0);
  CHECK(std::abs(gr.rate - direct) < 1e-12);
}

TEST_CASE("assignment_kl values") {
  const StickState s = StickState::prior(1);
  CHECK(std::abs(assignment_kl(Matrix::Ones(6, 1), s) - 6.0) < 1e-13);

  // One-hot on the first component with v_1 concentrated at 1: E[log pi_1] -> 0.
  StickState sharp = StickState::prior(2);
  sharp.a_v(0) = 1e9;
  sharp.b_v(0) = 1e-3;
  Matrix phi = Matrix::Zero(3, 2);
  phi.col(0).setOnes();
  CHECK(std::abs(assignment_kl(phi, sharp)) < 1e-6);
}

TEST_CASE("assignment_kl matches Monte Carlo over q(v)") {
  Rng rng(3);
  const StickState s = random_stick(3, rng);
  const Matrix phi = random_phi(4, 3, rng);
  const double analytic = assignment_kl(phi, s);
  std::vector<double> samples;
  samples.reserve(100000);
  for (int d = 0; d < 100000; ++d) {
    Vector log_pi(3);
    double rest = 0.0;
    for (Eigen::Index k = 0; k < 3; ++k) {
      const double v = beta_draw(s.a_v(k), s.b_v(k), rng);
      log_pi(k) = std::log(v) + rest;
      rest += std::log1p(-v);
    }
    double kl = 0.0;
    for (Eigen::Index l = 0; l < 4; ++l)
      for (Eigen::Index k = 0; k < 3; ++k) kl += phi(l, k) * (std::log(phi(l, k)) - log_pi(k));
    samples.push_back(kl);
  }
  CHECK(std::abs(mean(samples) - analytic) <= 3.0 * stderr_of(samples));
}

TEST_CASE("assignment_kl_grad agrees with central differences") {
  Rng rng(4);
  const StickState s = random_stick(4, rng);
  Assignments a{standard_normal(5, 4, rng)};
  const Matrix g = assignment_kl_grad(a, s);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < a.logits.size(); ++i) {
    Assignments p = a, m = a;
    p.logits.data()[i] += h;
    m.logits.data()[i] -= h;
    const double fd = (assignment_kl(p.probs(), s) - assignment_kl(m.probs(), s)) / (2 * h);
    CHECK(srflvm::testing::relative_error(g.data()[i], fd) < 1e-6);
  }
}

TEST_CASE("softmax rows stay on the simplex") {
  Rng rng(5);
  Assignments a{50.0 * standard_normal(20, 6, rng)};
  const Matrix p = a.probs();
  CHECK((p.array() >= 0.0).all());
  for (Eigen::Index l = 0; l < p.rows(); ++l) CHECK(std::abs(p.row(l).sum() - 1.0) < 1e-10);
  const Matrix back = Assignments::from_probs(p).probs();
  CHECK((back - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_alpha moments and determinism") {
  StickState s = StickState::prior(2);
  Rng rng(6);
  std::vector<double> d;
  for (int i = 0; i < 100000; ++i) d.push_back(sample_alpha(s, rng));
  CHECK(std::abs(mean(d) - 1.0) < 0.01);
  CHECK(*std::min_element(d.begin(), d.end()) > 0.0);

  Rng r1(7), r2(7);
  CHECK(sample_alpha(s, r1) == sample_alpha(s, r2));

  s.b_alpha = 1e12;
  Rng r3(8);
  CHECK(sample_alpha(s, r3) < 1e-9);
}

TEST_CASE("update_v and update_alpha never decrease their local objectives") {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index K = 1 + rep % 6;
    StickState s = random_stick(K, rng);
    const Matrix phi = random_phi(8, K, rng);
    const double before = stick_objective(phi, s);
    const BetaParams v = update_v(phi, s.expected_alpha());
    s.a_v = v.a;
    s.b_v = v.b;
    CHECK(stick_objective(phi, s) >= before - 1e-10);

    const double abefore = concentration_objective(s);
    const GammaParams g = update_alpha(s);
    s.a_alpha = g.shape;
    s.b_alpha = g.rate;
    CHECK(concentration_objective(s) >= abefore - 1e-10);
  }
}

TEST_CASE("update_v maximises the stick objective locally") {
  // Perturbing the optimum in any direction lowers the objective.
  Rng rng(10);
  StickState s = random_stick(3, rng);
  const Matrix phi = random_phi(6, 3, rng);
  const BetaParams v = update_v(phi, s.expected_alpha());
  s.a_v = v.a;
  s.b_v = v.b;
  const double best = stick_objective(phi, s);
  for (Eigen::Index k = 0; k < 3; ++k)
    for (double d : {-0.05, 0.05}) {
      StickState p = s;
      p.a_v(k) += d;
      CHECK(stick_objective(phi, p) < best);
      p = s;
      p.b_v(k) += d;
      CHECK(stick_objective(phi, p) < best);
    }
}

TEST_CASE("dp_elbo_terms matches Monte Carlo over q(v) and q(alpha)") {
  Rng rng(11);
  const StickState s = random_stick(3, rng);
  const Matrix phi = random_phi(4, 3, rng);
  const double analytic = dp_elbo_terms(phi, s);
  const auto log_beta_pdf = [](double x, double a, double b) {
    return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1) * std::log(x) +
           (b - 1) * std::log1p(-x);
  };
  const auto log_gamma_pdf = [](double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) + (a - 1) * std::log(x) - b * x;
  };
  std::vector<double> samples;
  std::gamma_distribution<double> qa(s.a_alpha, 1.0 / s.b_alpha);
  for (int d = 0; d < 200000; ++d) {
    const double alpha = qa(rng);
    double f = log_gamma_pdf(alpha, s.alpha0, s.beta0) - log_gamma_pdf(alpha, s.a_alpha, s.b_alpha);
    Vector log_pi(3);
    double rest = 0.0;
    for (Eigen::Index k = 0; k < 3; ++k) {
      const double v = beta_draw(s.a_v(k), s.b_v(k), rng);
      f += log_beta_pdf(v, 1.0, alpha) - log_beta_pdf(v, s.a_v(k), s.b_v(k));
      log_pi(k) = std::log(v) + rest;
      rest += std::log1p(-v);
    }
    for (Eigen::Index l = 0; l < 4; ++l)
      for (Eigen::Index k = 0; k < 3; ++k) f += phi(l, k) * (log_pi(k) - std::log(phi(l, k)));
    samples.push_back(f);
  }
  CHECK(std::abs(mean(samples) - analytic) <= 3.0 * stderr_of(samples));
}

TEST_CASE("draw_spectral_points has the mixture moments") {
  Rng rng(12);
  MixtureComponents c;
  c.means = standard_normal(3, 2, rng);
  for (int k = 0; k < 3; ++k) {
    Matrix L = standard_normal(2, 2, rng).triangularView<Eigen::Lower>();
    L.diagonal() = L.diagonal().cwiseAbs().array() + 0.2;
    c.chol.push_back(L);
  }
  const Matrix phi = random_phi(1, 3, rng);
  const SpectralMoments mom = mixture_moments(phi, c);
  const std::vector<Matrix> zero(3, Matrix::Zero(1, 2));
  CHECK((draw_spectral_points(phi, c, zero).freqs - mom.means).norm() < 1e-14);

  const int draws = 200000;
  Matrix w(draws, 2);
  for (int d = 0; d < draws; ++d) {
    std::vector<Matrix> eps;
    for (int k = 0; k < 3; ++k) eps.push_back(standard_normal(1, 2, rng));
    w.row(d) = draw_spectral_points(phi, c, eps).freqs.row(0);
  }
  const RowVector m = w.colwise().mean();
  const Matrix centered = w.rowwise() - m;
  const Matrix cov = centered.transpose() * centered / (draws - 1);
  // Joint test of the mean: n (m - mu)^T V^-1 (m - mu) ~ chi^2_2; the bound
  // -2 log(0.0027) is the two-dof quantile at the 3-sigma tail probability.
  const RowVector dev = m - mom.means.row(0);
  const double d2 = draws * dev * mom.covs[0].llt().solve(dev.transpose());
  CHECK(d2 <= -2.0 * std::log(0.0027));
  for (Eigen::Index q = 0; q < 2; ++q) {
    const double se_var = mom.covs[0](q, q) * std::sqrt(2.0 / draws);
    CHECK(std::abs(cov(q, q) - mom.covs[0](q, q)) <= 3.0 * se_var);
  }
}

TEST_CASE("spectral_points_backward agrees with central differences") {
  Rng rng(13);
  MixtureComponents c;
  c.means = standard_normal(3, 2, rng);
  for (int k = 0; k < 3; ++k) {
    Matrix L = standard_normal(2, 2, rng).triangularView<Eigen::Lower>();
    L.diagonal() = L.diagonal().cwiseAbs().array() + 0.2;
    c.chol.push_back(L);
  }
  Assignments a{standard_normal(4, 3, rng)};
  std::vector<Matrix> eps;
  for (int k = 0; k < 3; ++k) eps.push_back(standard_normal(4, 2, rng));
  const Matrix C = standard_normal(4, 2, rng);
  const auto f = [&](const Assignments& aa, const MixtureComponents& cc) {
    return draw_spectral_points(aa.probs(), cc, eps).freqs.cwiseProduct(C).sum();
  };
  const SpectralGradient g = spectral_points_backward(a, c, eps, C);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < a.logits.size(); ++i) {
    Assignments p = a, m = a;
    p.logits.data()[i] += h;
    m.logits.data()[i] -= h;
    CHECK(srflvm::testing::relative_error(g.dlogits.data()[i], (f(p, c) - f(m, c)) / (2 * h)) < 1e-6);
  }
  for (Eigen::Index i = 0; i < c.means.size(); ++i) {
    MixtureComponents p = c, m = c;
    p.means.data()[i] += h;
    m.means.data()[i] -= h;
    CHECK(srflvm::testing::relative_error(g.dmeans.data()[i], (f(a, p) - f(a, m)) / (2 * h)) < 1e-6);
  }
  for (std::size_t k = 0; k < 3; ++k)
    for (Eigen::Index j = 0; j < 2; ++j)
      for (Eigen::Index i = j; i < 2; ++i) {
        MixtureComponents p = c, m = c;
        p.chol[k](i, j) += h;
        m.chol[k](i, j) -= h;
        CHECK(srflvm::testing::relative_error(g.dchol[k](i, j), (f(a, p) - f(a, m)) / (2 * h)) < 1e-6);
      }
}

TEST_CASE("clamp_components restores the Cholesky invariant") {
  MixtureComponents c;
  c.means = Matrix::Zero(1, 2);
  Matrix L(2, 2);
  L << -1.0, 3.0, 0.5, 0.0;
  c.chol = {L};
  CHECK_THROWS_AS(validate(c), DomainError);
  clamp_components(c);
  CHECK(c.chol[0](0, 1) == 0.0);
  CHECK(c.chol[0](0, 0) >= 1e-8);
  CHECK(c.chol[0](1, 1) >= 1e-8);
  CHECK(c.chol[0](1, 0) == 0.5);
  CHECK_NOTHROW(validate(c));
}
