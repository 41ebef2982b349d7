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

#include "srflvm/io.hpp"

#include "srflvm/datasets.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace srflvm::io {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

void atomic_write(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw ValidationError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw ValidationError("cannot rename onto '" + path + "': " + ec.message());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_csv(const Matrix& A) {
  std::string out;
  char buf[40];
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (j > 0) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", A(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string format_mask(const Mask& mask) {
  std::string out;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (j > 0) out += ',';
      out += mask(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::string format_labels(const std::vector<int>& labels) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  return out;
}

void write_csv(const std::string& path, const Matrix& A) { atomic_write(path, format_csv(A)); }
void write_mask(const std::string& path, const Mask& mask) { atomic_write(path, format_mask(mask)); }
void write_labels(const std::string& path, const std::vector<int>& labels) {
  atomic_write(path, format_labels(labels));
}
void write_json(const std::string& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

Json read_json(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

Mask load_mask(const std::string& path, Eigen::Index rows, Eigen::Index cols) {
  const ObservationSet raw = load_csv(path);
  require_shape(raw.rows() == rows && raw.cols() == cols,
                path + ": mask is " + std::to_string(raw.rows()) + "x" + std::to_string(raw.cols()) +
                    " but Y is " + std::to_string(rows) + "x" + std::to_string(cols));
  Mask mask(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = raw.Y(i, j);
      if (v != 0.0 && v != 1.0)
        throw ParseError(path + ": mask entries must be 0 or 1 (row " + std::to_string(i + 1) +
                         ", column " + std::to_string(j + 1) + ")");
      mask(i, j) = v == 1.0;
    }
  return mask;
}

Json to_json(const Matrix& A) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
    rows.push_back(std::move(row));
  }
  return Json{{"rows", A.rows()}, {"cols", A.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const Json& j) {
  return guarded("matrix", [&] {
    const auto r = j.at("rows").get<Eigen::Index>();
    const auto c = j.at("cols").get<Eigen::Index>();
    const Json& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != r) throw ParseError("matrix: row count mismatch");
    Matrix A(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      const Json& row = data.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != c) throw ParseError("matrix: ragged row");
      for (Eigen::Index k = 0; k < c; ++k) A(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    return A;
  });
}

Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector vector_from_json(const Json& j) {
  return guarded("vector", [&] {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
    return v;
  });
}

namespace {

Json matrices_to_json(const std::vector<Matrix>& ms) {
  Json a = Json::array();
  for (const auto& m : ms) a.push_back(to_json(m));
  return a;
}

std::vector<Matrix> matrices_from_json(const Json& j) {
  std::vector<Matrix> out;
  for (const auto& e : j) out.push_back(matrix_from_json(e));
  return out;
}

}  // namespace

Json to_json(const ModelState& s) {
  Json latent{{"mode", to_string(s.latent.mode)}, {"means", to_json(s.latent.means)}};
  if (s.latent.mode == CovarianceMode::diagonal)
    latent["log_std"] = to_json(s.latent.log_std);
  else
    latent["chol"] = matrices_to_json(s.latent.chol);
  const StickState& st = s.mixture.stick;
  Json mixture{{"means", to_json(s.mixture.comps.means)},
               {"chol", matrices_to_json(s.mixture.comps.chol)},
               {"logits", to_json(s.mixture.assign.logits)},
               {"stick",
                {{"a_v", to_json(st.a_v)},
                 {"b_v", to_json(st.b_v)},
                 {"a_alpha", st.a_alpha},
                 {"b_alpha", st.b_alpha},
                 {"alpha0", st.alpha0},
                 {"beta0", st.beta0}}}};
  Json lik{{"log_noise_var", s.lik.log_noise_var}, {"log_dispersion", to_json(s.lik.log_dispersion)}};
  return Json{{"latent", latent}, {"mixture", mixture}, {"likelihood", lik}};
}

ModelState model_state_from_json(const Json& j) {
  return guarded("model state", [&] {
    ModelState s;
    const Json& lat = j.at("latent");
    s.latent.mode = covariance_mode_from_string(lat.at("mode").get<std::string>());
    s.latent.means = matrix_from_json(lat.at("means"));
    if (s.latent.mode == CovarianceMode::diagonal)
      s.latent.log_std = matrix_from_json(lat.at("log_std"));
    else
      s.latent.chol = matrices_from_json(lat.at("chol"));
    const Json& mix = j.at("mixture");
    s.mixture.comps.means = matrix_from_json(mix.at("means"));
    s.mixture.comps.chol = matrices_from_json(mix.at("chol"));
    s.mixture.assign.logits = matrix_from_json(mix.at("logits"));
    const Json& st = mix.at("stick");
    s.mixture.stick.a_v = vector_from_json(st.at("a_v"));
    s.mixture.stick.b_v = vector_from_json(st.at("b_v"));
    s.mixture.stick.a_alpha = st.at("a_alpha").get<double>();
    s.mixture.stick.b_alpha = st.at("b_alpha").get<double>();
    s.mixture.stick.alpha0 = st.at("alpha0").get<double>();
    s.mixture.stick.beta0 = st.at("beta0").get<double>();
    const Json& lik = j.at("likelihood");
    s.lik.log_noise_var = lik.at("log_noise_var").get<double>();
    s.lik.log_dispersion = vector_from_json(lik.at("log_dispersion"));
    validate(s.mixture.comps);
    validate(s.mixture.stick);
    return s;
  });
}

Json to_json(const AdamState& s) {
  return Json{{"m", to_json(s.m)}, {"v", to_json(s.v)}, {"step", s.step}};
}

AdamState adam_state_from_json(const Json& j) {
  return guarded("adam state", [&] {
    return AdamState{vector_from_json(j.at("m")), vector_from_json(j.at("v")),
                     j.at("step").get<std::int64_t>()};
  });
}

Json to_json(const Standardization& s) {
  return Json{{"enabled", s.enabled}, {"mean", to_json(s.mean)}, {"scale", to_json(s.scale)}};
}

Standardization standardization_from_json(const Json& j) {
  return guarded("standardization", [&] {
    return Standardization{j.at("enabled").get<bool>(), vector_from_json(j.at("mean")),
                           vector_from_json(j.at("scale"))};
  });
}

Json to_json(const FitReport& r) {
  return Json{{"elbo_trace", r.elbo_trace},
              {"wall_time_seconds", r.wall_time_seconds},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"expected_alpha", r.expected_alpha},
              {"cluster_occupancy", to_json(r.occupancy)},
              {"noise_variance", r.noise_variance},
              {"dispersion", to_json(r.dispersion)},
              {"standardized", r.standardized},
              {"aborted", r.aborted},
              {"message", r.message}};
}

FitReport fit_report_from_json(const Json& j) {
  return guarded("fit report", [&] {
    FitReport r;
    r.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.iterations = j.at("iterations").get<int>();
    r.expected_alpha = j.at("expected_alpha").get<double>();
    r.occupancy = vector_from_json(j.at("cluster_occupancy"));
    r.noise_variance = j.at("noise_variance").get<double>();
    r.dispersion = vector_from_json(j.at("dispersion"));
    r.standardized = j.at("standardized").get<bool>();
    r.aborted = j.at("aborted").get<bool>();
    r.message = j.at("message").get<std::string>();
    return r;
  });
}

Json to_json(const FitCheckpoint& ck) {
  return Json{{"state", to_json(ck.state)},
              {"likelihood_adam", to_json(ck.likelihood_adam)},
              {"z_adam", to_json(ck.z_adam)},
              {"omega", matrices_to_json(ck.omega)},
              {"report", to_json(ck.report)},
              {"rng_state", ck.rng_state},
              {"pg_sweep", ck.pg_sweep},
              {"config_hash", ck.config_hash}};
}

FitCheckpoint checkpoint_from_json(const Json& j) {
  return guarded("checkpoint", [&] {
    FitCheckpoint ck;
    ck.state = model_state_from_json(j.at("state"));
    ck.likelihood_adam = adam_state_from_json(j.at("likelihood_adam"));
    ck.z_adam = adam_state_from_json(j.at("z_adam"));
    ck.omega = matrices_from_json(j.at("omega"));
    ck.report = fit_report_from_json(j.at("report"));
    ck.rng_state = j.at("rng_state").get<std::string>();
    ck.pg_sweep = j.at("pg_sweep").get<std::uint64_t>();
    ck.config_hash = j.at("config_hash").get<std::uint64_t>();
    return ck;
  });
}

Json to_json(const EvalReport& r) {
  Json knn = Json::array();
  for (const auto& k : r.knn)
    knn.push_back(Json{{"k", k.k},
                       {"mean", k.mean},
                       {"std", k.std},
                       {"fold_accuracy", k.fold_accuracy},
                       {"stratified", k.stratified}});
  Json j{{"knn", knn}, {"fold_seed", r.fold_seed}, {"wall_time", r.wall_time}};
  j["imputation_mse"] = r.imputation_mse ? Json(*r.imputation_mse) : Json(nullptr);
  j["kernel_frobenius_rel_err"] =
      r.kernel_frobenius_rel_err ? Json(*r.kernel_frobenius_rel_err) : Json(nullptr);
  j["procrustes_disparity"] = r.procrustes_disparity ? Json(*r.procrustes_disparity) : Json(nullptr);
  return j;
}

Json to_json(const SavedModel& m) {
  return Json{{"family", to_string(m.family)},
              {"state", to_json(m.state)},
              {"standardization", to_json(m.standardization)},
              {"mc_samples", m.mc_samples},
              {"seed", m.seed}};
}

SavedModel saved_model_from_json(const Json& j) {
  return guarded("saved model", [&] {
    SavedModel m;
    m.family = family_from_string(j.at("family").get<std::string>());
    m.state = model_state_from_json(j.at("state"));
    m.standardization = standardization_from_json(j.at("standardization"));
    m.mc_samples = j.at("mc_samples").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  });
}

}  // namespace srflvm::io
