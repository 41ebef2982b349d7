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

#include "srflvm/cli.hpp"

#include "srflvm/evalkit.hpp"
#include "srflvm/gaussian_block.hpp"
#include "srflvm/kernels.hpp"
#include "srflvm/logistic_block.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

namespace srflvm::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

// One JSON object whose keys must all be consumed.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValidationError("config: " + name_ + " must be an object");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ValidationError("config: " + field(key) + " has the wrong type");
    }
  }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ValidationError("config: unknown key " + field(it.key()));
  }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> used_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

Family parse_family(Section& s, const std::string& key) {
  std::string name = "gaussian";
  s.get(key, name);
  try {
    return family_from_string(name);
  } catch (const ValidationError&) {
    throw ValidationError("config: " + s.field(key) + " must be gaussian, bernoulli or negbinomial");
  }
}

void parse_data(const Json& j, const std::string& base, DataSection& d) {
  Section s(j, "data");
  s.get("output_dir", d.output_dir);
  s.get("Y", d.Y);
  s.get("mask", d.mask);
  s.get("labels", d.labels);
  s.get("X_true", d.X_true);
  s.get("K_true", d.K_true);
  s.get("Y_true", d.Y_true);
  s.get("idx_images", d.idx_images);
  s.get("idx_labels", d.idx_labels);
  s.get("state", d.state);
  s.get("latents", d.latents);
  for (auto* p : {&d.output_dir, &d.Y, &d.mask, &d.labels, &d.X_true, &d.K_true, &d.Y_true,
                  &d.idx_images, &d.idx_labels, &d.state, &d.latents})
    *p = resolve(base, *p);
  if (d.state.empty()) d.state = (fs::path(d.output_dir) / "state.json").string();
  if (d.latents.empty()) d.latents = (fs::path(d.output_dir) / "latents.csv").string();

  if (s.has("synthetic")) {
    Section g(s.raw("synthetic"), "data.synthetic");
    SyntheticSpec spec;
    g.get("N", spec.N);
    g.get("M", spec.M);
    g.get("rbf_scale", spec.rbf_scale);
    g.get("rbf_length", spec.rbf_length);
    g.get("periodic_scale", spec.periodic_scale);
    g.get("periodic_length", spec.periodic_length);
    g.get("period", spec.period);
    g.get("noise_std", spec.noise_std);
    g.get("seed", spec.seed);
    spec.likelihood.family = parse_family(g, "likelihood");
    g.get("dispersion", spec.likelihood.dispersion);
    std::string layout = "scurve";
    g.get("layout", layout);
    spec.layout = layout_from_string(layout);
    g.finish();
    d.synthetic = spec;
  }
  if (s.has("missing")) {
    Section m(s.raw("missing"), "data.missing");
    MissingMaskSpec spec;
    m.get("fraction", spec.fraction);
    m.get("seed", spec.seed);
    m.finish();
    if (!(spec.fraction >= 0.0 && spec.fraction < 1.0))
      throw ValidationError("config: data.missing.fraction must lie in [0, 1)");
    d.missing = spec;
  }
  s.finish();
}

void parse_model(const Json& j, FitConfig& c) {
  Section s(j, "model");
  s.get("Q", c.Q);
  s.get("L", c.L);
  s.get("K", c.K);
  c.likelihood.family = parse_family(s, "likelihood");
  s.get("dispersion", c.likelihood.dispersion);
  std::string cov = to_string(c.covariance);
  s.get("covariance", cov);
  c.covariance = covariance_mode_from_string(cov);
  s.get("standardize", c.standardize);
  s.get("fix_spectral", c.fix_spectral);
  s.get("noise_variance", c.init_noise_variance);
  s.get("latent_std", c.init_latent_std);
  s.get("alpha0", c.alpha0);
  s.get("beta0", c.beta0);
  s.finish();
}

void parse_optimizer(const Json& j, RunConfig& rc) {
  FitConfig& c = rc.fit;
  Section s(j, "optimizer");
  s.get("mc_samples", c.mc_samples);
  s.get("outer_iters", c.outer_iters);
  s.get("likelihood_block_steps", c.likelihood_block_steps);
  s.get("z_block_steps", c.z_block_steps);
  s.get("learning_rate", c.learning_rate);
  s.get("adam_beta1", c.adam_beta1);
  s.get("adam_beta2", c.adam_beta2);
  s.get("adam_eps", c.adam_eps);
  s.get("seed", c.seed);
  s.get("convergence_tol", c.convergence_tol);
  s.get("convergence_window", c.convergence_window);
  std::string mode = to_string(c.resample_mode);
  s.get("resample_mode", mode);
  c.resample_mode = resample_mode_from_string(mode);
  s.get("stop_on_convergence", c.stop_on_convergence);
  s.get("debug_checks", c.debug_checks);
  s.get("checkpoint_every", rc.checkpoint_every);
  s.finish();
  if (rc.checkpoint_every < 0) throw ValidationError("config: optimizer.checkpoint_every must be >= 0");
}

void parse_eval(const Json& j, EvalSection& e) {
  Section s(j, "eval");
  if (s.has("knn_k")) {
    const Json& k = s.raw("knn_k");
    try {
      e.knn_k = k.is_array() ? k.get<std::vector<int>>() : std::vector<int>{k.get<int>()};
    } catch (const Json::exception&) {
      throw ValidationError("config: eval.knn_k must be an integer or a list of integers");
    }
  }
  s.get("folds", e.folds);
  s.get("seed", e.seed);
  s.get("kernel_features", e.kernel_features);
  s.get("impute_samples", e.impute_samples);
  s.finish();
  if (e.impute_samples < 1) throw ValidationError("config: eval.impute_samples must be >= 1");
  if (e.kernel_features < 0 || e.kernel_features % 2 != 0)
    throw ValidationError("config: eval.kernel_features must be even and >= 0");
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("SRFLVM_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (end == v || *end != '\0') throw ValidationError("SRFLVM_SEED must be a non-negative integer");
  return static_cast<std::uint64_t>(s);
}

ObservationSet load_observations(const RunConfig& rc) {
  const DataSection& d = rc.data;
  ObservationSet obs;
  if (!d.idx_images.empty()) {
    obs = load_idx(d.idx_images, d.idx_labels).obs;
  } else {
    if (d.Y.empty()) throw ValidationError("config: data.Y is required");
    obs = load_csv(d.Y);
  }
  if (!d.mask.empty()) {
    const Mask given = io::load_mask(d.mask, obs.rows(), obs.cols());
    obs.mask = obs.mask.array() && given.array();
  } else if (d.missing) {
    const Mask made = make_mask(obs.rows(), obs.cols(), *d.missing);
    obs.mask = obs.mask.array() && made.array();
  }
  validate(obs);
  return obs;
}

std::string out_path(const RunConfig& rc, const std::string& name) {
  return (fs::path(rc.data.output_dir) / name).string();
}

}  // namespace

RunConfig parse_config(const Json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ValidationError("config: top level must be an object");
  RunConfig rc;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    if (k != "data" && k != "model" && k != "optimizer" && k != "eval")
      throw ValidationError("config: unknown section '" + k + "'");
  }
  parse_data(doc.contains("data") ? doc.at("data") : Json::object(), base_dir, rc.data);
  if (doc.contains("model")) parse_model(doc.at("model"), rc.fit);
  if (doc.contains("optimizer")) parse_optimizer(doc.at("optimizer"), rc);
  if (doc.contains("eval")) parse_eval(doc.at("eval"), rc.eval);

  if (const auto seed = env_seed()) {
    rc.fit.seed = *seed;
    rc.eval.seed = *seed;
    if (rc.data.synthetic) rc.data.synthetic->seed = *seed;
    if (rc.data.missing) rc.data.missing->seed = *seed;
  }
  validate(rc.fit);
  if (rc.data.synthetic) validate(*rc.data.synthetic);
  return rc;
}

RunConfig load_config(const std::string& path) {
  const Json doc = io::read_json(path);
  return parse_config(doc, fs::absolute(path).parent_path().string());
}

int cmd_generate(const Options& opt, std::ostream& out) {
  const RunConfig rc = load_config(opt.config);
  if (!rc.data.synthetic) throw ValidationError("config: data.synthetic is required for generate");
  const SyntheticData data = generate_scurve(*rc.data.synthetic);
  io::write_csv(out_path(rc, "X_true.csv"), data.X_true);
  io::write_csv(out_path(rc, "Y.csv"), data.Y);
  io::write_csv(out_path(rc, "K_true.csv"), data.K_true);
  io::write_labels(out_path(rc, "labels.csv"), data.labels);
  if (rc.data.missing)
    io::write_mask(out_path(rc, "mask.csv"), make_mask(data.Y.rows(), data.Y.cols(), *rc.data.missing));
  out << "generated " << data.Y.rows() << "x" << data.Y.cols() << " data in " << rc.data.output_dir
      << "\n";
  return kExitOk;
}

int cmd_fit(const Options& opt, std::ostream& out) {
  const RunConfig rc = load_config(opt.config);
  const ObservationSet obs = load_observations(rc);
  Fitter fitter(obs, rc.fit);
  if (!opt.checkpoint.empty() && fs::exists(opt.checkpoint))
    fitter.restore(io::checkpoint_from_json(io::read_json(opt.checkpoint)));

  const auto progress = [&out](int iter, double elbo, double secs) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.3f", iter, elbo, secs);
    out << buf << std::endl;
  };
  Fitter::CheckpointSink sink;
  if (!opt.checkpoint.empty())
    sink = [&opt](const FitCheckpoint& ck) { io::write_json(opt.checkpoint, io::to_json(ck)); };
  const FitResult res = fitter.run(progress, opt.checkpoint.empty() ? 0 : rc.checkpoint_every, sink);
  if (sink) sink(fitter.checkpoint());

  io::write_csv(out_path(rc, "latents.csv"), res.state.latent.means);
  io::write_mask(out_path(rc, "mask.csv"), obs.mask);
  const io::SavedModel saved{rc.fit.likelihood.family, res.state, res.standardization,
                             rc.fit.mc_samples, rc.fit.seed};
  io::write_json(out_path(rc, "state.json"), io::to_json(saved));
  io::write_json(out_path(rc, "report.json"), io::to_json(res.report));
  if (res.report.aborted) {
    std::cerr << "fit aborted: " << res.report.message << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_impute(const Options& opt, std::ostream& out) {
  const RunConfig rc = load_config(opt.config);
  const ObservationSet obs = load_observations(rc);
  const io::SavedModel saved = io::saved_model_from_json(io::read_json(rc.data.state));
  require_shape(saved.state.latent.size() == obs.rows(),
                "impute: state has " + std::to_string(saved.state.latent.size()) +
                    " latent points but Y has " + std::to_string(obs.rows()) + " rows");
  require_shape(saved.standardization.mean.size() == obs.cols() &&
                    saved.state.lik.log_dispersion.size() == obs.cols(),
                "impute: state and Y disagree on the number of columns");

  Rng rng(derive_seed(rc.eval.seed, 0x1397));
  Matrix imputed;
  if (saved.family == Family::gaussian) {
    ObservationSet z = obs;
    z.Y = saved.standardization.apply(obs.Y);
    for (Eigen::Index m = 0; m < z.cols(); ++m)
      for (Eigen::Index n = 0; n < z.rows(); ++n)
        if (!z.mask(n, m)) z.Y(n, m) = 0.0;
    imputed = saved.standardization.invert(gaussian_impute(z, saved.state, rc.eval.impute_samples, rng));
  } else {
    imputed = logistic_impute(obs, saved.family, saved.state, rc.eval.impute_samples, rng);
  }
  for (Eigen::Index m = 0; m < obs.cols(); ++m)
    for (Eigen::Index n = 0; n < obs.rows(); ++n)
      if (obs.mask(n, m)) imputed(n, m) = obs.Y(n, m);
  io::write_csv(out_path(rc, "Y_imputed.csv"), imputed);

  if (!rc.data.Y_true.empty()) {
    const Matrix truth = load_csv(rc.data.Y_true).Y;
    require_shape(truth.rows() == obs.rows() && truth.cols() == obs.cols(),
                  "impute: data.Y_true shape differs from Y");
    const auto hidden = static_cast<long>((!obs.mask.array()).count());
    Json j{{"hidden_entries", hidden}};
    if (hidden > 0) {
      j["imputation_mse"] = imputation_mse(truth, imputed, obs.mask);
      j["column_mean_mse"] = imputation_mse(truth, column_mean_impute(obs.Y, obs.mask), obs.mask);
    } else {
      j["imputation_mse"] = nullptr;
      j["column_mean_mse"] = nullptr;
    }
    io::write_json(out_path(rc, "mse.json"), j);
    out << "imputation mse: " << j["imputation_mse"].dump() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Options& opt, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(opt.config);
  const Matrix latents = load_csv(rc.data.latents).Y;
  EvalReport report;
  report.fold_seed = rc.eval.seed;

  if (!rc.eval.knn_k.empty()) {
    if (rc.data.labels.empty() && rc.data.idx_labels.empty())
      throw ValidationError("config: eval.knn_k is set but data.labels is missing");
    const std::vector<int> labels = !rc.data.labels.empty()
                                        ? load_labels(rc.data.labels)
                                        : load_idx(rc.data.idx_images, rc.data.idx_labels).labels;
    for (int k : rc.eval.knn_k) report.knn.push_back(knn_cv(latents, labels, k, rc.eval.folds, rc.eval.seed));
  }
  if (!rc.data.X_true.empty()) report.procrustes_disparity = procrustes(latents, load_csv(rc.data.X_true).Y);
  if (!rc.data.K_true.empty()) {
    const io::SavedModel saved = io::saved_model_from_json(io::read_json(rc.data.state));
    Rng rng(derive_seed(rc.eval.seed, 0x4b52));
    report.kernel_frobenius_rel_err = kernel_recovery(load_csv(rc.data.K_true).Y, latents,
                                                      saved.state.mixture, rc.eval.kernel_features, rng);
  }
  const std::string imputed_path = out_path(rc, "Y_imputed.csv");
  if (!rc.data.Y_true.empty() && fs::exists(imputed_path)) {
    const Matrix truth = load_csv(rc.data.Y_true).Y;
    const Matrix imputed = load_csv(imputed_path).Y;
    const std::string mask_path = !rc.data.mask.empty() ? rc.data.mask : out_path(rc, "mask.csv");
    const Mask mask = io::load_mask(mask_path, truth.rows(), truth.cols());
    if (!mask.all()) report.imputation_mse = imputation_mse(truth, imputed, mask);
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const Json j = io::to_json(report);
  io::write_json(out_path(rc, "eval.json"), j);
  out << j.dump() << "\n";
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scalable random feature latent variable models"};
  app.require_subcommand(1);
  Options opt;
  std::string command;
  for (const char* name : {"generate", "fit", "impute", "eval"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "JSON config file")->required();
    sub->add_option("--workers", opt.workers, "worker threads (0 = OpenMP default)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--checkpoint", opt.checkpoint, "checkpoint file (fit)");
    sub->callback([&command, name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << e.what() << "\n";
    return kExitInvalid;
  }

  try {
    kernels::set_worker_count(opt.workers);
    if (command == "generate") return cmd_generate(opt, out);
    if (command == "fit") return cmd_fit(opt, out);
    if (command == "impute") return cmd_impute(opt, out);
    return cmd_eval(opt, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const srflvm::ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DomainError& e) {
    err << "invalid value: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace srflvm::cli
