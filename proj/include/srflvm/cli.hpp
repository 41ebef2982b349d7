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

// Command-line front end:
//   srflvm <generate|fit|impute|eval> --config <path> [--workers N] [--checkpoint <path>]
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid input or config,
// 3 numerical breakdown.

#ifndef SRFLVM_CLI_HPP
#define SRFLVM_CLI_HPP

#include "srflvm/bcd_vi.hpp"
#include "srflvm/datasets.hpp"
#include "srflvm/io.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace srflvm::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

/// Paths are resolved against the directory holding the config file.
struct DataSection {
  std::string output_dir = ".";
  std::string Y;
  std::string mask;
  std::string labels;
  std::string X_true;
  std::string K_true;
  std::string Y_true;
  std::string idx_images;
  std::string idx_labels;
  std::string state;    // default <output_dir>/state.json
  std::string latents;  // default <output_dir>/latents.csv
  std::optional<SyntheticSpec> synthetic;
  std::optional<MissingMaskSpec> missing;
};

struct EvalSection {
  std::vector<int> knn_k;
  int folds = 5;
  std::uint64_t seed = 0;
  Eigen::Index kernel_features = 10000;
  int impute_samples = 20;
};

struct RunConfig {
  DataSection data;
  FitConfig fit;
  int checkpoint_every = 10;
  EvalSection eval;
};

/// Strict parse: unknown sections or keys and ill-typed values throw
/// ValidationError naming the field. SRFLVM_SEED, when set, replaces every
/// seed in the document.
RunConfig parse_config(const io::Json& doc, const std::string& base_dir);
RunConfig load_config(const std::string& path);

struct Options {
  std::string config;
  int workers = 0;
  std::string checkpoint;
};

int cmd_generate(const Options& opt, std::ostream& out);
int cmd_fit(const Options& opt, std::ostream& out);
int cmd_impute(const Options& opt, std::ostream& out);
int cmd_eval(const Options& opt, std::ostream& out);

/// Parses argv, runs the command and maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace srflvm::cli

#endif  // SRFLVM_CLI_HPP
