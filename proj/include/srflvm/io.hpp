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

// File output and JSON (de)serialisation.

#ifndef SRFLVM_IO_HPP
#define SRFLVM_IO_HPP

#include "srflvm/bcd_vi.hpp"
#include "srflvm/common.hpp"
#include "srflvm/evalkit.hpp"
#include "srflvm/model.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace srflvm::io {

using Json = nlohmann::json;

/// Writes to a temporary file in the same directory, then renames it over
/// `path`, so readers never see a partial file.
void atomic_write(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

/// Comma-separated rows, 17 significant digits.
std::string format_csv(const Matrix& A);
std::string format_mask(const Mask& mask);
std::string format_labels(const std::vector<int>& labels);

void write_csv(const std::string& path, const Matrix& A);
void write_mask(const std::string& path, const Mask& mask);
void write_labels(const std::string& path, const std::vector<int>& labels);
void write_json(const std::string& path, const Json& j);
Json read_json(const std::string& path);

/// 0/1 CSV; throws ShapeError unless it is rows x cols.
Mask load_mask(const std::string& path, Eigen::Index rows, Eigen::Index cols);

Json to_json(const Matrix& A);
Matrix matrix_from_json(const Json& j);
Json to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json to_json(const ModelState& s);
ModelState model_state_from_json(const Json& j);
Json to_json(const AdamState& s);
AdamState adam_state_from_json(const Json& j);
Json to_json(const Standardization& s);
Standardization standardization_from_json(const Json& j);
Json to_json(const FitReport& r);
FitReport fit_report_from_json(const Json& j);
Json to_json(const FitCheckpoint& ck);
FitCheckpoint checkpoint_from_json(const Json& j);
Json to_json(const EvalReport& r);

/// Everything impute / eval need from a finished fit.
struct SavedModel {
  Family family = Family::gaussian;
  ModelState state;
  Standardization standardization;
  int mc_samples = 5;
  std::uint64_t seed = 0;
};

Json to_json(const SavedModel& m);
SavedModel saved_model_from_json(const Json& j);

}  // namespace srflvm::io

#endif  // SRFLVM_IO_HPP
