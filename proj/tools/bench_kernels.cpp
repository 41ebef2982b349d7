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

// Serial reference vs OpenMP kernels on a fixed problem size.
//   bench_kernels [N] [M] [L] [repeats]

#include "srflvm/kernels.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

using namespace srflvm;

namespace {

double seconds(const std::function<void()>& fn, int repeats) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / repeats;
}

}  // namespace

int main(int argc, char** argv) {
  const Eigen::Index N = argc > 1 ? std::atol(argv[1]) : 500;
  const Eigen::Index M = argc > 2 ? std::atol(argv[2]) : 100;
  const Eigen::Index L = argc > 3 ? std::atol(argv[3]) : 100;
  const int repeats = argc > 4 ? std::atoi(argv[4]) : 5;
  const Eigen::Index Q = 2;

  Rng rng(7);
  const Matrix X = standard_normal(N, Q, rng);
  const Matrix W = standard_normal(L / 2, Q, rng);
  const Matrix Y = standard_normal(N, M, rng);
  const Mask full = Mask::Constant(N, M, true);
  const Matrix phi = kernels::omp::feature_map(X, W);
  const Matrix b = Matrix::Ones(N, M);
  const Matrix psi = phi * standard_normal(L, M, rng);

  std::printf("N=%ld M=%ld L=%ld workers=%d\n", static_cast<long>(N), static_cast<long>(M),
              static_cast<long>(L), kernels::worker_count());
  std::printf("%-28s %12s %12s\n", "kernel", "serial [s]", "omp [s]");
  const auto row = [&](const char* name, const std::function<void()>& s,
                       const std::function<void()>& o) {
    std::printf("%-28s %12.5f %12.5f\n", name, seconds(s, repeats), seconds(o, repeats));
  };
  row("feature_map", [&] { kernels::serial::feature_map(X, W); },
      [&] { kernels::omp::feature_map(X, W); });
  row("gaussian_columns (+grad)",
      [&] { kernels::serial::gaussian_columns(phi, Y, full, 0.1, true); },
      [&] { kernels::omp::gaussian_columns(phi, Y, full, 0.1, true); });
  row("pg_matrix (b=1)", [&] { kernels::serial::pg_matrix(b, psi, 1, 0); },
      [&] { kernels::omp::pg_matrix(b, psi, 1, 0); });
  return 0;
}
