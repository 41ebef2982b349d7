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

#ifndef SRFLVM_POLYA_GAMMA_HPP
#define SRFLVM_POLYA_GAMMA_HPP

#include "srflvm/common.hpp"

namespace srflvm {

/// Draw from PG(b, c).
///
///  - b == 1: exact alternating-series sampler (Devroye-style, two-piece
///    proposal: truncated exponential left of 0.64, inverse Gaussian right).
///  - integer b: sum of b independent PG(1, c) draws.
///  - otherwise: the Gamma-series representation truncated at 200 terms plus
///    a moment-matched Gamma draw for the remaining tail.
double pg_sample(double b, double c, Rng& rng);

/// Exact PG(1, c) draw.
double pg_sample_one(double c, Rng& rng);

/// Truncated Gamma-series draw with tail correction (any b > 0).
double pg_sample_series(double b, double c, Rng& rng, int terms = 200);

/// E[omega] = b tanh(c/2) / (2c), with the c -> 0 limit b/4.
double pg_mean(double b, double c);

}  // namespace srflvm

#endif  // SRFLVM_POLYA_GAMMA_HPP
