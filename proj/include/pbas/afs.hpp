// Copyright 2026 The PBAS Engine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Anomaly feature synthesis: z = u + alpha * L_c * (u - c) / |u - c|, with c
// the nearest center vector of u and L_c the batch's center loss, held
// constant (no gradient flows through the length).

#include <cstddef>
#include <random>
#include <vector>

#include "pbas/abl.hpp"

namespace pbas::afs {

using numerics::Matrix;

inline constexpr double kDirectionEpsilon = 1e-12;

struct SynthesisParams {
  double alpha = 0.3;
  double center_loss = 0.0;

  double length() const noexcept { return alpha * center_loss; }
};

// Synthetic rows plus the source row each one was generated from.
struct SyntheticBatch {
  Matrix z;
  std::vector<std::size_t> source;
  std::vector<std::size_t> skipped;
};

// Strict form: throws DegenerateDirectionError for the first vector whose
// direction is undefined while the length is positive.
aggregation::FeatureMap synthesize(const aggregation::FeatureMap& u,
                                   const abl::NearestAssignment& assignments,
                                   const abl::CenterFeature& center,
                                   const SynthesisParams& params);

// Training form: degenerate vectors are skipped and reported in `skipped`.
SyntheticBatch synthesize_rows(const Matrix& u, const abl::NearestAssignment& assignments,
                               const abl::CenterFeature& center, const SynthesisParams& params);

// Pulls dL/dz back to dL/du through the ray map and adds it to grad_u:
// dz/du = I + (length / r) (I - e e^T), e = (u - c) / r.
void synthesize_backward(const Matrix& u, const abl::NearestAssignment& assignments,
                         const abl::CenterFeature& center, const SynthesisParams& params,
                         const SyntheticBatch& batch, const Matrix& grad_z, Matrix& grad_u);

// Ablation baseline: z = u + N(0, sigma^2) per channel (dz/du = I).
SyntheticBatch gaussian_rows(const Matrix& u, double sigma, std::mt19937_64& rng);

// Adds grad_z to grad_u row-by-row through `batch.source`.
void identity_backward(const SyntheticBatch& batch, const Matrix& grad_z, Matrix& grad_u);

}  // namespace pbas::afs
