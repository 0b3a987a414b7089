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
#include "pbas/afs.hpp"

#include <cmath>
#include <string>

#include "pbas/error.hpp"

namespace pbas::afs {
namespace {

// |u - c| for one row, f64.
double ray_norm(std::span<const double> u, std::span<const float> c) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - c[k];
    s += d * d;
  }
  return std::sqrt(s);
}

void check_params(const SynthesisParams& params) {
  if (!(params.alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(params.center_loss >= 0.0)) throw DataError("synthesis length L_c must be non-negative");
}

}  // namespace

SyntheticBatch synthesize_rows(const Matrix& u, const abl::NearestAssignment& assignments,
                               const abl::CenterFeature& center, const SynthesisParams& params) {
  check_params(params);
  if (assignments.index.size() != u.rows) {
    throw DataError("synthesize: assignment count does not match the batch");
  }
  const double len = params.length();
  const std::size_t C = u.cols;
  std::vector<double> norms(u.rows);
  numerics::parallel_for(u.rows, [&](std::size_t r) {
    norms[r] = ray_norm(u.row(r), center.cell(assignments.index[r]));
  });
  SyntheticBatch out;
  for (std::size_t r = 0; r < u.rows; ++r) {
    if (len > 0.0 && norms[r] < kDirectionEpsilon) {
      out.skipped.push_back(r);
    } else {
      out.source.push_back(r);
    }
  }
  out.z = Matrix(out.source.size(), C);
  numerics::parallel_for(out.source.size(), [&](std::size_t i) {
    const std::size_t r = out.source[i];
    auto ur = u.row(r);
    auto zr = out.z.row(i);
    if (len == 0.0) {
      std::copy(ur.begin(), ur.end(), zr.begin());
      return;
    }
    const auto c = center.cell(assignments.index[r]);
    const double s = len / norms[r];
    for (std::size_t k = 0; k < C; ++k) zr[k] = ur[k] + s * (ur[k] - c[k]);
  });
  return out;
}

aggregation::FeatureMap synthesize(const aggregation::FeatureMap& u,
                                   const abl::NearestAssignment& assignments,
                                   const abl::CenterFeature& center,
                                   const SynthesisParams& params) {
  const Matrix rows = abl::to_rows(u);
  const SyntheticBatch batch = synthesize_rows(rows, assignments, center, params);
  if (!batch.skipped.empty()) {
    throw DegenerateDirectionError(batch.skipped.front(),
                                   "u coincides with its nearest center vector");
  }
  aggregation::FeatureMap z(u.height, u.width, u.channels, u.role);
  z.advance_role(aggregation::Role::kSynthetic);
  for (std::size_t i = 0; i < batch.z.data.size(); ++i) {
    z.data[i] = static_cast<float>(batch.z.data[i]);
  }
  return z;
}

void synthesize_backward(const Matrix& u, const abl::NearestAssignment& assignments,
                         const abl::CenterFeature& center, const SynthesisParams& params,
                         const SyntheticBatch& batch, const Matrix& grad_z, Matrix& grad_u) {
  const double len = params.length();
  const std::size_t C = u.cols;
  numerics::parallel_for(batch.source.size(), [&](std::size_t i) {
    const std::size_t r = batch.source[i];
    auto g = grad_z.row(i);
    auto gu = grad_u.row(r);
    if (len == 0.0) {
      for (std::size_t k = 0; k < C; ++k) gu[k] += g[k];
      return;
    }
    auto ur = u.row(r);
    const auto c = center.cell(assignments.index[r]);
    const double norm = ray_norm(ur, c);
    double eg = 0.0;
    for (std::size_t k = 0; k < C; ++k) eg += (ur[k] - c[k]) / norm * g[k];
    const double s = len / norm;
    for (std::size_t k = 0; k < C; ++k) {
      const double e = (ur[k] - c[k]) / norm;
      gu[k] += g[k] + s * (g[k] - e * eg);
    }
  });
}

SyntheticBatch gaussian_rows(const Matrix& u, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian synthesis sigma must be non-negative");
  SyntheticBatch out;
  out.z = u;
  out.source.resize(u.rows);
  for (std::size_t r = 0; r < u.rows; ++r) out.source[r] = r;
  std::normal_distribution<double> noise(0.0, sigma);
  if (sigma > 0.0) {
    for (double& v : out.z.data) v += noise(rng);
  }
  return out;
}

void identity_backward(const SyntheticBatch& batch, const Matrix& grad_z, Matrix& grad_u) {
  const std::size_t C = grad_z.cols;
  for (std::size_t i = 0; i < batch.source.size(); ++i) {
    auto g = grad_z.row(i);
    auto gu = grad_u.row(batch.source[i]);
    for (std::size_t k = 0; k < C; ++k) gu[k] += g[k];
  }
}

}  // namespace pbas::afs
