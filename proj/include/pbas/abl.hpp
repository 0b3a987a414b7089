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

// Approximate boundary learning: the projector, the center feature, 1-NN
// assignment against it, center initialization by feature alignment, and the
// center-constraint loss.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "pbas/aggregation.hpp"
#include "pbas/numerics.hpp"

namespace pbas::abl {

using aggregation::FeatureMap;
using numerics::Matrix;

// Square fully-connected layer mapping dispersed features t to u.
struct Projector {
  numerics::LinearLayer layer;
  bool frozen = true;

  Projector() = default;
  explicit Projector(numerics::LinearLayer l, bool is_frozen = true)
      : layer(std::move(l)), frozen(is_frozen) {}

  // N(0, 1/sqrt(C)) weights, zero bias, frozen.
  static Projector normal_init(std::size_t channels, std::mt19937_64& rng);

  std::size_t channels() const noexcept { return layer.in_dim; }
};

// Grid of center vectors, (h, w, c) row-major.
struct CenterFeature {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  CenterFeature() = default;
  CenterFeature(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), data(h * w * c, 0.0f) {}

  std::size_t cells() const noexcept { return height * width; }
  std::span<const float> cell(std::size_t i) const {
    return {data.data() + i * channels, channels};
  }
  std::span<float> cell(std::size_t i) { return {data.data() + i * channels, channels}; }

  static CenterFeature from_map(const FeatureMap& m);
  static CenterFeature from_tensor(const numerics::Tensor& t);
  numerics::Tensor to_tensor() const;
};

// For each query vector (row-major over the batch): the flat row-major index
// of its nearest center vector and the Euclidean distance to it.
struct NearestAssignment {
  std::vector<std::size_t> index;
  std::vector<double> distance;
};

// Exhaustive 1-NN search structure. Ties go to the smallest center index.
class CenterIndex {
 public:
  explicit CenterIndex(const CenterFeature& center);

  const CenterFeature& center() const noexcept { return *center_; }
  NearestAssignment search(const Matrix& queries) const;

 private:
  const CenterFeature* center_;
  std::vector<double> transposed_;  // C x M
};

// Element-wise mean over images; the classic single-center baseline.
CenterFeature average_center(std::span<const FeatureMap> features);

NearestAssignment nearest_center(const FeatureMap& query, const CenterFeature& center);

// Per-vector affine map t -> u.
FeatureMap project(const FeatureMap& features, const Projector& projector);
Matrix project(const Matrix& features, const Projector& projector);

// Center initialization by iterative feature alignment. Each batch is pushed
// through the frozen projector and averaged element-wise; the first average
// seeds the center, and every later average pulls the center vectors it is
// nearest to: a center matched by several query vectors moves toward their
// mean, (1 - beta) * c + beta * mean. Unmatched center vectors are kept.
CenterFeature init_center(const std::vector<std::vector<FeatureMap>>& batches,
                          const Projector& frozen_projector, double beta);

// Convenience overload: consecutive batches of `batch_size` maps.
CenterFeature init_center(std::span<const FeatureMap> features, std::size_t batch_size,
                          const Projector& frozen_projector, double beta);

struct CenterLoss {
  double value = 0.0;
  NearestAssignment assignments;
};

// Mean Euclidean distance from each projected vector to its nearest center.
CenterLoss center_loss(std::span<const FeatureMap> projected, const CenterFeature& center);
CenterLoss center_loss(const Matrix& projected, const CenterIndex& index);

// grad_u[r] += scale * (u_r - c_r) / |u_r - c_r|; zero-distance rows get zero.
void center_loss_backward(const Matrix& projected, const CenterFeature& center,
                          const NearestAssignment& assignments, double scale, Matrix& grad_u);

// Flattens maps into one row per vector.
Matrix to_rows(std::span<const FeatureMap> maps);
Matrix to_rows(const FeatureMap& map);

}  // namespace pbas::abl
