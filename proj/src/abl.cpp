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
#include "pbas/abl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "pbas/error.hpp"

namespace pbas::abl {

Projector Projector::normal_init(std::size_t channels, std::mt19937_64& rng) {
  return Projector(numerics::LinearLayer::normal_init(channels, channels, rng), true);
}

CenterFeature CenterFeature::from_map(const FeatureMap& m) {
  CenterFeature c(m.height, m.width, m.channels);
  c.data = m.data;
  return c;
}

CenterFeature CenterFeature::from_tensor(const numerics::Tensor& t) {
  if (t.ndim() != 3) throw DataError("center tensor must be 3-D (H, W, C)");
  CenterFeature c(t.dims()[0], t.dims()[1], t.dims()[2]);
  c.data.assign(t.data().begin(), t.data().end());
  return c;
}

numerics::Tensor CenterFeature::to_tensor() const {
  return numerics::Tensor({height, width, channels}, data);
}

CenterIndex::CenterIndex(const CenterFeature& center)
    : center_(&center), transposed_(center.cells() * center.channels) {
  const std::size_t M = center.cells();
  const std::size_t C = center.channels;
  for (std::size_t j = 0; j < M; ++j) {
    for (std::size_t k = 0; k < C; ++k) transposed_[k * M + j] = center.data[j * C + k];
  }
}

NearestAssignment CenterIndex::search(const Matrix& queries) const {
  const std::size_t M = center_->cells();
  const std::size_t C = center_->channels;
  if (queries.cols != C) {
    throw DataError("nearest_center: query has " + std::to_string(queries.cols) +
                    " channels, center has " + std::to_string(C));
  }
  NearestAssignment out;
  out.index.resize(queries.rows);
  out.distance.resize(queries.rows);
  // Blocks of kQ queries by kJ centers keep the partial sums in registers.
  // Each distance still accumulates over channels in index order, so results
  // match the naive loop bit for bit.
  constexpr std::size_t kQ = 4;
  constexpr std::size_t kJ = 32;
  const std::size_t blocks = (queries.rows + kQ - 1) / kQ;
  numerics::parallel_for(blocks, [&](std::size_t b) {
    const std::size_t r0 = b * kQ;
    const std::size_t nq = std::min(kQ, queries.rows - r0);
    std::array<const double*, kQ> q{};
    for (std::size_t i = 0; i < kQ; ++i) {
      q[i] = queries.data.data() + (r0 + std::min(i, nq - 1)) * C;
    }
    std::array<double, kQ> best_d;
    std::array<std::size_t, kQ> best{};
    best_d.fill(std::numeric_limits<double>::infinity());
    for (std::size_t j0 = 0; j0 < M; j0 += kJ) {
      const std::size_t nj = std::min(kJ, M - j0);
      alignas(64) double acc[kQ][kJ] = {};
      if (nj == kJ) {
        for (std::size_t k = 0; k < C; ++k) {
          const double* col = transposed_.data() + k * M + j0;
          for (std::size_t i = 0; i < kQ; ++i) {
            const double qk = q[i][k];
            for (std::size_t j = 0; j < kJ; ++j) {
              const double d = qk - col[j];
              acc[i][j] += d * d;
            }
          }
        }
      } else {
        for (std::size_t k = 0; k < C; ++k) {
          const double* col = transposed_.data() + k * M + j0;
          for (std::size_t i = 0; i < kQ; ++i) {
            const double qk = q[i][k];
            for (std::size_t j = 0; j < nj; ++j) {
              const double d = qk - col[j];
              acc[i][j] += d * d;
            }
          }
        }
      }
      for (std::size_t i = 0; i < kQ; ++i) {
        for (std::size_t j = 0; j < nj; ++j) {
          if (acc[i][j] < best_d[i]) {
            best_d[i] = acc[i][j];
            best[i] = j0 + j;
          }
        }
      }
    }
    for (std::size_t i = 0; i < nq; ++i) {
      out.index[r0 + i] = best[i];
      out.distance[r0 + i] = std::sqrt(best_d[i]);
    }
  });
  return out;
}

Matrix to_rows(std::span<const FeatureMap> maps) {
  if (maps.empty()) return {};
  const std::size_t C = maps.front().channels;
  std::size_t rows = 0;
  for (const auto& m : maps) {
    if (m.channels != C) throw DataError("to_rows: channel count differs between maps");
    rows += m.cells();
  }
  Matrix out(rows, C);
  std::size_t offset = 0;
  for (const auto& m : maps) {
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[offset + i] = m.data[i];
    offset += m.data.size();
  }
  return out;
}

Matrix to_rows(const FeatureMap& map) { return to_rows(std::span<const FeatureMap>(&map, 1)); }

CenterFeature average_center(std::span<const FeatureMap> features) {
  if (features.empty()) throw DataError("average_center: no training features");
  const FeatureMap& first = features.front();
  std::vector<double> acc(first.data.size(), 0.0);
  for (const auto& f : features) {
    if (f.height != first.height || f.width != first.width || f.channels != first.channels) {
      throw DataError("average_center: feature maps have different shapes");
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f.data[i];
  }
  CenterFeature c(first.height, first.width, first.channels);
  const double inv = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < acc.size(); ++i) c.data[i] = static_cast<float>(acc[i] * inv);
  return c;
}

NearestAssignment nearest_center(const FeatureMap& query, const CenterFeature& center) {
  return CenterIndex(center).search(to_rows(query));
}

Matrix project(const Matrix& features, const Projector& projector) {
  return numerics::linear_forward(projector.layer, features);
}

FeatureMap project(const FeatureMap& features, const Projector& projector) {
  if (features.channels != projector.channels()) {
    throw DataError("project: feature channels " + std::to_string(features.channels) +
                    " != projector width " + std::to_string(projector.channels()));
  }
  const Matrix u = project(to_rows(features), projector);
  FeatureMap out(features.height, features.width, projector.layer.out_dim, features.role);
  out.advance_role(aggregation::Role::kProjected);
  for (std::size_t i = 0; i < u.data.size(); ++i) out.data[i] = static_cast<float>(u.data[i]);
  return out;
}

namespace {

// Element-wise mean of the projected batch, as an f64 buffer.
std::vector<double> projected_batch_mean(const std::vector<FeatureMap>& batch,
                                         const Projector& projector) {
  std::vector<double> mean;
  for (const auto& t : batch) {
    const Matrix b = project(to_rows(t), projector);
    if (mean.empty()) mean.assign(b.data.size(), 0.0);
    if (b.data.size() != mean.size()) throw DataError("init_center: batch shapes differ");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += b.data[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : mean) v *= inv;
  return mean;
}

}  // namespace

CenterFeature init_center(const std::vector<std::vector<FeatureMap>>& batches,
                          const Projector& frozen_projector, double beta) {
  if (batches.empty()) throw DataError("init_center: no batches");
  if (!frozen_projector.frozen) throw DataError("init_center: projector must be frozen");
  const FeatureMap& shape = batches.front().empty() ? FeatureMap{} : batches.front().front();
  CenterFeature center;
  const std::size_t C = frozen_projector.layer.out_dim;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const auto& batch = batches[bi];
    if (batch.empty()) throw DataError("init_center: batch " + std::to_string(bi) + " is empty");
    const std::vector<double> a = projected_batch_mean(batch, frozen_projector);
    if (bi == 0) {
      center = CenterFeature(shape.height, shape.width, C);
      for (std::size_t i = 0; i < a.size(); ++i) center.data[i] = static_cast<float>(a[i]);
      continue;
    }
    if (a.size() != center.data.size()) throw DataError("init_center: batch shapes differ");
    Matrix queries(center.cells(), C);
    queries.data = a;
    const NearestAssignment nn = CenterIndex(center).search(queries);
    // Sum matched queries per center vector, then one EMA step per center.
    std::vector<double> sum(center.data.size(), 0.0);
    std::vector<std::size_t> count(center.cells(), 0);
    for (std::size_t q = 0; q < queries.rows; ++q) {
      const std::size_t j = nn.index[q];
      ++count[j];
      for (std::size_t k = 0; k < C; ++k) sum[j * C + k] += a[q * C + k];
    }
    for (std::size_t j = 0; j < center.cells(); ++j) {
      if (count[j] == 0) continue;
      const double inv = 1.0 / static_cast<double>(count[j]);
      for (std::size_t k = 0; k < C; ++k) {
        const double c = center.data[j * C + k];
        center.data[j * C + k] = static_cast<float>((1.0 - beta) * c + beta * sum[j * C + k] * inv);
      }
    }
  }
  return center;
}

CenterFeature init_center(std::span<const FeatureMap> features, std::size_t batch_size,
                          const Projector& frozen_projector, double beta) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::vector<FeatureMap>> batches;
  for (std::size_t i = 0; i < features.size(); i += batch_size) {
    const std::size_t end = std::min(features.size(), i + batch_size);
    batches.emplace_back(features.begin() + i, features.begin() + end);
  }
  return init_center(batches, frozen_projector, beta);
}

CenterLoss center_loss(const Matrix& projected, const CenterIndex& index) {
  CenterLoss out;
  out.assignments = index.search(projected);
  double sum = 0.0;
  for (double d : out.assignments.distance) sum += d;
  out.value = projected.rows == 0 ? 0.0 : sum / static_cast<double>(projected.rows);
  return out;
}

CenterLoss center_loss(std::span<const FeatureMap> projected, const CenterFeature& center) {
  const CenterIndex index(center);
  return center_loss(to_rows(projected), index);
}

void center_loss_backward(const Matrix& projected, const CenterFeature& center,
                          const NearestAssignment& assignments, double scale, Matrix& grad_u) {
  const std::size_t C = projected.cols;
  numerics::parallel_for(projected.rows, [&](std::size_t r) {
    const double d = assignments.distance[r];
    if (d <= 0.0) return;
    const auto c = center.cell(assignments.index[r]);
    const double s = scale / d;
    auto u = projected.row(r);
    auto g = grad_u.row(r);
    for (std::size_t k = 0; k < C; ++k) g[k] += s * (u[k] - c[k]);
  });
}

}  // namespace pbas::abl
