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

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pbas/numerics.hpp"

namespace pbas::aggregation {

// Pipeline stage a map belongs to. Transitions only move forward:
// raw -> aggregated -> dispersed -> projected -> synthetic.
enum class Role { kRaw, kAggregated, kDispersed, kProjected, kSynthetic };

const char* role_name(Role r);

// H x W grid of C-dimensional vectors, stored (h, w, c) row-major.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  Role role = Role::kRaw;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, Role r = Role::kRaw);

  std::size_t cells() const noexcept { return height * width; }
  std::span<float> at(std::size_t h, std::size_t w) {
    return {data.data() + (h * width + w) * channels, channels};
  }
  std::span<const float> at(std::size_t h, std::size_t w) const {
    return {data.data() + (h * width + w) * channels, channels};
  }
  std::span<const float> cell(std::size_t i) const {
    return {data.data() + i * channels, channels};
  }

  // Tensors are laid out (H, W, C).
  static FeatureMap from_tensor(const numerics::Tensor& t, Role r = Role::kRaw);
  numerics::Tensor to_tensor() const;

  // Moves the map forward to `next`; throws DataError on a backward transition.
  void advance_role(Role next);
};

// Clamped p x p window around (h, w), 0-based, row-major over the window.
// Out-of-range coordinates are clamped to the map (edge replication), so
// exactly p*p pairs are returned and duplicates may occur at borders.
std::vector<std::pair<std::size_t, std::size_t>> neighborhood_indices(
    std::size_t h, std::size_t w, std::size_t p, std::size_t height, std::size_t width);

// Mean pooling over the clamped p x p neighborhood of every cell.
FeatureMap aggregate(const FeatureMap& raw, std::size_t p);

// Bilinear resize with a corner-aligned sampling grid: output corners sample
// input corners exactly. Role is preserved.
FeatureMap resize_bilinear(const FeatureMap& map, std::size_t out_h, std::size_t out_w);

// Single-channel variant used for score maps.
std::vector<double> resize_bilinear(std::span<const double> plane, std::size_t in_h,
                                    std::size_t in_w, std::size_t out_h, std::size_t out_w);

// Where a level's channels land in the concatenated dispersed feature.
struct ChannelSlice {
  int level;
  std::size_t offset;
  std::size_t count;
};

// Resizes each aggregated level to the spatial size of the lowest-index level
// and concatenates channels in ascending level order.
FeatureMap build_dispersed(const std::map<int, FeatureMap>& levels);

std::vector<ChannelSlice> channel_slices(const std::map<int, FeatureMap>& levels);

}  // namespace pbas::aggregation
