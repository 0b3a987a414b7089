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
#include <span>
#include <vector>

#include "pbas/aggregation.hpp"
#include "pbas/rbo.hpp"

namespace pbas::scoring {

inline constexpr double kDefaultSigma = 4.0;

struct ScoreResult {
  double image_score = 0.0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixel_map;  // height x width, row-major
};

// Discriminator confidence for every cell of a projected map (H_m x W_m).
std::vector<double> confidence_grid(const aggregation::FeatureMap& u,
                                    const rbo::Discriminator& d);

// Max confidence over all cells, taken before any resize or smoothing.
double score_image(const aggregation::FeatureMap& u, const rbo::Discriminator& d);

// Separable Gaussian blur, kernel truncated at ceil(4 sigma) and renormalized,
// edge-replicated borders. sigma = 0 returns the input unchanged.
std::vector<double> gaussian_blur(std::span<const double> plane, std::size_t height,
                                  std::size_t width, double sigma);

std::vector<double> gaussian_kernel(double sigma);

// Confidence grid -> corner-aligned bilinear upsample to (out_h, out_w) -> blur.
std::vector<double> score_pixels(const aggregation::FeatureMap& u, const rbo::Discriminator& d,
                                 std::size_t out_h, std::size_t out_w, double sigma);

std::vector<double> pixels_from_grid(std::span<const double> grid, std::size_t grid_h,
                                     std::size_t grid_w, std::size_t out_h, std::size_t out_w,
                                     double sigma);

ScoreResult score(const aggregation::FeatureMap& u, const rbo::Discriminator& d,
                  std::size_t out_h, std::size_t out_w, double sigma);

}  // namespace pbas::scoring
