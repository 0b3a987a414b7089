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
#include "pbas/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "pbas/error.hpp"

namespace pbas::scoring {

std::vector<double> confidence_grid(const aggregation::FeatureMap& u,
                                    const rbo::Discriminator& d) {
  if (u.role != aggregation::Role::kProjected) {
    throw DataError(std::string("scoring expects projected features, got ") +
                    aggregation::role_name(u.role));
  }
  rbo::ForwardCache cache;
  return rbo::disc_forward(d, abl::to_rows(u), cache);
}

double score_image(const aggregation::FeatureMap& u, const rbo::Discriminator& d) {
  const auto grid = confidence_grid(u, d);
  return *std::max_element(grid.begin(), grid.end());
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const auto radius = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-0.5 * x * x / (sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> gaussian_blur(std::span<const double> plane, std::size_t height,
                                  std::size_t width, double sigma) {
  if (plane.size() != height * width) throw DataError("gaussian_blur: plane size mismatch");
  if (sigma < 0.0) throw ConfigError("smoothing sigma must be non-negative");
  std::vector<double> src(plane.begin(), plane.end());
  if (sigma == 0.0) return src;
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  auto clamp = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, std::ptrdiff_t(n) - 1));
  };
  std::vector<double> tmp(plane.size());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        acc += kernel[t + radius] * src[y * width + clamp(std::ptrdiff_t(x) + t, width)];
      }
      tmp[y * width + x] = acc;
    }
  }
  std::vector<double> out(plane.size());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        acc += kernel[t + radius] * tmp[clamp(std::ptrdiff_t(y) + t, height) * width + x];
      }
      out[y * width + x] = acc;
    }
  }
  return out;
}

std::vector<double> pixels_from_grid(std::span<const double> grid, std::size_t grid_h,
                                     std::size_t grid_w, std::size_t out_h, std::size_t out_w,
                                     double sigma) {
  if (out_h < grid_h || out_w < grid_w) {
    throw DataError("score_pixels: image dims must be at least the feature dims");
  }
  const auto up = aggregation::resize_bilinear(grid, grid_h, grid_w, out_h, out_w);
  auto out = gaussian_blur(up, out_h, out_w, sigma);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<double> score_pixels(const aggregation::FeatureMap& u, const rbo::Discriminator& d,
                                 std::size_t out_h, std::size_t out_w, double sigma) {
  return pixels_from_grid(confidence_grid(u, d), u.height, u.width, out_h, out_w, sigma);
}

ScoreResult score(const aggregation::FeatureMap& u, const rbo::Discriminator& d,
                  std::size_t out_h, std::size_t out_w, double sigma) {
  const auto grid = confidence_grid(u, d);
  ScoreResult r;
  r.image_score = *std::max_element(grid.begin(), grid.end());
  r.height = out_h;
  r.width = out_w;
  r.pixel_map = pixels_from_grid(grid, u.height, u.width, out_h, out_w, sigma);
  return r;
}

}  // namespace pbas::scoring
