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

// Threshold-free evaluation: AUROC, average precision and per-region overlap.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pbas::metrics {

inline constexpr double kDefaultFprLimit = 0.3;
inline constexpr std::size_t kMaxProThresholds = 500;

// Rank-based (Mann-Whitney) AUROC; ties count 1/2. Labels are 0/1.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Step-interpolated area under precision-recall: sum (R_k - R_{k-1}) P_k over
// descending unique-score thresholds.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

// One scored image with its binary ground-truth mask (nonzero = anomalous).
struct ScoredMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::span<const double> scores;
  std::span<const std::uint8_t> mask;
};

// 8-connected components of a mask. Background pixels get -1; components are
// numbered 0..count-1 in raster order of their first pixel.
struct Components {
  std::vector<int> label;
  std::vector<std::size_t> sizes;
};
Components connected_components(std::span<const std::uint8_t> mask, std::size_t height,
                                std::size_t width);

struct ProPoint {
  double threshold;
  double fpr;
  double pro;
};

// (FPR, mean per-region coverage) for a descending threshold sweep, starting
// at (0, 0). Uses every unique score when there are at most `max_thresholds`,
// otherwise quantile-spaced unique scores (always including the minimum).
std::vector<ProPoint> pro_curve(std::span<const ScoredMask> maps,
                                std::size_t max_thresholds = kMaxProThresholds);

// Trapezoidal area under the curve up to fpr_limit, divided by fpr_limit.
double integrate_pro(std::span<const ProPoint> curve, double fpr_limit);

double pro_score(std::span<const ScoredMask> maps, double fpr_limit = kDefaultFprLimit,
                 std::size_t max_thresholds = kMaxProThresholds);

struct EvalReport {
  double image_auroc = 0.0;
  double image_ap = 0.0;
  bool has_pixel_metrics = false;
  double pixel_auroc = 0.0;
  double pixel_ap = 0.0;
  double pixel_pro = 0.0;
};

}  // namespace pbas::metrics
