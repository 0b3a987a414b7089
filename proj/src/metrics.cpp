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
#include "pbas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <deque>
#include <numeric>
#include <string>

#include "pbas/error.hpp"

namespace pbas::metrics {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DataError(std::string(what) + ": scores and labels differ in length");
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size(), "auroc");
  std::size_t pos = 0;
  for (auto l : labels) pos += l != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricUndefinedError("auroc needs both classes");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Sum of (mid)ranks of the positives, 1-based.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] != 0) rank_sum += mid;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size(), "average_precision");
  std::size_t pos = 0;
  for (auto l : labels) pos += l != 0;
  if (pos == 0) throw MetricUndefinedError("average precision needs at least one positive");
  const auto idx = order_descending(scores);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += labels[idx[j]] != 0;
      ++seen;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

Components connected_components(std::span<const std::uint8_t> mask, std::size_t height,
                                std::size_t width) {
  if (mask.size() != height * width) throw DataError("connected_components: mask size mismatch");
  Components out;
  out.label.assign(mask.size(), -1);
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (mask[start] == 0 || out.label[start] >= 0) continue;
    const int id = static_cast<int>(out.sizes.size());
    std::size_t size = 0;
    out.label[start] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      ++size;
      const auto y = static_cast<std::ptrdiff_t>(p / width);
      const auto x = static_cast<std::ptrdiff_t>(p % width);
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t ny = y + dy, nx = x + dx;
          if (ny < 0 || nx < 0 || ny >= std::ptrdiff_t(height) || nx >= std::ptrdiff_t(width)) {
            continue;
          }
          const std::size_t q = static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx);
          if (mask[q] != 0 && out.label[q] < 0) {
            out.label[q] = id;
            queue.push_back(q);
          }
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

std::vector<ProPoint> pro_curve(std::span<const ScoredMask> maps, std::size_t max_thresholds) {
  if (max_thresholds < 2) throw ConfigError("PRO needs at least two thresholds");
  // Flatten every pixel: score, global component id (-1 = normal pixel).
  std::vector<double> score;
  std::vector<int> region;
  std::vector<std::size_t> region_size;
  for (const auto& m : maps) {
    if (m.scores.size() != m.height * m.width || m.mask.size() != m.scores.size()) {
      throw DataError("pro: score map and mask sizes differ");
    }
    const Components cc = connected_components(m.mask, m.height, m.width);
    const int base = static_cast<int>(region_size.size());
    region_size.insert(region_size.end(), cc.sizes.begin(), cc.sizes.end());
    for (std::size_t i = 0; i < m.scores.size(); ++i) {
      score.push_back(m.scores[i]);
      region.push_back(cc.label[i] < 0 ? -1 : base + cc.label[i]);
    }
  }
  if (region_size.empty()) throw MetricUndefinedError("PRO needs at least one anomalous region");
  std::size_t negatives = 0;
  for (int r : region) negatives += r < 0;
  if (negatives == 0) throw MetricUndefinedError("PRO needs normal pixels for the FPR axis");

  const auto order = order_descending(score);
  std::vector<double> unique;
  for (std::size_t i : order) {
    if (unique.empty() || score[i] != unique.back()) unique.push_back(score[i]);
  }
  std::vector<double> thresholds;
  if (unique.size() <= max_thresholds) {
    thresholds = unique;
  } else {
    const double step = static_cast<double>(unique.size() - 1) /
                        static_cast<double>(max_thresholds - 1);
    for (std::size_t t = 0; t < max_thresholds; ++t) {
      const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(t) * step));
      if (thresholds.empty() || unique[k] != thresholds.back()) thresholds.push_back(unique[k]);
    }
  }

  const double k_regions = static_cast<double>(region_size.size());
  std::vector<ProPoint> curve;
  curve.reserve(thresholds.size() + 1);
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t next = 0;
  std::size_t fp = 0;
  double coverage = 0.0;
  for (double th : thresholds) {
    while (next < order.size() && score[order[next]] >= th) {
      const int r = region[order[next]];
      if (r < 0) {
        ++fp;
      } else {
        coverage += 1.0 / static_cast<double>(region_size[static_cast<std::size_t>(r)]);
      }
      ++next;
    }
    curve.push_back({th, static_cast<double>(fp) / static_cast<double>(negatives),
                     coverage / k_regions});
  }
  return curve;
}

double integrate_pro(std::span<const ProPoint> curve, double fpr_limit) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ConfigError("fpr_limit must be in (0, 1]");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double x0 = curve[i - 1].fpr, y0 = curve[i - 1].pro;
    double x1 = curve[i].fpr, y1 = curve[i].pro;
    if (x0 >= fpr_limit) break;
    if (x1 > fpr_limit) {
      y1 = y0 + (y1 - y0) * (fpr_limit - x0) / (x1 - x0);
      x1 = fpr_limit;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / fpr_limit;
}

double pro_score(std::span<const ScoredMask> maps, double fpr_limit, std::size_t max_thresholds) {
  const auto curve = pro_curve(maps, max_thresholds);
  return integrate_pro(curve, fpr_limit);
}

}  // namespace pbas::metrics
