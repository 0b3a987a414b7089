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

// Direct oracles for the ranking and region-overlap metrics: pairwise AUROC,
// a threshold-sweep AP and a flood-fill PRO.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace pbas::testing {

using Labels = std::vector<std::uint8_t>;


double pairwise_auroc(const std::vector<double>& s, const Labels& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

double sweep_ap(const std::vector<double>& s, const Labels& y) {
  std::set<double, std::greater<>> th(s.begin(), s.end());
  double pos = 0;
  for (auto v : y) pos += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : th) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    }
    const double recall = tp / pos;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return ap;
}

// Flood-fill labelling and a threshold-by-threshold PRO sweep.
double brute_pro(const std::vector<std::vector<double>>& maps, const std::vector<Labels>& masks,
                 std::size_t H, std::size_t W, double limit) {
  std::vector<std::vector<std::size_t>> regions;  // pixel indices per region, tagged by image
  std::vector<std::size_t> region_image;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    std::vector<bool> seen(H * W, false);
    for (std::size_t start = 0; start < H * W; ++start) {
      if (!masks[m][start] || seen[start]) continue;
      std::vector<std::size_t> px;
      std::deque<std::size_t> q{start};
      seen[start] = true;
      while (!q.empty()) {
        const auto p = q.front();
        q.pop_front();
        px.push_back(p);
        const int y = int(p / W), x = int(p % W);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= int(H) || xx >= int(W)) continue;
            const auto n = std::size_t(yy) * W + std::size_t(xx);
            if (masks[m][n] && !seen[n]) {
              seen[n] = true;
              q.push_back(n);
            }
          }
        }
      }
      regions.push_back(px);
      region_image.push_back(m);
    }
  }
  std::set<double, std::greater<>> th;
  double neg = 0;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    th.insert(maps[m].begin(), maps[m].end());
    for (auto v : masks[m]) neg += !v;
  }
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (double t : th) {
    double fp = 0, cov = 0;
    for (std::size_t m = 0; m < maps.size(); ++m) {
      for (std::size_t i = 0; i < H * W; ++i) fp += !masks[m][i] && maps[m][i] >= t;
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
      double hit = 0;
      for (auto p : regions[r]) hit += maps[region_image[r]][p] >= t;
      cov += hit / double(regions[r].size());
    }
    pts.emplace_back(fp / neg, cov / double(regions.size()));
  }
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    auto [x0, y0] = pts[i - 1];
    auto [x1, y1] = pts[i];
    if (x0 >= limit) break;
    if (x1 > limit) {
      y1 = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
      x1 = limit;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / limit;
}

// Random blobs on a 16x16 grid.
Labels random_mask(std::mt19937_64& rng, std::size_t H, std::size_t W) {
  Labels m(H * W, 0);
  std::uniform_int_distribution<int> pos(0, int(H) - 1), size(1, 4), count(1, 3);
  const int n = count(rng);
  for (int b = 0; b < n; ++b) {
    const int y0 = pos(rng), x0 = pos(rng), h = size(rng), w = size(rng);
    for (int y = y0; y < std::min<int>(H, y0 + h); ++y) {
      for (int x = x0; x < std::min<int>(W, x0 + w); ++x) m[y * W + x] = 1;
    }
  }
  return m;
}

}  // namespace pbas::testing
