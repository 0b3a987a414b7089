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
#include "pbas/aggregation.hpp"

#include <algorithm>
#include <string>

#include "pbas/error.hpp"

namespace pbas::aggregation {

const char* role_name(Role r) {
  switch (r) {
    case Role::kRaw: return "raw";
    case Role::kAggregated: return "aggregated";
    case Role::kDispersed: return "dispersed";
    case Role::kProjected: return "projected";
    case Role::kSynthetic: return "synthetic";
  }
  return "unknown";
}

FeatureMap::FeatureMap(std::size_t h, std::size_t w, std::size_t c, Role r)
    : height(h), width(w), channels(c), role(r), data(h * w * c, 0.0f) {
  if (h == 0 || w == 0 || c == 0) throw DataError("feature map dims must be positive");
}

FeatureMap FeatureMap::from_tensor(const numerics::Tensor& t, Role r) {
  if (t.ndim() != 3) {
    throw DataError("feature tensor must be 3-D (H, W, C), got " + std::to_string(t.ndim()) +
                    " dims");
  }
  FeatureMap m(t.dims()[0], t.dims()[1], t.dims()[2], r);
  std::copy(t.data().begin(), t.data().end(), m.data.begin());
  return m;
}

numerics::Tensor FeatureMap::to_tensor() const {
  return numerics::Tensor({height, width, channels}, data);
}

void FeatureMap::advance_role(Role next) {
  if (static_cast<int>(next) < static_cast<int>(role)) {
    throw DataError(std::string("illegal role transition ") + role_name(role) + " -> " +
                    role_name(next));
  }
  role = next;
}

std::vector<std::pair<std::size_t, std::size_t>> neighborhood_indices(
    std::size_t h, std::size_t w, std::size_t p, std::size_t height, std::size_t width) {
  if (p % 2 == 0) throw ConfigError("neighborhood size p must be odd, got " + std::to_string(p));
  if (h >= height || w >= width) throw DataError("neighborhood center outside the map");
  const auto half = static_cast<std::ptrdiff_t>(p / 2);
  auto clamp = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, std::ptrdiff_t(n) - 1));
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(p * p);
  for (std::ptrdiff_t da = -half; da <= half; ++da) {
    for (std::ptrdiff_t db = -half; db <= half; ++db) {
      out.emplace_back(clamp(std::ptrdiff_t(h) + da, height),
                       clamp(std::ptrdiff_t(w) + db, width));
    }
  }
  return out;
}

FeatureMap aggregate(const FeatureMap& raw, std::size_t p) {
  if (raw.role != Role::kRaw) {
    throw DataError(std::string("aggregate expects a raw map, got ") + role_name(raw.role));
  }
  if (p % 2 == 0) throw ConfigError("neighborhood size p must be odd, got " + std::to_string(p));
  FeatureMap out(raw.height, raw.width, raw.channels, Role::kAggregated);
  const double inv = 1.0 / static_cast<double>(p * p);
  numerics::parallel_for(raw.height, [&](std::size_t h) {
    std::vector<double> acc(raw.channels);
    for (std::size_t w = 0; w < raw.width; ++w) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (auto [a, b] : neighborhood_indices(h, w, p, raw.height, raw.width)) {
        auto v = raw.at(a, b);
        for (std::size_t c = 0; c < raw.channels; ++c) acc[c] += v[c];
      }
      auto o = out.at(h, w);
      for (std::size_t c = 0; c < raw.channels; ++c) o[c] = static_cast<float>(acc[c] * inv);
    }
  });
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> corner_aligned_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (in == 1 || out == 1) {
      taps[i] = {0, 0, 0.0};
      continue;
    }
    const double src = static_cast<double>(i) * static_cast<double>(in - 1) /
                       static_cast<double>(out - 1);
    auto lo = static_cast<std::size_t>(src);
    if (lo >= in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

FeatureMap resize_bilinear(const FeatureMap& map, std::size_t out_h, std::size_t out_w) {
  if (out_h == map.height && out_w == map.width) return map;
  FeatureMap out(out_h, out_w, map.channels, map.role);
  const auto ty = corner_aligned_taps(map.height, out_h);
  const auto tx = corner_aligned_taps(map.width, out_w);
  const std::size_t C = map.channels;
  numerics::parallel_for(out_h, [&](std::size_t y) {
    const auto& [y0, y1, fy] = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& [x0, x1, fx] = tx[x];
      auto a = map.at(y0, x0), b = map.at(y0, x1), c = map.at(y1, x0), d = map.at(y1, x1);
      auto o = out.at(y, x);
      for (std::size_t k = 0; k < C; ++k) {
        const double top = a[k] + fx * (double(b[k]) - a[k]);
        const double bot = c[k] + fx * (double(d[k]) - c[k]);
        o[k] = static_cast<float>(top + fy * (bot - top));
      }
    }
  });
  return out;
}

std::vector<double> resize_bilinear(std::span<const double> plane, std::size_t in_h,
                                    std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  if (plane.size() != in_h * in_w) throw DataError("resize_bilinear: plane size mismatch");
  std::vector<double> out(out_h * out_w);
  const auto ty = corner_aligned_taps(in_h, out_h);
  const auto tx = corner_aligned_taps(in_w, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto& [y0, y1, fy] = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& [x0, x1, fx] = tx[x];
      const double a = plane[y0 * in_w + x0], b = plane[y0 * in_w + x1];
      const double c = plane[y1 * in_w + x0], d = plane[y1 * in_w + x1];
      const double top = a + fx * (b - a);
      const double bot = c + fx * (d - c);
      out[y * out_w + x] = top + fy * (bot - top);
    }
  }
  return out;
}

std::vector<ChannelSlice> channel_slices(const std::map<int, FeatureMap>& levels) {
  std::vector<ChannelSlice> out;
  std::size_t offset = 0;
  for (const auto& [level, map] : levels) {
    out.push_back({level, offset, map.channels});
    offset += map.channels;
  }
  return out;
}

FeatureMap build_dispersed(const std::map<int, FeatureMap>& levels) {
  if (levels.empty()) throw ConfigError("build_dispersed needs at least one hierarchy level");
  const FeatureMap& first = levels.begin()->second;
  const std::size_t H = first.height;
  const std::size_t W = first.width;
  std::size_t total = 0;
  for (const auto& [level, map] : levels) {
    if (map.role != Role::kAggregated) {
      throw DataError("build_dispersed expects aggregated maps (level " + std::to_string(level) +
                      " is " + role_name(map.role) + ")");
    }
    total += map.channels;
  }
  FeatureMap out(H, W, total, Role::kDispersed);
  std::size_t offset = 0;
  for (const auto& [level, map] : levels) {
    const FeatureMap resized = resize_bilinear(map, H, W);
    for (std::size_t i = 0; i < H * W; ++i) {
      auto src = resized.cell(i);
      std::copy(src.begin(), src.end(), out.data.begin() + i * total + offset);
    }
    offset += map.channels;
  }
  return out;
}

}  // namespace pbas::aggregation
