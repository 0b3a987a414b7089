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
#include <doctest.h>

#include <algorithm>
#include <set>

#include "pbas/aggregation.hpp"
#include "pbas/error.hpp"
#include "test_util.hpp"

using namespace pbas;
using namespace pbas::aggregation;
using pbas::testing::random_map;

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

TEST_CASE("neighborhood_indices windows and clamping") {
  // Zero-based: cell (2,2) of a 5x5 map.
  const auto inner = neighborhood_indices(2, 2, 3, 5, 5);
  CHECK(inner.size() == 9);
  std::set<std::pair<std::size_t, std::size_t>> s(inner.begin(), inner.end());
  for (std::size_t a = 1; a <= 3; ++a) {
    for (std::size_t b = 1; b <= 3; ++b) CHECK(s.count({a, b}) == 1);
  }
  CHECK(neighborhood_indices(4, 1, 1, 5, 5) == Pairs{{4, 1}});
  const auto corner = neighborhood_indices(0, 0, 3, 5, 5);
  CHECK(corner.size() == 9);
  for (auto [a, b] : corner) {
    CHECK(a <= 1);
    CHECK(b <= 1);
  }
  CHECK(std::count(corner.begin(), corner.end(), std::pair<std::size_t, std::size_t>{0, 0}) == 4);
  CHECK_THROWS_AS(neighborhood_indices(0, 0, 2, 5, 5), ConfigError);
  CHECK_THROWS_AS(neighborhood_indices(0, 0, 0, 5, 5), ConfigError);
  CHECK(neighborhood_indices(0, 0, 5, 1, 1).size() == 25);
}

TEST_CASE("aggregate: constants, identity and mean of 1..9") {
  FeatureMap c(4, 5, 2);
  std::fill(c.data.begin(), c.data.end(), 1.5f);
  const auto ac = aggregate(c, 3);
  CHECK(ac.role == Role::kAggregated);
  for (float v : ac.data) CHECK(v == 1.5f);

  std::mt19937_64 rng(1);
  const auto r = random_map(3, 4, 3, rng);
  CHECK(aggregate(r, 1).data == r.data);

  FeatureMap nine(3, 3, 1);
  for (int i = 0; i < 9; ++i) nine.data[i] = float(i + 1);
  CHECK(aggregate(nine, 3).at(1, 1)[0] == doctest::Approx(5.0));
  // Corner: clamped window over {1,2,4,5} with weights 4,2,2,1.
  CHECK(aggregate(nine, 3).at(0, 0)[0] == doctest::Approx((4 * 1 + 2 * 2 + 2 * 4 + 5) / 9.0));

  FeatureMap wrong = r;
  wrong.role = Role::kDispersed;
  CHECK_THROWS_AS(aggregate(wrong, 3), DataError);
  CHECK_THROWS_AS(aggregate(r, 4), ConfigError);
}

TEST_CASE("aggregate commutes with transposition and stays within range") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t H = 2 + rng() % 6, W = 2 + rng() % 6, C = 1 + rng() % 3;
    const auto m = random_map(H, W, C, rng);
    FeatureMap t(W, H, C);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        std::copy(m.at(h, w).begin(), m.at(h, w).end(), t.at(w, h).begin());
      }
    }
    for (std::size_t p : {1u, 3u, 5u}) {
      const auto am = aggregate(m, p);
      const auto at = aggregate(t, p);
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
          for (std::size_t c = 0; c < C; ++c) {
            CHECK(am.at(h, w)[c] == doctest::Approx(at.at(w, h)[c]).epsilon(1e-6));
          }
        }
      }
      for (std::size_t c = 0; c < C; ++c) {
        float lo = 1e30f, hi = -1e30f;
        for (std::size_t i = 0; i < m.cells(); ++i) {
          lo = std::min(lo, m.cell(i)[c]);
          hi = std::max(hi, m.cell(i)[c]);
        }
        for (std::size_t i = 0; i < am.cells(); ++i) {
          CHECK(am.cell(i)[c] >= lo);
          CHECK(am.cell(i)[c] <= hi);
        }
      }
    }
  }
}

TEST_CASE("bilinear resize preserves corners and constants") {
  FeatureMap m(2, 2, 1, Role::kAggregated);
  m.data = {1, 2, 3, 4};
  const auto up = resize_bilinear(m, 4, 4);
  CHECK(up.at(0, 0)[0] == 1.0f);
  CHECK(up.at(0, 3)[0] == 2.0f);
  CHECK(up.at(3, 0)[0] == 3.0f);
  CHECK(up.at(3, 3)[0] == 4.0f);
  // Corner-aligned: output row 1 sits at source coordinate 1/3.
  CHECK(up.at(1, 0)[0] == doctest::Approx(1.0 + 2.0 / 3.0));
  CHECK(up.at(1, 1)[0] == doctest::Approx(1.0 + 2.0 / 3.0 + 1.0 / 3.0));

  const std::vector<double> plane(6, 0.7);
  for (double v : resize_bilinear(plane, 2, 3, 9, 7)) CHECK(v == doctest::Approx(0.7));
  const std::vector<double> one{5.0};
  for (double v : resize_bilinear(one, 1, 1, 3, 3)) CHECK(v == 5.0);
}

TEST_CASE("build_dispersed shapes, slices and errors") {
  std::mt19937_64 rng(3);
  auto a = aggregate(random_map(4, 4, 2, rng), 3);
  auto b = aggregate(random_map(2, 2, 3, rng), 3);
  std::map<int, FeatureMap> levels{{3, b}, {2, a}};
  const auto t = build_dispersed(levels);
  CHECK(t.role == Role::kDispersed);
  CHECK(t.height == 4);
  CHECK(t.width == 4);
  CHECK(t.channels == 5);
  const auto slices = channel_slices(levels);
  REQUIRE(slices.size() == 2);
  CHECK(slices[0].level == 2);
  CHECK(slices[0].offset == 0);
  CHECK(slices[0].count == 2);
  CHECK(slices[1].level == 3);
  CHECK(slices[1].offset == 2);
  CHECK(slices[1].count == 3);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(t.cell(i)[0] == a.cell(i)[0]);
    CHECK(t.cell(i)[1] == a.cell(i)[1]);
  }
  CHECK(t.at(3, 3)[2] == b.at(1, 1)[0]);

  const auto single = build_dispersed({{2, a}});
  CHECK(single.data == a.data);
  CHECK_THROWS_AS(build_dispersed({}), ConfigError);
  auto raw = random_map(4, 4, 2, rng);
  CHECK_THROWS_AS(build_dispersed({{2, raw}}), DataError);
}

TEST_CASE("feature map roles only move forward") {
  FeatureMap m(1, 1, 1);
  m.advance_role(Role::kAggregated);
  m.advance_role(Role::kProjected);
  CHECK_THROWS_AS(m.advance_role(Role::kRaw), DataError);
  const auto t = m.to_tensor();
  CHECK(t.dims() == std::vector<std::size_t>{1, 1, 1});
  CHECK_THROWS_AS(FeatureMap::from_tensor(numerics::Tensor({2, 2})), DataError);
}
