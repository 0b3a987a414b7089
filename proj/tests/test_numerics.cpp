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

#include <cmath>
#include <random>

#include "pbas/error.hpp"
#include "pbas/numerics.hpp"

using namespace pbas;
using namespace pbas::numerics;

namespace {

LinearLayer random_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  LinearLayer l(in, out);
  std::normal_distribution<double> g(0.0, 1.0);
  for (float& w : l.weight) w = static_cast<float>(g(rng));
  for (float& b : l.bias) b = static_cast<float>(g(rng));
  return l;
}

std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(g(rng));
  return v;
}

}  // namespace

TEST_CASE("tensor validates shape against payload") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), DataError);
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), DataError);
  CHECK_THROWS_AS(Tensor({2, 0}), DataError);
  const Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
  Tensor bad({1}, {std::nanf("")});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("linear_forward identity and affine cases") {
  LinearLayer id(2, 2);
  id.weight = {1, 0, 0, 1};
  const std::vector<float> x{1, 2};
  CHECK(linear_forward(id, x) == std::vector<float>{1, 2});

  LinearLayer zero(1, 1);
  zero.bias = {3};
  const std::vector<float> nine{9};
  CHECK(linear_forward(zero, nine) == std::vector<float>{3});

  const std::vector<float> wrong{1, 2, 3};
  CHECK_THROWS_AS(linear_forward(id, wrong), DataError);
}

TEST_CASE("linear_forward matches a triple-loop matmul oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const LinearLayer l = random_layer(4, 4, rng);
    Matrix x(7, 4);
    for (double& v : x.data) v = std::normal_distribution<double>(0, 1)(rng);
    const Matrix y = linear_forward(l, x);
    for (std::size_t r = 0; r < 7; ++r) {
      for (std::size_t i = 0; i < 4; ++i) {
        double s = l.bias[i];
        for (std::size_t k = 0; k < 4; ++k) s += double(l.weight[i * 4 + k]) * x(r, k);
        CHECK(y(r, i) == doctest::Approx(s).epsilon(1e-12));
      }
    }
    std::vector<float> xv(x.data.begin(), x.data.begin() + 4);
    const auto yv = linear_forward(l, xv);
    for (std::size_t i = 0; i < 4; ++i) CHECK(yv[i] == doctest::Approx(y(0, i)).epsilon(1e-6));
  }
}

TEST_CASE("linear_backward scalar chain rule and zero upstream") {
  LinearLayer l(1, 1);
  l.weight = {2};
  const std::vector<float> x{3}, up{1};
  const auto gx = linear_backward(l, x, up);
  CHECK(gx == std::vector<float>{2});
  CHECK(l.grad_weight[0] == 3.0f);
  CHECK(l.grad_bias[0] == 1.0f);

  std::mt19937_64 rng(3);
  LinearLayer r = random_layer(3, 5, rng);
  const auto xr = random_vector(3, rng);
  const std::vector<float> zero(5, 0.0f);
  const auto g0 = linear_backward(r, xr, zero);
  for (float v : g0) CHECK(v == 0.0f);
  for (float v : r.grad_weight) CHECK(v == 0.0f);
  for (float v : r.grad_bias) CHECK(v == 0.0f);
  CHECK_THROWS_AS(linear_backward(r, xr, std::vector<float>(4)), DataError);
}

TEST_CASE("linear gradients match central differences over 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    LinearLayer l = random_layer(3, 5, rng);
    Matrix x(4, 3);
    for (double& v : x.data) v = std::normal_distribution<double>(0, 1)(rng);
    Matrix probe(4, 5);
    for (double& v : probe.data) v = std::normal_distribution<double>(0, 1)(rng);
    // loss = sum probe .* (W x + b)
    auto loss = [&] {
      const Matrix y = linear_forward(l, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.data.size(); ++i) s += probe.data[i] * y.data[i];
      return s;
    };
    l.zero_grad();
    const Matrix gx = linear_backward(l, x, probe, true);
    std::vector<ParamBlock> blocks;
    append_blocks(l, "layer", blocks);
    const std::vector<std::vector<float>> analytic{l.grad_weight, l.grad_bias};
    const auto rep = finite_difference_check(loss, blocks, analytic, 1e-3);
    CHECK(rep.checked == 20);
    CHECK(rep.max_relative_error < 1e-4);

    // Input gradient against differences in x.
    for (std::size_t k = 0; k < x.data.size(); ++k) {
      const double orig = x.data[k];
      x.data[k] = orig + 1e-4;
      const double lp = loss();
      x.data[k] = orig - 1e-4;
      const double lm = loss();
      x.data[k] = orig;
      const double num = (lp - lm) / 2e-4;
      CHECK(std::abs(num - gx.data[k]) / (std::abs(num) + std::abs(gx.data[k]) + 1e-10) < 1e-4);
    }
  }
}

TEST_CASE("batched backward is independent of the chunk layout") {
  std::mt19937_64 rng(5);
  LinearLayer a = random_layer(6, 6, rng);
  LinearLayer b = a;
  Matrix x(700, 6), up(700, 6);
  for (double& v : x.data) v = std::normal_distribution<double>(0, 1)(rng);
  for (double& v : up.data) v = std::normal_distribution<double>(0, 1)(rng);
  set_num_threads(1);
  linear_backward(a, x, up, false);
  set_num_threads(4);
  linear_backward(b, x, up, false);
  CHECK(a.grad_weight == b.grad_weight);
  CHECK(a.grad_bias == b.grad_bias);
  set_num_threads(1);
}

TEST_CASE("finite_difference_check on a quadratic") {
  std::vector<float> p{0.5f, -1.25f, 2.0f};
  std::vector<float> g(3);
  for (int i = 0; i < 3; ++i) g[i] = 2.0f * p[i];
  std::vector<ParamBlock> blocks{{"p", p, g}};
  auto loss = [&] {
    double s = 0.0;
    for (float v : p) s += double(v) * v;
    return s;
  };
  const auto rep = finite_difference_check(loss, blocks, {g}, 1e-3);
  CHECK(rep.max_relative_error < 1e-6);
  CHECK(p == std::vector<float>{0.5f, -1.25f, 2.0f});

  auto bad = [&] { return p[0] > 0.5f ? std::numeric_limits<double>::infinity() : 0.0; };
  const auto rb = finite_difference_check(bad, blocks, {g}, 1e-3);
  CHECK(rb.nonfinite == 1);
}

TEST_CASE("adam: zero gradient, one hand-evaluated step, descent direction") {
  {
    std::vector<float> p{1.0f, -2.0f}, g{0.0f, 0.0f};
    AdamState s(0.1);
    std::vector<ParamBlock> b{{"p", p, g}};
    s.step(b);
    CHECK(p == std::vector<float>{1.0f, -2.0f});
  }
  {
    // m = 0.1, v = 0.001; bias corrected mhat = 1, vhat = 1 -> step lr / (1 + eps).
    std::vector<float> p{0.0f}, g{1.0f};
    AdamState s(0.1);
    std::vector<ParamBlock> b{{"p", p, g}};
    s.step(b);
    CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-7));
    CHECK(g[0] == 0.0f);
    CHECK(s.steps() == 1);
  }
  {
    std::vector<float> p{0.0f, 0.0f}, g(2);
    AdamState s(0.01);
    std::vector<ParamBlock> b{{"p", p, g}};
    for (int i = 0; i < 50; ++i) {
      g = {0.3f, -2.0f};
      s.step(b);
    }
    CHECK(p[0] < 0.0f);
    CHECK(p[1] > 0.0f);
  }
}

TEST_CASE("adam is deterministic and rejects non-finite gradients before updating") {
  auto run = [] {
    std::vector<float> p{0.2f, 0.7f}, g(2);
    AdamState s(0.05);
    std::vector<ParamBlock> b{{"p", p, g}};
    for (int i = 0; i < 10; ++i) {
      g = {std::sin(float(i)), std::cos(float(i))};
      s.step(b);
    }
    return p;
  };
  CHECK(run() == run());

  std::vector<float> p{1.0f}, q{2.0f}, gp{0.5f}, gq{std::nanf("")};
  AdamState s(0.1);
  std::vector<ParamBlock> b{{"good", p, gp}, {"bad.block", q, gq}};
  try {
    s.step(b);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("bad.block") != std::string::npos);
    CHECK(e.code() == ExitCode::kDivergence);
  }
  CHECK(p[0] == 1.0f);
  CHECK(q[0] == 2.0f);
}

TEST_CASE("normal_init uses 1/sqrt(in) deviation and zero bias") {
  std::mt19937_64 rng(9);
  const auto l = LinearLayer::normal_init(256, 256, rng);
  double s2 = 0.0;
  for (float w : l.weight) s2 += double(w) * w;
  const double var = s2 / static_cast<double>(l.weight.size());
  CHECK(var == doctest::Approx(1.0 / 256.0).epsilon(0.02));
  for (float b : l.bias) CHECK(b == 0.0f);
  CHECK(l.all_finite());
}
