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
#include "pbas/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pbas/error.hpp"

namespace pbas::numerics {
namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw DataError("tensor must have at least one dimension");
  for (std::size_t d : dims) {
    if (d == 0) throw DataError("tensor dimensions must be positive");
  }
}

// Rows per partial sum in the batched weight-gradient reduction.
constexpr std::size_t kReduceChunk = 256;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(product(dims_), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (product(dims_) != data_.size()) {
    throw DataError("tensor data length " + std::to_string(data_.size()) +
                    " does not match dims product " + std::to_string(product(dims_)));
  }
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

LinearLayer::LinearLayer(std::size_t in, std::size_t out)
    : in_dim(in),
      out_dim(out),
      weight(in * out, 0.0f),
      bias(out, 0.0f),
      grad_weight(in * out, 0.0f),
      grad_bias(out, 0.0f) {
  if (in == 0 || out == 0) throw DataError("linear layer dims must be positive");
}

LinearLayer LinearLayer::normal_init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  LinearLayer layer(in, out);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  for (float& w : layer.weight) w = static_cast<float>(dist(rng));
  return layer;
}

void LinearLayer::zero_grad() {
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0f);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

double LinearLayer::squared_norm() const {
  return numerics::squared_norm(weight) + numerics::squared_norm(bias);
}

bool LinearLayer::all_finite() const {
  auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
  };
  return finite(weight) && finite(bias);
}

std::vector<float> linear_forward(const LinearLayer& layer, std::span<const float> x) {
  if (x.size() != layer.in_dim) {
    throw DataError("linear_forward: input length " + std::to_string(x.size()) +
                    " != in_dim " + std::to_string(layer.in_dim));
  }
  std::vector<float> y(layer.out_dim);
  for (std::size_t i = 0; i < layer.out_dim; ++i) {
    double acc = layer.bias[i];
    const float* w = layer.weight.data() + i * layer.in_dim;
    for (std::size_t k = 0; k < layer.in_dim; ++k) acc += double(w[k]) * double(x[k]);
    y[i] = static_cast<float>(acc);
  }
  return y;
}

std::vector<float> linear_backward(LinearLayer& layer, std::span<const float> x,
                                   std::span<const float> upstream) {
  if (x.size() != layer.in_dim || upstream.size() != layer.out_dim) {
    throw DataError("linear_backward: dimension mismatch");
  }
  std::vector<double> dx(layer.in_dim, 0.0);
  for (std::size_t i = 0; i < layer.out_dim; ++i) {
    const double g = upstream[i];
    const float* w = layer.weight.data() + i * layer.in_dim;
    float* gw = layer.grad_weight.data() + i * layer.in_dim;
    for (std::size_t k = 0; k < layer.in_dim; ++k) {
      gw[k] = static_cast<float>(gw[k] + g * x[k]);
      dx[k] += g * w[k];
    }
    layer.grad_bias[i] = static_cast<float>(layer.grad_bias[i] + g);
  }
  return {dx.begin(), dx.end()};
}

Matrix linear_forward(const LinearLayer& layer, const Matrix& x) {
  if (x.cols != layer.in_dim) {
    throw DataError("linear_forward: input width " + std::to_string(x.cols) +
                    " != in_dim " + std::to_string(layer.in_dim));
  }
  const std::size_t in = layer.in_dim;
  const std::size_t out = layer.out_dim;
  // Transposed copy so the inner loop runs over outputs (contiguous, no reassociation).
  std::vector<double> wt(in * out);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t k = 0; k < in; ++k) wt[k * out + i] = layer.weight[i * in + k];
  }
  Matrix y(x.rows, out);
  parallel_for(x.rows, [&](std::size_t r) {
    double* acc = y.data.data() + r * out;
    const double* xr = x.data.data() + r * in;
    for (std::size_t i = 0; i < out; ++i) acc[i] = layer.bias[i];
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = xr[k];
      const double* w = wt.data() + k * out;
      for (std::size_t i = 0; i < out; ++i) acc[i] += xk * w[i];
    }
  });
  return y;
}

Matrix linear_backward(LinearLayer& layer, const Matrix& x, const Matrix& upstream,
                       bool want_input_grad) {
  const std::size_t in = layer.in_dim;
  const std::size_t out = layer.out_dim;
  if (x.cols != in || upstream.cols != out || x.rows != upstream.rows) {
    throw DataError("linear_backward: dimension mismatch");
  }
  const std::size_t rows = x.rows;
  const std::size_t chunks = (rows + kReduceChunk - 1) / kReduceChunk;
  std::vector<double> partial_w(chunks * out * in, 0.0);
  std::vector<double> partial_b(chunks * out, 0.0);
  parallel_for(chunks, [&](std::size_t c) {
    double* gw = partial_w.data() + c * out * in;
    double* gb = partial_b.data() + c * out;
    const std::size_t end = std::min(rows, (c + 1) * kReduceChunk);
    for (std::size_t r = c * kReduceChunk; r < end; ++r) {
      const double* xr = x.data.data() + r * in;
      const double* gr = upstream.data.data() + r * out;
      for (std::size_t i = 0; i < out; ++i) {
        const double g = gr[i];
        gb[i] += g;
        double* row = gw + i * in;
        for (std::size_t k = 0; k < in; ++k) row[k] += g * xr[k];
      }
    }
  });
  for (std::size_t j = 0; j < out * in; ++j) {
    double s = layer.grad_weight[j];
    for (std::size_t c = 0; c < chunks; ++c) s += partial_w[c * out * in + j];
    layer.grad_weight[j] = static_cast<float>(s);
  }
  for (std::size_t i = 0; i < out; ++i) {
    double s = layer.grad_bias[i];
    for (std::size_t c = 0; c < chunks; ++c) s += partial_b[c * out + i];
    layer.grad_bias[i] = static_cast<float>(s);
  }
  if (!want_input_grad) return {};

  std::vector<double> w(layer.weight.begin(), layer.weight.end());
  Matrix dx(rows, in);
  parallel_for(rows, [&](std::size_t r) {
    double* acc = dx.data.data() + r * in;
    const double* gr = upstream.data.data() + r * out;
    for (std::size_t i = 0; i < out; ++i) {
      const double g = gr[i];
      const double* wr = w.data() + i * in;
      for (std::size_t k = 0; k < in; ++k) acc[k] += g * wr[k];
    }
  });
  return dx;
}

void append_blocks(LinearLayer& layer, const std::string& prefix,
                   std::vector<ParamBlock>& out) {
  out.push_back({prefix + ".weight", layer.weight, layer.grad_weight});
  out.push_back({prefix + ".bias", layer.bias, layer.grad_bias});
}

AdamState::AdamState(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

void AdamState::step(std::span<const ParamBlock> blocks) {
  if (m_.empty()) {
    for (const auto& b : blocks) {
      m_.emplace_back(b.value.size(), 0.0);
      v_.emplace_back(b.value.size(), 0.0);
    }
  }
  if (m_.size() != blocks.size()) throw DataError("adam: parameter block count changed");
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const auto& b = blocks[j];
    if (b.value.size() != m_[j].size() || b.grad.size() != b.value.size()) {
      throw DataError("adam: shape mismatch in block " + b.name);
    }
    for (float g : b.grad) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in " + b.name);
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const auto& b = blocks[j];
    auto& m = m_[j];
    auto& v = v_[j];
    for (std::size_t k = 0; k < b.value.size(); ++k) {
      const double g = b.grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      b.value[k] = static_cast<float>(b.value[k] - lr_ * mhat / (std::sqrt(vhat) + eps_));
      b.grad[k] = 0.0f;
    }
  }
}

GradientCheckReport finite_difference_check(const std::function<double()>& loss,
                                            std::span<const ParamBlock> blocks,
                                            const std::vector<std::vector<float>>& analytic,
                                            double h, std::size_t samples_per_block,
                                            std::uint64_t seed) {
  if (analytic.size() != blocks.size()) {
    throw DataError("finite_difference_check: analytic gradient block count mismatch");
  }
  GradientCheckReport report;
  std::mt19937_64 rng(seed);
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const auto& b = blocks[j];
    std::vector<std::size_t> coords(b.value.size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (samples_per_block > 0 && samples_per_block < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(samples_per_block);
    }
    for (std::size_t k : coords) {
      const float original = b.value[k];
      const float plus = static_cast<float>(original + h);
      const float minus = static_cast<float>(original - h);
      b.value[k] = plus;
      const double lp = loss();
      b.value[k] = minus;
      const double lm = loss();
      b.value[k] = original;
      ++report.checked;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        ++report.nonfinite;
        continue;
      }
      const double numeric = (lp - lm) / (double(plus) - double(minus));
      const double a = analytic[j][k];
      const double rel =
          std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + kGradientCheckEpsilon);
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_block = b.name;
        report.worst_index = k;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += double(x) * double(x);
  return s;
}

}  // namespace pbas::numerics
