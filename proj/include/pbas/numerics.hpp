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

// Dense-tensor storage, linear layers with manual backward, Adam, and a
// central-difference gradient checker. Storage is f32; every reduction
// (dot products, means, gradient sums) accumulates in f64.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pbas::numerics {

class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor. Every dim must be positive.
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<float> data);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t ndim() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

// Row-major f64 matrix holding a batch of activation vectors (one per row).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// y = W x + b with W stored out_dim x in_dim row-major. Gradients accumulate
// (+=) until zero_grad() so several loss terms can share one backward pass.
struct LinearLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<float> weight;
  std::vector<float> bias;
  std::vector<float> grad_weight;
  std::vector<float> grad_bias;

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out);

  // Weights ~ N(0, 1/sqrt(in)), biases zero.
  static LinearLayer normal_init(std::size_t in, std::size_t out, std::mt19937_64& rng);

  void zero_grad();
  double squared_norm() const;
  bool all_finite() const;
};

std::vector<float> linear_forward(const LinearLayer& layer, std::span<const float> x);

// Accumulates grad_weight += upstream (x) x^T and grad_bias += upstream, and
// returns W^T upstream.
std::vector<float> linear_backward(LinearLayer& layer, std::span<const float> x,
                                   std::span<const float> upstream);

// Batched variants over the rows of `x`. The batched backward produces
// identical gradients regardless of thread count: rows are summed in fixed
// chunks and the chunk partials are combined in order.
Matrix linear_forward(const LinearLayer& layer, const Matrix& x);
Matrix linear_backward(LinearLayer& layer, const Matrix& x, const Matrix& upstream,
                       bool want_input_grad = true);

// A named view of one parameter array and its gradient slot.
struct ParamBlock {
  std::string name;
  std::span<float> value;
  std::span<float> grad;
};

// Parameter views of a layer, named "<prefix>.weight" and "<prefix>.bias".
void append_blocks(LinearLayer& layer, const std::string& prefix,
                   std::vector<ParamBlock>& out);

class AdamState {
 public:
  explicit AdamState(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                     double epsilon = 1e-8);

  double learning_rate() const noexcept { return lr_; }
  std::int64_t steps() const noexcept { return step_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

  // One bias-corrected Adam update; gradients are zeroed afterwards. Throws
  // DivergenceError naming the block if any gradient is non-finite (no
  // parameter is touched in that case).
  void step(std::span<const ParamBlock> blocks);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

inline void adam_step(AdamState& state, std::span<const ParamBlock> blocks) {
  state.step(blocks);
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t nonfinite = 0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares `analytic` gradients (one span per block, same order as `blocks`)
// against central differences of `loss`. The step actually taken is measured
// from the stored f32 values, so rounding of p +/- h does not bias the
// estimate. `samples_per_block` = 0 checks every coordinate.
GradientCheckReport finite_difference_check(const std::function<double()>& loss,
                                            std::span<const ParamBlock> blocks,
                                            const std::vector<std::vector<float>>& analytic,
                                            double h, std::size_t samples_per_block = 0,
                                            std::uint64_t seed = 0);

inline constexpr double kGradientCheckEpsilon = 1e-10;

// Threading helpers.
void set_num_threads(int n);
int num_threads();

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

// f64 dot product accumulated in index order.
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const float> v);

}  // namespace pbas::numerics
