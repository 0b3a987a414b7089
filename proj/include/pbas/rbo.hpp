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

// Refined boundary optimization: the three-layer discriminator, BCE losses on
// projected (normal) and synthetic (anomalous) vectors, and one step of the
// joint objective
//
//   total = L_c + gamma |theta|^2 + L_n + L_a + delta (|theta|^2 + |psi|^2)
//
// where theta are the projector parameters and psi the discriminator's.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pbas/abl.hpp"
#include "pbas/afs.hpp"
#include "pbas/modes.hpp"
#include "pbas/numerics.hpp"

namespace pbas::rbo {

using numerics::Matrix;

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBceClamp = 1e-7;

// C -> C (leaky ReLU) -> C (leaky ReLU) -> 1 (sigmoid).
struct Discriminator {
  numerics::LinearLayer hidden1;
  numerics::LinearLayer hidden2;
  numerics::LinearLayer output;

  static Discriminator normal_init(std::size_t channels, std::mt19937_64& rng);

  std::size_t channels() const noexcept { return hidden1.in_dim; }
  double squared_norm() const;
  void zero_grad();
  std::vector<numerics::ParamBlock> blocks();
};

// Activations kept by forward() for backward().
struct ForwardCache {
  Matrix input;
  Matrix pre1, act1, pre2, act2;
  std::vector<double> logit;
  std::vector<double> confidence;
};

double sigmoid(double a);

double disc_forward(const Discriminator& d, std::span<const float> v);

// Batched forward; returns one confidence per row.
const std::vector<double>& disc_forward(const Discriminator& d, const Matrix& x,
                                        ForwardCache& cache);

// Back-propagates dL/dlogit (one per row), accumulating discriminator
// gradients; returns dL/dx when `want_input_grad`.
Matrix disc_backward(Discriminator& d, const ForwardCache& cache,
                     std::span<const double> grad_logit, bool want_input_grad = true);

// -log(1 - s) and -log(s), with the log argument clamped to [1e-7, 1 - 1e-7].
double bce_normal(double s);
double bce_anomaly(double s);
// Derivatives w.r.t. the logit (zero where the clamp is active).
double bce_normal_grad(double s);
double bce_anomaly_grad(double s);

double normal_loss(const Discriminator& d, std::span<const aggregation::FeatureMap> u);
double anomaly_loss(const Discriminator& d, std::span<const aggregation::FeatureMap> z);

using pbas::Synthesis;

struct ObjectiveConfig {
  double alpha = 0.3;
  double gamma = 1e-5;
  double delta = 1e-2;
  Synthesis synthesis = Synthesis::kRay;
  double gaussian_sigma = 0.015;
};

struct LossReport {
  double center = 0.0;
  double normal = 0.0;
  double anomaly = 0.0;
  double reg_projector = 0.0;  // gamma |theta|^2
  double reg_joint = 0.0;      // delta (|theta|^2 + |psi|^2)
  double total = 0.0;
  double mean_normal_confidence = 0.0;
  double mean_anomaly_confidence = 0.0;
  std::size_t skipped = 0;
};

struct EvaluateOptions {
  bool backward = false;
  // Overrides the center loss used as the synthesis length (gradient checks
  // hold it at the base point's value).
  std::optional<double> synthesis_center_loss;
  std::mt19937_64* rng = nullptr;  // required for Gaussian synthesis
};

// Evaluates the joint objective on a batch of dispersed vectors (one row per
// vector). With `backward`, gradients are accumulated into the projector
// (unless frozen) and the discriminator; parameters are not changed.
LossReport evaluate_objective(abl::Projector& projector, Discriminator& disc,
                              const abl::CenterIndex& center, const Matrix& dispersed,
                              const ObjectiveConfig& config, const EvaluateOptions& options);

struct Optimizers {
  numerics::AdamState projector;
  numerics::AdamState discriminator;

  Optimizers(double lr_projector, double lr_discriminator)
      : projector(lr_projector), discriminator(lr_discriminator) {}
};

// Forward + backward + one Adam step per parameter group. Reports the losses
// at the pre-update parameters. Throws DivergenceError on non-finite values.
LossReport objective_step(abl::Projector& projector, Discriminator& disc, Optimizers& opt,
                          const abl::CenterIndex& center, const Matrix& dispersed,
                          const ObjectiveConfig& config, std::mt19937_64& rng);

}  // namespace pbas::rbo
