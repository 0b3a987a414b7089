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
#include "pbas/rbo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pbas/error.hpp"

namespace pbas::rbo {
namespace {

void leaky_relu(const Matrix& pre, Matrix& act) {
  act = pre;
  for (double& v : act.data) v = v > 0.0 ? v : kLeakySlope * v;
}

// grad *= leaky'(pre), in place.
void leaky_relu_backward(const Matrix& pre, Matrix& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (pre.data[i] <= 0.0) grad.data[i] *= kLeakySlope;
  }
}

void add_weight_decay(numerics::LinearLayer& layer, double coeff) {
  if (coeff == 0.0) return;
  for (std::size_t i = 0; i < layer.weight.size(); ++i) {
    layer.grad_weight[i] = static_cast<float>(layer.grad_weight[i] + 2.0 * coeff * layer.weight[i]);
  }
  for (std::size_t i = 0; i < layer.bias.size(); ++i) {
    layer.grad_bias[i] = static_cast<float>(layer.grad_bias[i] + 2.0 * coeff * layer.bias[i]);
  }
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void check_input(const aggregation::FeatureMap& m, aggregation::Role role, const char* op) {
  if (m.role != role) {
    throw DataError(std::string(op) + ": expected " + aggregation::role_name(role) +
                    " features, got " + aggregation::role_name(m.role));
  }
}

}  // namespace

Discriminator Discriminator::normal_init(std::size_t channels, std::mt19937_64& rng) {
  Discriminator d;
  d.hidden1 = numerics::LinearLayer::normal_init(channels, channels, rng);
  d.hidden2 = numerics::LinearLayer::normal_init(channels, channels, rng);
  d.output = numerics::LinearLayer::normal_init(channels, 1, rng);
  return d;
}

double Discriminator::squared_norm() const {
  return hidden1.squared_norm() + hidden2.squared_norm() + output.squared_norm();
}

void Discriminator::zero_grad() {
  hidden1.zero_grad();
  hidden2.zero_grad();
  output.zero_grad();
}

std::vector<numerics::ParamBlock> Discriminator::blocks() {
  std::vector<numerics::ParamBlock> out;
  numerics::append_blocks(hidden1, "discriminator.hidden1", out);
  numerics::append_blocks(hidden2, "discriminator.hidden2", out);
  numerics::append_blocks(output, "discriminator.output", out);
  return out;
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

const std::vector<double>& disc_forward(const Discriminator& d, const Matrix& x,
                                        ForwardCache& cache) {
  if (x.cols != d.channels()) {
    throw DataError("discriminator: input width " + std::to_string(x.cols) + " != " +
                    std::to_string(d.channels()));
  }
  cache.input = x;
  cache.pre1 = numerics::linear_forward(d.hidden1, x);
  leaky_relu(cache.pre1, cache.act1);
  cache.pre2 = numerics::linear_forward(d.hidden2, cache.act1);
  leaky_relu(cache.pre2, cache.act2);
  const Matrix logit = numerics::linear_forward(d.output, cache.act2);
  cache.logit = logit.data;
  cache.confidence.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) cache.confidence[r] = sigmoid(cache.logit[r]);
  return cache.confidence;
}

double disc_forward(const Discriminator& d, std::span<const float> v) {
  Matrix x(1, v.size());
  std::copy(v.begin(), v.end(), x.data.begin());
  ForwardCache cache;
  return disc_forward(d, x, cache).front();
}

Matrix disc_backward(Discriminator& d, const ForwardCache& cache,
                     std::span<const double> grad_logit, bool want_input_grad) {
  const std::size_t n = cache.input.rows;
  if (grad_logit.size() != n) throw DataError("disc_backward: gradient count mismatch");
  Matrix g3(n, 1);
  std::copy(grad_logit.begin(), grad_logit.end(), g3.data.begin());
  Matrix g2 = numerics::linear_backward(d.output, cache.act2, g3, true);
  leaky_relu_backward(cache.pre2, g2);
  Matrix g1 = numerics::linear_backward(d.hidden2, cache.act1, g2, true);
  leaky_relu_backward(cache.pre1, g1);
  return numerics::linear_backward(d.hidden1, cache.input, g1, want_input_grad);
}

double bce_normal(double s) {
  return -std::log(std::clamp(1.0 - s, kBceClamp, 1.0 - kBceClamp));
}

double bce_anomaly(double s) { return -std::log(std::clamp(s, kBceClamp, 1.0 - kBceClamp)); }

double bce_normal_grad(double s) {
  const double arg = 1.0 - s;
  return (arg < kBceClamp || arg > 1.0 - kBceClamp) ? 0.0 : s;
}

double bce_anomaly_grad(double s) {
  return (s < kBceClamp || s > 1.0 - kBceClamp) ? 0.0 : -(1.0 - s);
}

double normal_loss(const Discriminator& d, std::span<const aggregation::FeatureMap> u) {
  for (const auto& m : u) check_input(m, aggregation::Role::kProjected, "normal_loss");
  ForwardCache cache;
  const auto& s = disc_forward(d, abl::to_rows(u), cache);
  double sum = 0.0;
  for (double v : s) sum += bce_normal(v);
  return s.empty() ? 0.0 : sum / static_cast<double>(s.size());
}

double anomaly_loss(const Discriminator& d, std::span<const aggregation::FeatureMap> z) {
  for (const auto& m : z) check_input(m, aggregation::Role::kSynthetic, "anomaly_loss");
  ForwardCache cache;
  const auto& s = disc_forward(d, abl::to_rows(z), cache);
  double sum = 0.0;
  for (double v : s) sum += bce_anomaly(v);
  return s.empty() ? 0.0 : sum / static_cast<double>(s.size());
}

LossReport evaluate_objective(abl::Projector& projector, Discriminator& disc,
                              const abl::CenterIndex& center, const Matrix& dispersed,
                              const ObjectiveConfig& config, const EvaluateOptions& options) {
  const Matrix u = abl::project(dispersed, projector);
  const abl::CenterLoss lc = abl::center_loss(u, center);

  const afs::SynthesisParams params{config.alpha,
                                    options.synthesis_center_loss.value_or(lc.value)};
  afs::SyntheticBatch syn;
  if (config.synthesis == Synthesis::kRay) {
    syn = afs::synthesize_rows(u, lc.assignments, center.center(), params);
  } else {
    if (options.rng == nullptr) throw DataError("gaussian synthesis requires an RNG");
    syn = afs::gaussian_rows(u, config.gaussian_sigma, *options.rng);
  }

  ForwardCache cache_u;
  ForwardCache cache_z;
  const auto& su = disc_forward(disc, u, cache_u);
  const auto& sz = disc_forward(disc, syn.z, cache_z);

  LossReport report;
  report.center = lc.value;
  report.skipped = syn.skipped.size();
  std::vector<double> ln(su.size()), la(sz.size());
  std::transform(su.begin(), su.end(), ln.begin(), bce_normal);
  std::transform(sz.begin(), sz.end(), la.begin(), bce_anomaly);
  report.normal = mean(ln);
  report.anomaly = mean(la);
  report.mean_normal_confidence = mean(su);
  report.mean_anomaly_confidence = mean(sz);
  const double theta2 = projector.layer.squared_norm();
  const double psi2 = disc.squared_norm();
  report.reg_projector = config.gamma * theta2;
  report.reg_joint = config.delta * (theta2 + psi2);
  report.total = report.center + report.reg_projector + report.normal + report.anomaly +
                 report.reg_joint;

  if (!options.backward) return report;

  const bool train_projector = !projector.frozen;
  std::vector<double> gu_logit(su.size()), gz_logit(sz.size());
  for (std::size_t r = 0; r < su.size(); ++r) {
    gu_logit[r] = bce_normal_grad(su[r]) / static_cast<double>(su.size());
  }
  for (std::size_t r = 0; r < sz.size(); ++r) {
    gz_logit[r] = bce_anomaly_grad(sz[r]) / static_cast<double>(sz.size());
  }
  Matrix grad_u = disc_backward(disc, cache_u, gu_logit, train_projector);
  Matrix grad_z = disc_backward(disc, cache_z, gz_logit, train_projector);
  add_weight_decay(disc.hidden1, config.delta);
  add_weight_decay(disc.hidden2, config.delta);
  add_weight_decay(disc.output, config.delta);
  if (!train_projector) return report;

  abl::center_loss_backward(u, center.center(), lc.assignments,
                            1.0 / static_cast<double>(u.rows), grad_u);
  if (config.synthesis == Synthesis::kRay) {
    afs::synthesize_backward(u, lc.assignments, center.center(), params, syn, grad_z, grad_u);
  } else {
    afs::identity_backward(syn, grad_z, grad_u);
  }
  numerics::linear_backward(projector.layer, dispersed, grad_u, false);
  add_weight_decay(projector.layer, config.gamma + config.delta);
  return report;
}

LossReport objective_step(abl::Projector& projector, Discriminator& disc, Optimizers& opt,
                          const abl::CenterIndex& center, const Matrix& dispersed,
                          const ObjectiveConfig& config, std::mt19937_64& rng) {
  EvaluateOptions options;
  options.backward = true;
  options.rng = &rng;
  const LossReport report = evaluate_objective(projector, disc, center, dispersed, config, options);
  if (!std::isfinite(report.total)) {
    throw DivergenceError("non-finite objective (L_c=" + std::to_string(report.center) +
                          ", L_n=" + std::to_string(report.normal) +
                          ", L_a=" + std::to_string(report.anomaly) + ")");
  }
  if (!projector.frozen) {
    std::vector<numerics::ParamBlock> theta;
    numerics::append_blocks(projector.layer, "projector", theta);
    opt.projector.step(theta);
  }
  const auto psi = disc.blocks();
  opt.discriminator.step(psi);
  return report;
}

}  // namespace pbas::rbo
