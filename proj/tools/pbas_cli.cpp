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
// pbas: train, evaluate and inspect the feature-space anomaly detector.

#include <CLI11.hpp>

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pbas/error.hpp"
#include "pbas/featureio.hpp"
#include "pbas/numerics.hpp"
#include "pbas/pipeline.hpp"
#include "pbas/synthbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pbas;

namespace {

struct Overrides {
  std::optional<std::size_t> p, batch_size, epochs;
  std::optional<std::string> levels;  // comma-separated
  std::optional<double> alpha, beta, gamma, delta, lr_projector, lr_discriminator, sigma,
      subsample_ratio, gaussian_sigma;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> center, synthesis;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--p", o.p, "neighborhood patch size (odd)");
  cmd->add_option("--levels", o.levels, "hierarchy levels, comma-separated");
  cmd->add_option("--alpha", o.alpha, "synthesis step factor");
  cmd->add_option("--beta", o.beta, "center update rate");
  cmd->add_option("--gamma", o.gamma, "projector weight decay");
  cmd->add_option("--delta", o.delta, "joint weight decay");
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--lr-projector", o.lr_projector);
  cmd->add_option("--lr-discriminator", o.lr_discriminator);
  cmd->add_option("--sigma", o.sigma, "heatmap blur sigma in pixels");
  cmd->add_option("--subsample-ratio", o.subsample_ratio, "fraction of training entries kept");
  cmd->add_option("--center", o.center, "alignment|average");
  cmd->add_option("--synthesis", o.synthesis, "ray|gaussian");
  cmd->add_option("--gaussian-sigma", o.gaussian_sigma, "noise std for gaussian synthesis");
}

featureio::RunConfig resolve(const std::string& config_path, const Overrides& o) {
  featureio::RunConfig c = config_path.empty() ? featureio::RunConfig{} : featureio::load_config(config_path);
  if (o.p) c.p = *o.p;
  if (o.levels) {
    std::vector<int> levels;
    std::stringstream ss(*o.levels);
    for (std::string item; std::getline(ss, item, ',');) {
      try {
        std::size_t used = 0;
        levels.push_back(std::stoi(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::logic_error&) {
        throw ConfigError("bad --levels entry '" + item + "'");
      }
    }
    json j;
    j["levels"] = levels;
    c = featureio::config_from_json(j, c);
  }
  if (o.alpha) c.alpha = *o.alpha;
  if (o.beta) c.beta = *o.beta;
  if (o.gamma) c.gamma = *o.gamma;
  if (o.delta) c.delta = *o.delta;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.seed) c.seed = *o.seed;
  if (o.lr_projector) c.lr_projector = *o.lr_projector;
  if (o.lr_discriminator) c.lr_discriminator = *o.lr_discriminator;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.subsample_ratio) c.subsample_ratio = *o.subsample_ratio;
  if (o.center) c.center = featureio::parse_center_mode(*o.center);
  if (o.synthesis) c.synthesis = featureio::parse_synthesis(*o.synthesis);
  if (o.gaussian_sigma) c.gaussian_sigma = *o.gaussian_sigma;
  c.validate();
  return c;
}

void write_resolved(const fs::path& dir, const featureio::RunConfig& c) {
  fs::create_directories(dir);
  featureio::write_text_atomic(dir / "resolved_config.json", featureio::to_json(c).dump(2) + "\n");
}

int run(int argc, char** argv) {
  CLI::App app{"pbas: feature-space anomaly detection with pseudo-anomaly synthesis"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = runtime default)");

  std::string manifest, out, config_path, checkpoint, spec_path;
  bool no_pixel = false, no_heatmaps = false, quiet = false;
  Overrides ov;

  auto* train = app.add_subcommand("train", "train a model from a train manifest");
  train->add_option("--manifest", manifest)->required();
  train->add_option("--out", out, "checkpoint directory")->required();
  train->add_option("--config", config_path, "run config JSON");
  train->add_flag("--quiet", quiet, "no per-epoch log on stderr");
  add_overrides(train, ov);

  auto* eval = app.add_subcommand("eval", "score a test manifest and compute metrics");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--out", out)->required();
  eval->add_flag("--no-pixel-metrics", no_pixel);
  eval->add_flag("--no-heatmaps", no_heatmaps);

  auto* score = app.add_subcommand("score", "write image scores and heatmaps without metrics");
  score->add_option("--checkpoint", checkpoint)->required();
  score->add_option("--manifest", manifest)->required();
  score->add_option("--out", out)->required();
  score->add_flag("--no-heatmaps", no_heatmaps);

  auto* synth = app.add_subcommand("synth", "generate a synthetic feature dataset");
  synth->add_option("--out", out)->required();
  synth->add_option("--spec", spec_path, "SynthSpec JSON");
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> modes;
  std::optional<double> offset, noise, separation;
  synth->add_option("--seed", synth_seed);
  synth->add_option("--modes", modes);
  synth->add_option("--offset", offset, "anomaly displacement magnitude");
  synth->add_option("--noise", noise, "noise std as a vector norm per level");
  synth->add_option("--separation", separation, "distance between mode vectors");

  auto* diag = app.add_subcommand("diagnose", "export a 2-D principal-component view of u and z");
  diag->add_option("--checkpoint", checkpoint)->required();
  diag->add_option("--manifest", manifest)->required();
  diag->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }
  if (threads > 0) numerics::set_num_threads(threads);

  if (*train) {
    const auto config = resolve(config_path, ov);
    auto m = featureio::load_manifest(manifest);
    if (m.split != featureio::Split::kTrain) throw ManifestError(manifest + ": expected a train manifest");
    m = featureio::subsample(m, config.subsample_ratio, config.seed);
    const auto features = pipeline::load_dispersed(m, config);
    std::vector<pipeline::EpochLog> done;
    pipeline::TrainResult result;
    try {
      result = pipeline::train(features, config, quiet ? nullptr : &std::cerr, &done);
    } catch (const DivergenceError&) {
      // Keep the epochs that did finish; no checkpoint is written.
      write_resolved(out, config);
      featureio::write_text_atomic(fs::path(out) / "train_log.csv", pipeline::train_log_csv(done));
      throw;
    }
    pipeline::save_checkpoint(out, result.model, result.epochs);
    write_resolved(out, config);
    const double final_lc = pipeline::center_loss_of(result.model, features);
    std::cout << "trained " << config.epochs << " epochs on " << features.size()
              << " entries; L_c " << result.initial_center_loss << " -> " << final_lc << "\n";
    return 0;
  }
  if (*eval || *score) {
    const auto model = pipeline::load_checkpoint(checkpoint);
    const featureio::ManifestOptions opts{*eval && !no_pixel};
    const auto m = featureio::load_manifest(manifest, opts);
    write_resolved(out, model.config);
    if (*score) {
      pipeline::write_scores(out, pipeline::score_manifest(model, m, false), !no_heatmaps);
      return 0;
    }
    const auto ev = pipeline::evaluate(model, m, !no_pixel);
    pipeline::write_evaluation(out, ev, !no_heatmaps);
    std::cout << pipeline::metrics_csv(ev);
    return 0;
  }
  if (*synth) {
    synthbench::SynthSpec spec;
    if (!spec_path.empty()) {
      std::ifstream in(spec_path);
      if (!in) throw ConfigError("cannot open spec " + spec_path);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError(spec_path + ": " + e.what());
      }
      spec = synthbench::spec_from_json(j);
    }
    if (synth_seed) spec.seed = *synth_seed;
    if (modes) spec.modes = *modes;
    if (offset) spec.anomaly_offset = *offset;
    if (noise) spec.noise_std = *noise;
    if (separation) spec.mode_separation = *separation;
    spec.validate();
    const auto files = synthbench::generate(spec, out);
    std::cout << files.train_manifest.string() << "\n" << files.test_manifest.string() << "\n";
    return 0;
  }
  if (*diag) {
    const auto model = pipeline::load_checkpoint(checkpoint);
    const auto m = featureio::load_manifest(manifest);
    pipeline::Pca pca;
    const auto points = pipeline::diagnose(model, m, &pca);
    fs::create_directories(out);
    write_resolved(out, model.config);
    featureio::write_text_atomic(fs::path(out) / "diagnose.csv", pipeline::diagnose_csv(points));
    std::cout << "variance PC1 " << pca.variances.at(0) << " PC2 "
              << (pca.variances.size() > 1 ? pca.variances[1] : 0.0) << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "pbas: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "pbas: data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "pbas: " << e.what() << "\n";
    return 1;
  }
}
