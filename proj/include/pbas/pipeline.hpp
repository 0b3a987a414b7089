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

// End-to-end training, checkpointing, evaluation and diagnostics over
// manifests. This is what the command-line tool drives.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pbas/abl.hpp"
#include "pbas/featureio.hpp"
#include "pbas/metrics.hpp"
#include "pbas/rbo.hpp"
#include "pbas/scoring.hpp"

namespace pbas::pipeline {

namespace fs = std::filesystem;
using aggregation::FeatureMap;
using featureio::RunConfig;

// Raw levels (role raw) -> aggregated -> dispersed, using config.p and config.levels.
FeatureMap dispersed_from_levels(const std::map<int, FeatureMap>& raw, const RunConfig& config);
FeatureMap load_dispersed(const featureio::ManifestEntry& entry, const RunConfig& config);
std::vector<FeatureMap> load_dispersed(const featureio::DatasetManifest& manifest,
                                       const RunConfig& config);

struct Model {
  RunConfig config;
  abl::Projector projector;
  rbo::Discriminator discriminator;
  abl::CenterFeature center;
};

struct EpochLog {
  std::size_t epoch = 0;
  double center = 0.0;
  double normal = 0.0;
  double anomaly = 0.0;
  double total = 0.0;
  double mean_normal_confidence = 0.0;
  double mean_anomaly_confidence = 0.0;
  std::size_t skipped = 0;
};

struct TrainResult {
  Model model;
  double initial_center_loss = 0.0;  // L_c of the initialized model over the train set
  std::vector<EpochLog> epochs;
};

// Projector and discriminator initialization plus center initialization.
Model initialize_model(const std::vector<FeatureMap>& train, const RunConfig& config);

// Mean center loss of the model's projector on `features` against its center.
double center_loss_of(const Model& model, const std::vector<FeatureMap>& features);

// `log`, when given, receives one line per epoch. `progress` collects each
// finished epoch as it completes, so it survives a DivergenceError.
TrainResult train(const std::vector<FeatureMap>& train, const RunConfig& config,
                  std::ostream* log = nullptr, std::vector<EpochLog>* progress = nullptr);

// Per-epoch CSV as stored in a checkpoint's train_log.csv.
std::string train_log_csv(const std::vector<EpochLog>& log);

// Checkpoint directory: header.json, config.json, train_log.csv and one PBFT
// file per parameter array plus center.pbft. Written to a temporary sibling
// and renamed into place.
void save_checkpoint(const fs::path& dir, const Model& model,
                     const std::vector<EpochLog>& log = {});
Model load_checkpoint(const fs::path& dir);

struct ImageResult {
  std::string id;
  featureio::Label label = featureio::Label::kNormal;
  scoring::ScoreResult score;
  std::vector<std::uint8_t> mask;  // empty when the entry has none
};

struct Evaluation {
  std::string category;
  std::vector<ImageResult> images;
  metrics::EvalReport report;
};

std::vector<ImageResult> score_manifest(const Model& model,
                                        const featureio::DatasetManifest& manifest,
                                        bool load_masks);

// Scores every entry and computes image metrics and, with `pixel_metrics`,
// pixel AUROC/AP/PRO. Throws DataError on an empty test set.
Evaluation evaluate(const Model& model, const featureio::DatasetManifest& manifest,
                    bool pixel_metrics = true);

nlohmann::json metrics_json(const Evaluation& e);
std::string metrics_csv(const Evaluation& e);
std::string scores_csv(const std::vector<ImageResult>& images);

// metrics.json, metrics.csv, scores.csv and heatmaps/ under `out_dir`.
void write_evaluation(const fs::path& out_dir, const Evaluation& e, bool heatmaps = true);
void write_scores(const fs::path& out_dir, const std::vector<ImageResult>& images,
                  bool heatmaps = true);

// Leading principal components by power iteration with deflation.
struct Pca {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;
  std::vector<double> variances;
};
Pca principal_components(const numerics::Matrix& data, std::size_t k,
                         std::size_t max_iterations = 2000, double tolerance = 1e-12);

struct ProjectedPoint {
  double x;
  double y;
  std::string role;  // "normal" (u) or "synthetic" (z)
};

// Projects pooled u and z vectors of `manifest` onto two principal components.
std::vector<ProjectedPoint> diagnose(const Model& model, const featureio::DatasetManifest& manifest,
                                     Pca* pca_out = nullptr);
std::string diagnose_csv(const std::vector<ProjectedPoint>& points);

}  // namespace pbas::pipeline
