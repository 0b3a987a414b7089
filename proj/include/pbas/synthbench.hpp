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

// Deterministic synthetic feature datasets with known normal structure and
// patch-shaped anomalies. Output is written in exactly the same on-disk form
// as exported backbone features (PBFT tensors, manifests, PGM masks).
//
// Two raw levels are produced: level 2 at H x W and level 3 at
// ceil(H/2) x ceil(W/2), splitting `channels` between them, so the dispersed
// feature is H x W x channels. Every fine cell (level-2 cell) draws one of K
// normal modes per image; a level-3 cell averages the modes of the 2 x 2 fine
// cells it covers. Cell values are
//
//   mode vector + smooth positional pattern + isotropic Gaussian noise
//
// All scales are vector norms within one level: the shared mode offset, the
// pattern and the noise have expected squared norm base_scale^2,
// pattern_scale^2 and noise_std^2, so noise_std / sqrt(C_level) is the
// per-channel deviation.
//
// and an anomalous image additionally displaces a square patch of fine cells
// by `anomaly_offset` along one random unit direction per level (level-3
// cells are displaced in proportion to their overlap with the patch).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pbas/aggregation.hpp"
#include "pbas/featureio.hpp"

namespace pbas::synthbench {

struct SynthSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 64;
  std::size_t modes = 1;
  double mode_separation = 40.0;
  double base_scale = 5.0;
  double pattern_scale = 2.5;
  double noise_std = 10.0;
  std::size_t anomaly_patch = 6;
  double anomaly_offset = 100.0;
  std::size_t train_count = 64;
  std::size_t test_normal_count = 32;
  std::size_t test_anomalous_count = 32;
  std::size_t pixel_scale = 4;  // image pixels per feature cell along each axis
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t image_height() const noexcept { return height * pixel_scale; }
  std::size_t image_width() const noexcept { return width * pixel_scale; }
};

nlohmann::json to_json(const SynthSpec& s);
SynthSpec spec_from_json(const nlohmann::json& j, SynthSpec base = {});

struct Sample {
  std::string id;
  featureio::Label label = featureio::Label::kNormal;
  std::map<int, aggregation::FeatureMap> levels;  // raw maps
  std::map<int, aggregation::FeatureMap> clean;   // noise-free, anomaly-free templates
  std::vector<std::uint8_t> mask;                 // image_height x image_width
  std::vector<std::uint8_t> fine_mask;            // height x width, displaced cells
};

struct Dataset {
  SynthSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

Dataset generate_dataset(const SynthSpec& spec);

struct GeneratedFiles {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

// Writes tensors, masks, manifests and a spec snapshot under `out_dir`.
GeneratedFiles write_dataset(const Dataset& data, const std::filesystem::path& out_dir);

inline GeneratedFiles generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  return write_dataset(generate_dataset(spec), out_dir);
}

// Image score of the reference classifier: max over level-2 cells of the
// distance to the true template.
double template_distance_score(const Sample& s);

}  // namespace pbas::synthbench
