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

// Ingestion boundary: the PBFT tensor file format, PGM masks and heatmaps,
// dataset manifests, and the run configuration.
//
// PBFT layout (little-endian throughout):
//   offset 0   char[4]  "PBFT"
//   offset 4   u32      version (= 1)
//   offset 8   u32      ndim (>= 1)
//   offset 12  u32[ndim] dims (each >= 1)
//   then       f32[prod(dims)] payload, row-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pbas/modes.hpp"
#include "pbas/numerics.hpp"

namespace pbas::featureio {

namespace fs = std::filesystem;

inline constexpr char kTensorMagic[4] = {'P', 'B', 'F', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;

std::vector<std::uint8_t> encode_tensor(const numerics::Tensor& t);
numerics::Tensor decode_tensor(const std::vector<std::uint8_t>& bytes,
                               const std::string& origin = "<memory>");

numerics::Tensor read_tensor(const fs::path& path);
void write_tensor(const fs::path& path, const numerics::Tensor& t);

// Binary PGM (P5). 8-bit files for masks, 16-bit (big-endian samples, as
// the format requires) for heatmaps.
struct Pgm {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> pixels;
};

Pgm read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Pgm& image);

// Nonzero pixels of an 8-bit mask become 1.
std::vector<std::uint8_t> read_mask(const fs::path& path, std::size_t* height = nullptr,
                                    std::size_t* width = nullptr);
void write_mask(const fs::path& path, const std::vector<std::uint8_t>& mask, std::size_t height,
                std::size_t width);

// Values in [0, 1] scaled by 65535.
void write_heatmap(const fs::path& path, const std::vector<double>& map, std::size_t height,
                   std::size_t width);

enum class Split { kTrain, kTest };
enum class Label { kNormal, kAnomalous };

struct ManifestEntry {
  std::string id;
  std::map<int, fs::path> levels;  // hierarchy level -> raw feature tensor
  Label label = Label::kNormal;
  std::optional<fs::path> mask;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
};

// Paths are absolute after load; save() writes them relative to the manifest.
struct DatasetManifest {
  Split split = Split::kTrain;
  std::string category = "default";
  std::vector<ManifestEntry> entries;
};

struct ManifestOptions {
  // Anomalous test entries must reference a mask.
  bool require_masks = false;
};

DatasetManifest parse_manifest(const nlohmann::json& j, const fs::path& base_dir,
                               const ManifestOptions& options = {});
DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& options = {});
void save_manifest(const fs::path& path, const DatasetManifest& manifest);

// Deterministically keeps ceil(ratio * N) entries (in original order).
DatasetManifest subsample(const DatasetManifest& manifest, double ratio, std::uint64_t seed);

struct RunConfig {
  std::size_t p = 3;
  std::vector<int> levels = {2, 3};
  double beta = 0.1;
  double alpha = 0.3;
  double gamma = 1e-5;
  double delta = 1e-2;
  std::size_t batch_size = 8;
  std::size_t epochs = 400;
  std::uint64_t seed = 0;
  double lr_projector = 1e-4;
  double lr_discriminator = 2e-4;
  double sigma = 4.0;
  double subsample_ratio = 1.0;
  CenterMode center = CenterMode::kAlignment;
  Synthesis synthesis = Synthesis::kRay;
  double gaussian_sigma = 0.015;

  // Throws ConfigError on any out-of-range value.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
// Applies the keys present in `j` on top of `base`; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const fs::path& path);

const char* to_string(CenterMode m);
const char* to_string(Synthesis s);
CenterMode parse_center_mode(const std::string& s);
Synthesis parse_synthesis(const std::string& s);

// Writes to a sibling temp file and renames it into place.
void write_text_atomic(const fs::path& path, const std::string& text);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const fs::path& path);

}  // namespace pbas::featureio
