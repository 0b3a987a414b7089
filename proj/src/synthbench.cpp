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
#include "pbas/synthbench.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "pbas/error.hpp"

namespace pbas::synthbench {
namespace {

using aggregation::FeatureMap;
using aggregation::Role;
using nlohmann::json;

constexpr int kFineLevel = 2;
constexpr int kCoarseLevel = 3;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ tag) ^ index);
}

std::vector<double> random_unit(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = g(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// Shape and shared structure of one raw level.
struct LevelModel {
  int level;
  std::size_t height, width, channels, stride;
  std::vector<std::vector<double>> modes;  // K x C
  std::vector<double> pattern;             // H x W x C
};

LevelModel make_level(const SynthSpec& s, int level, std::size_t stride, std::size_t channels,
                      std::mt19937_64& rng) {
  LevelModel m;
  m.level = level;
  m.stride = stride;
  m.height = (s.height + stride - 1) / stride;
  m.width = (s.width + stride - 1) / stride;
  m.channels = channels;
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> base(channels);
  const double per_channel = 1.0 / std::sqrt(static_cast<double>(channels));
  for (double& b : base) b = s.base_scale * per_channel * g(rng);
  const double spread = s.mode_separation / std::numbers::sqrt2;
  for (std::size_t k = 0; k < s.modes; ++k) {
    const auto dir = random_unit(channels, rng);
    std::vector<double> v(channels);
    for (std::size_t c = 0; c < channels; ++c) v[c] = base[c] + (s.modes > 1 ? spread * dir[c] : 0.0);
    m.modes.push_back(std::move(v));
  }
  // Low-frequency positional pattern: three random plane waves per channel.
  std::uniform_real_distribution<double> freq(-1.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  m.pattern.assign(m.height * m.width * channels, 0.0);
  const double norm = s.pattern_scale * per_channel / std::sqrt(1.5);
  for (std::size_t c = 0; c < channels; ++c) {
    for (int q = 0; q < 3; ++q) {
      const double fy = freq(rng) / static_cast<double>(s.height);
      const double fx = freq(rng) / static_cast<double>(s.width);
      const double ph = phase(rng);
      for (std::size_t a = 0; a < m.height; ++a) {
        for (std::size_t b = 0; b < m.width; ++b) {
          const double y = (static_cast<double>(a) + 0.5) * static_cast<double>(stride);
          const double x = (static_cast<double>(b) + 0.5) * static_cast<double>(stride);
          m.pattern[(a * m.width + b) * channels + c] +=
              norm * std::cos(2.0 * std::numbers::pi * (fy * y + fx * x) + ph);
        }
      }
    }
  }
  return m;
}

struct Anomaly {
  std::size_t top = 0, left = 0;
  std::map<int, std::vector<double>> direction;
};

Sample make_sample(const SynthSpec& s, const std::vector<LevelModel>& levels, std::string id,
                   bool anomalous, std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  Sample out;
  out.id = std::move(id);
  out.label = anomalous ? featureio::Label::kAnomalous : featureio::Label::kNormal;

  std::vector<std::size_t> fine_mode(s.height * s.width, 0);
  if (s.modes > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, s.modes - 1);
    for (auto& m : fine_mode) m = pick(rng);
  }
  Anomaly anomaly;
  out.fine_mask.assign(s.height * s.width, 0);
  if (anomalous) {
    std::uniform_int_distribution<std::size_t> top(0, s.height - s.anomaly_patch);
    std::uniform_int_distribution<std::size_t> left(0, s.width - s.anomaly_patch);
    anomaly.top = top(rng);
    anomaly.left = left(rng);
    for (const auto& lm : levels) anomaly.direction[lm.level] = random_unit(lm.channels, rng);
    for (std::size_t h = anomaly.top; h < anomaly.top + s.anomaly_patch; ++h) {
      for (std::size_t w = anomaly.left; w < anomaly.left + s.anomaly_patch; ++w) {
        out.fine_mask[h * s.width + w] = 1;
      }
    }
  }

  for (const auto& lm : levels) {
    std::normal_distribution<double> noise(
        0.0, s.noise_std / std::sqrt(static_cast<double>(lm.channels)));
    FeatureMap raw(lm.height, lm.width, lm.channels, Role::kRaw);
    FeatureMap clean(lm.height, lm.width, lm.channels, Role::kRaw);
    std::vector<double> mean(lm.channels);
    for (std::size_t a = 0; a < lm.height; ++a) {
      for (std::size_t b = 0; b < lm.width; ++b) {
        std::fill(mean.begin(), mean.end(), 0.0);
        std::size_t covered = 0, displaced = 0;
        for (std::size_t h = a * lm.stride; h < std::min(s.height, (a + 1) * lm.stride); ++h) {
          for (std::size_t w = b * lm.stride; w < std::min(s.width, (b + 1) * lm.stride); ++w) {
            const auto& mode = lm.modes[fine_mode[h * s.width + w]];
            for (std::size_t c = 0; c < lm.channels; ++c) mean[c] += mode[c];
            ++covered;
            displaced += out.fine_mask[h * s.width + w];
          }
        }
        const double frac = static_cast<double>(displaced) / static_cast<double>(covered);
        auto rv = raw.at(a, b);
        auto cv = clean.at(a, b);
        for (std::size_t c = 0; c < lm.channels; ++c) {
          const double t = mean[c] / static_cast<double>(covered) +
                           lm.pattern[(a * lm.width + b) * lm.channels + c];
          double v = t + (s.noise_std > 0.0 ? noise(rng) : 0.0);
          if (displaced > 0) v += s.anomaly_offset * frac * anomaly.direction[lm.level][c];
          cv[c] = static_cast<float>(t);
          rv[c] = static_cast<float>(v);
        }
      }
    }
    out.levels.emplace(lm.level, std::move(raw));
    out.clean.emplace(lm.level, std::move(clean));
  }

  // Pixel mask: each pixel takes the fine cell it samples under the
  // corner-aligned upsampling used for score maps.
  const std::size_t H0 = s.image_height(), W0 = s.image_width();
  out.mask.assign(H0 * W0, 0);
  auto nearest = [](std::size_t i, std::size_t out_n, std::size_t in_n) {
    if (out_n == 1 || in_n == 1) return std::size_t{0};
    return static_cast<std::size_t>(std::lround(static_cast<double>(i) * double(in_n - 1) /
                                                double(out_n - 1)));
  };
  for (std::size_t y = 0; y < H0; ++y) {
    const std::size_t h = nearest(y, H0, s.height);
    for (std::size_t x = 0; x < W0; ++x) {
      out.mask[y * W0 + x] = out.fine_mask[h * s.width + nearest(x, W0, s.width)];
    }
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (height < 2 || width < 2 || channels < 2) throw ConfigError("synth grid must be at least 2x2x2");
  if (modes == 0) throw ConfigError("synth modes must be >= 1");
  if (!(noise_std >= 0.0) || !(pattern_scale >= 0.0) || !(mode_separation >= 0.0) ||
      !(base_scale >= 0.0)) {
    throw ConfigError("synth scales must be non-negative");
  }
  if (test_anomalous_count > 0) {
    if (!(anomaly_offset > 0.0)) throw ConfigError("anomaly_offset must be positive");
    if (anomaly_patch == 0 || anomaly_patch > height || anomaly_patch > width) {
      throw ConfigError("anomaly_patch must fit inside the grid");
    }
  }
  if (pixel_scale == 0) throw ConfigError("pixel_scale must be positive");
  if (train_count == 0) throw ConfigError("train_count must be positive");
}

json to_json(const SynthSpec& s) {
  return json{{"height", s.height},
              {"width", s.width},
              {"channels", s.channels},
              {"modes", s.modes},
              {"mode_separation", s.mode_separation},
              {"base_scale", s.base_scale},
              {"pattern_scale", s.pattern_scale},
              {"noise_std", s.noise_std},
              {"anomaly_patch", s.anomaly_patch},
              {"anomaly_offset", s.anomaly_offset},
              {"train_count", s.train_count},
              {"test_normal_count", s.test_normal_count},
              {"test_anomalous_count", s.test_anomalous_count},
              {"pixel_scale", s.pixel_scale},
              {"seed", s.seed}};
}

SynthSpec spec_from_json(const json& j, SynthSpec s) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "height") s.height = v.get<std::size_t>();
      else if (k == "width") s.width = v.get<std::size_t>();
      else if (k == "channels") s.channels = v.get<std::size_t>();
      else if (k == "modes") s.modes = v.get<std::size_t>();
      else if (k == "mode_separation") s.mode_separation = v.get<double>();
      else if (k == "base_scale") s.base_scale = v.get<double>();
      else if (k == "pattern_scale") s.pattern_scale = v.get<double>();
      else if (k == "noise_std") s.noise_std = v.get<double>();
      else if (k == "anomaly_patch") s.anomaly_patch = v.get<std::size_t>();
      else if (k == "anomaly_offset") s.anomaly_offset = v.get<double>();
      else if (k == "train_count") s.train_count = v.get<std::size_t>();
      else if (k == "test_normal_count") s.test_normal_count = v.get<std::size_t>();
      else if (k == "test_anomalous_count") s.test_anomalous_count = v.get<std::size_t>();
      else if (k == "pixel_scale") s.pixel_scale = v.get<std::size_t>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown synth spec key '" + k + "'");
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad synth spec value: ") + ex.what());
  }
  s.validate();
  return s;
}

Dataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(stream_seed(spec.seed, 0x5eed, 0));
  const std::size_t fine_channels = spec.channels / 2;
  std::vector<LevelModel> levels;
  levels.push_back(make_level(spec, kFineLevel, 1, fine_channels, rng));
  levels.push_back(make_level(spec, kCoarseLevel, 2, spec.channels - fine_channels, rng));

  Dataset data;
  data.spec = spec;
  data.train.resize(spec.train_count);
  data.test.resize(spec.test_normal_count + spec.test_anomalous_count);
  char buf[32];
  for (std::size_t i = 0; i < spec.train_count; ++i) {
    std::snprintf(buf, sizeof buf, "train_%04zu", i);
    data.train[i] = make_sample(spec, levels, buf, false, stream_seed(spec.seed, 1, i));
  }
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const bool anomalous = i >= spec.test_normal_count;
    std::snprintf(buf, sizeof buf, anomalous ? "test_anom_%04zu" : "test_good_%04zu",
                  anomalous ? i - spec.test_normal_count : i);
    data.test[i] = make_sample(spec, levels, buf, anomalous, stream_seed(spec.seed, 2, i));
  }
  return data;
}

GeneratedFiles write_dataset(const Dataset& data, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "train");
  fs::create_directories(out_dir / "test");
  auto emit = [&](const std::vector<Sample>& samples, featureio::Split split,
                  const std::string& sub) {
    featureio::DatasetManifest m;
    m.split = split;
    m.category = "synthetic";
    for (const auto& s : samples) {
      featureio::ManifestEntry e;
      e.id = s.id;
      e.label = s.label;
      e.image_height = data.spec.image_height();
      e.image_width = data.spec.image_width();
      for (const auto& [level, map] : s.levels) {
        const fs::path p = out_dir / sub / (s.id + "_l" + std::to_string(level) + ".pbft");
        featureio::write_tensor(p, map.to_tensor());
        e.levels[level] = p;
      }
      if (s.label == featureio::Label::kAnomalous) {
        const fs::path p = out_dir / sub / (s.id + "_mask.pgm");
        featureio::write_mask(p, s.mask, e.image_height, e.image_width);
        e.mask = p;
      }
      m.entries.push_back(std::move(e));
    }
    const fs::path manifest = out_dir / (sub + ".json");
    featureio::save_manifest(manifest, m);
    return manifest;
  };
  GeneratedFiles files;
  files.train_manifest = emit(data.train, featureio::Split::kTrain, "train");
  files.test_manifest = emit(data.test, featureio::Split::kTest, "test");
  featureio::write_text_atomic(out_dir / "synth_spec.json", to_json(data.spec).dump(2) + "\n");
  return files;
}

double template_distance_score(const Sample& s) {
  const auto& raw = s.levels.at(kFineLevel);
  const auto& clean = s.clean.at(kFineLevel);
  double best = 0.0;
  for (std::size_t i = 0; i < raw.cells(); ++i) {
    auto a = raw.cell(i);
    auto b = clean.cell(i);
    double d = 0.0;
    for (std::size_t c = 0; c < raw.channels; ++c) {
      const double x = double(a[c]) - b[c];
      d += x * x;
    }
    best = std::max(best, std::sqrt(d));
  }
  return best;
}

}  // namespace pbas::synthbench
