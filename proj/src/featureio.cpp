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
#include "pbas/featureio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pbas/error.hpp"

namespace pbas::featureio {
namespace {

using nlohmann::json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<std::uint8_t> encode_tensor(const numerics::Tensor& t) {
  if (t.ndim() == 0) throw DataError("cannot encode a tensor without dimensions");
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * t.ndim() + 4 * t.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  put_u32(out, kTensorVersion);
  put_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

numerics::Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 12) throw FormatError(origin, bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw FormatError(origin, 0, "bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kTensorVersion) {
    throw FormatError(origin, 4, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t ndim = get_u32(bytes.data() + 8);
  if (ndim == 0) throw FormatError(origin, 8, "ndim must be positive");
  const std::size_t header = 12 + 4 * std::size_t(ndim);
  if (bytes.size() < header) throw FormatError(origin, bytes.size(), "truncated dims");
  std::vector<std::size_t> dims(ndim);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    dims[i] = get_u32(bytes.data() + 12 + 4 * i);
    if (dims[i] == 0) throw FormatError(origin, 12 + 4 * i, "zero dimension");
    count *= dims[i];
  }
  const std::size_t expected = header + 4 * count;
  if (bytes.size() != expected) {
    throw FormatError(origin, std::min(bytes.size(), expected),
                      "payload length " + std::to_string(bytes.size() - header) +
                          " bytes, expected " + std::to_string(4 * count));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
  }
  return numerics::Tensor(std::move(dims), std::move(data));
}

numerics::Tensor read_tensor(const fs::path& path) {
  return decode_tensor(read_bytes(path), path.string());
}

void write_tensor(const fs::path& path, const numerics::Tensor& t) {
  write_bytes(path, encode_tensor(t));
}

Pgm read_pgm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw FormatError(path.string(), pos, "expected integer in PGM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError(path.string(), 0, "not a binary PGM (P5)");
  }
  pos = 2;
  Pgm img;
  img.width = read_int();
  img.height = read_int();
  img.maxval = static_cast<std::uint32_t>(read_int());
  if (img.maxval == 0 || img.maxval > 65535) throw FormatError(path.string(), pos, "bad maxval");
  ++pos;  // single whitespace before raster
  const std::size_t bps = img.maxval < 256 ? 1 : 2;
  const std::size_t n = img.width * img.height;
  if (bytes.size() < pos + n * bps) throw FormatError(path.string(), bytes.size(), "truncated raster");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = bps == 1 ? bytes[pos + i]
                             : static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) |
                                                          bytes[pos + 2 * i + 1]);
  }
  return img;
}

void write_pgm(const fs::path& path, const Pgm& img) {
  std::ostringstream header;
  header << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  const bool wide = img.maxval >= 256;
  for (std::uint16_t v : img.pixels) {
    if (wide) {
      out.push_back(static_cast<std::uint8_t>(v >> 8));
      out.push_back(static_cast<std::uint8_t>(v & 0xff));
    } else {
      out.push_back(static_cast<std::uint8_t>(v));
    }
  }
  write_bytes(path, out);
}

std::vector<std::uint8_t> read_mask(const fs::path& path, std::size_t* height, std::size_t* width) {
  const Pgm img = read_pgm(path);
  if (height) *height = img.height;
  if (width) *width = img.width;
  std::vector<std::uint8_t> mask(img.pixels.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.pixels[i] != 0 ? 1 : 0;
  return mask;
}

void write_mask(const fs::path& path, const std::vector<std::uint8_t>& mask, std::size_t height,
                std::size_t width) {
  Pgm img{width, height, 255, {}};
  img.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] ? 255 : 0;
  write_pgm(path, img);
}

void write_heatmap(const fs::path& path, const std::vector<double>& map, std::size_t height,
                   std::size_t width) {
  Pgm img{width, height, 65535, {}};
  img.pixels.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map[i], 0.0, 1.0) * 65535.0));
  }
  write_pgm(path, img);
}

namespace {

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }
const char* label_name(Label l) { return l == Label::kNormal ? "normal" : "anomalous"; }

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end()) {
      throw ManifestError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace

DatasetManifest parse_manifest(const json& j, const fs::path& base_dir,
                               const ManifestOptions& options) {
  DatasetManifest m;
  try {
    reject_unknown_keys(j, {"format", "version", "split", "category", "entries"}, "manifest");
    if (j.value("format", "") != "pbas-manifest") throw ManifestError("format must be 'pbas-manifest'");
    if (j.value("version", 0) != 1) throw ManifestError("unsupported manifest version");
    const std::string split = j.at("split").get<std::string>();
    if (split == "train") {
      m.split = Split::kTrain;
    } else if (split == "test") {
      m.split = Split::kTest;
    } else {
      throw ManifestError("split must be 'train' or 'test', got '" + split + "'");
    }
    m.category = j.value("category", std::string("default"));
    std::set<std::string> ids;
    for (const auto& e : j.at("entries")) {
      reject_unknown_keys(e, {"id", "levels", "label", "mask", "image_height", "image_width"},
                          "manifest entry");
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      if (!ids.insert(entry.id).second) throw ManifestError("duplicate entry id '" + entry.id + "'");
      const std::string label = e.at("label").get<std::string>();
      if (label == "normal") {
        entry.label = Label::kNormal;
      } else if (label == "anomalous") {
        entry.label = Label::kAnomalous;
      } else {
        throw ManifestError("entry '" + entry.id + "': unknown label '" + label + "'");
      }
      for (auto it = e.at("levels").begin(); it != e.at("levels").end(); ++it) {
        int level = 0;
        try {
          level = std::stoi(it.key());
        } catch (const std::exception&) {
          throw ManifestError("entry '" + entry.id + "': level key '" + it.key() + "' is not an integer");
        }
        entry.levels[level] = base_dir / it.value().get<std::string>();
      }
      if (entry.levels.empty()) throw ManifestError("entry '" + entry.id + "' has no levels");
      if (e.contains("mask") && !e.at("mask").is_null()) {
        entry.mask = base_dir / e.at("mask").get<std::string>();
      }
      entry.image_height = e.at("image_height").get<std::size_t>();
      entry.image_width = e.at("image_width").get<std::size_t>();
      if (entry.image_height == 0 || entry.image_width == 0) {
        throw ManifestError("entry '" + entry.id + "': image dims must be positive");
      }
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw ManifestError(std::string("malformed manifest: ") + ex.what());
  }

  for (const auto& e : m.entries) {
    if (m.split == Split::kTrain && e.label != Label::kNormal) {
      throw ManifestError("train entry '" + e.id + "' is labeled anomalous; training data must be normal");
    }
    if (options.require_masks && m.split == Split::kTest && e.label == Label::kAnomalous &&
        !e.mask) {
      throw ManifestError("anomalous test entry '" + e.id + "' has no mask but pixel metrics are enabled");
    }
    for (const auto& [level, path] : e.levels) {
      if (!fs::exists(path)) {
        throw ManifestError("entry '" + e.id + "': level " + std::to_string(level) +
                            " file missing: " + path.string());
      }
    }
    if (e.mask && !fs::exists(*e.mask)) {
      throw ManifestError("entry '" + e.id + "': mask file missing: " + e.mask->string());
    }
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ManifestError("cannot parse " + path.string() + ": " + ex.what());
  }
  return parse_manifest(j, fs::absolute(path).parent_path(), options);
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path base = fs::absolute(path).parent_path();
  json j;
  j["format"] = "pbas-manifest";
  j["version"] = 1;
  j["split"] = split_name(m.split);
  j["category"] = m.category;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    json je;
    je["id"] = e.id;
    je["label"] = label_name(e.label);
    json levels = json::object();
    for (const auto& [level, p] : e.levels) {
      levels[std::to_string(level)] = fs::absolute(p).lexically_relative(base).generic_string();
    }
    je["levels"] = levels;
    if (e.mask) je["mask"] = fs::absolute(*e.mask).lexically_relative(base).generic_string();
    je["image_height"] = e.image_height;
    je["image_width"] = e.image_width;
    j["entries"].push_back(je);
  }
  write_text_atomic(path, j.dump(2) + "\n");
}

DatasetManifest subsample(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("subsample_ratio must be in (0, 1]");
  const std::size_t n = manifest.entries.size();
  auto keep = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, n == 0 ? 0 : 1, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  DatasetManifest out = manifest;
  out.entries.clear();
  for (std::size_t i : idx) out.entries.push_back(manifest.entries[i]);
  return out;
}

const char* to_string(CenterMode m) { return m == CenterMode::kAlignment ? "alignment" : "average"; }
const char* to_string(Synthesis s) { return s == Synthesis::kRay ? "ray" : "gaussian"; }

CenterMode parse_center_mode(const std::string& s) {
  if (s == "alignment") return CenterMode::kAlignment;
  if (s == "average") return CenterMode::kAverage;
  throw ConfigError("center must be 'alignment' or 'average', got '" + s + "'");
}

Synthesis parse_synthesis(const std::string& s) {
  if (s == "ray") return Synthesis::kRay;
  if (s == "gaussian") return Synthesis::kGaussian;
  throw ConfigError("synthesis must be 'ray' or 'gaussian', got '" + s + "'");
}

void RunConfig::validate() const {
  if (p == 0 || p % 2 == 0) throw ConfigError("p must be a positive odd integer");
  if (levels.empty()) throw ConfigError("levels must name at least one hierarchy level");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must be in (0, 1]");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(gamma >= 0.0) || !(delta >= 0.0)) throw ConfigError("gamma and delta must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_projector >= 0.0) || !(lr_discriminator >= 0.0)) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0)) {
    throw ConfigError("subsample_ratio must be in (0, 1]");
  }
  if (!(gaussian_sigma >= 0.0)) throw ConfigError("gaussian_sigma must be non-negative");
}

json to_json(const RunConfig& c) {
  json j;
  j["p"] = c.p;
  j["levels"] = c.levels;
  j["beta"] = c.beta;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["delta"] = c.delta;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["lr_projector"] = c.lr_projector;
  j["lr_discriminator"] = c.lr_discriminator;
  j["sigma"] = c.sigma;
  j["subsample_ratio"] = c.subsample_ratio;
  j["center"] = to_string(c.center);
  j["synthesis"] = to_string(c.synthesis);
  j["gaussian_sigma"] = c.gaussian_sigma;
  return j;
}

RunConfig config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "p") {
        const auto p = v.get<long long>();
        if (p <= 0) throw ConfigError("p must be a positive odd integer");
        c.p = static_cast<std::size_t>(p);
      } else if (k == "levels") {
        c.levels = v.get<std::vector<int>>();
        std::sort(c.levels.begin(), c.levels.end());
        c.levels.erase(std::unique(c.levels.begin(), c.levels.end()), c.levels.end());
      } else if (k == "beta") {
        c.beta = v.get<double>();
      } else if (k == "alpha") {
        c.alpha = v.get<double>();
      } else if (k == "gamma") {
        c.gamma = v.get<double>();
      } else if (k == "delta") {
        c.delta = v.get<double>();
      } else if (k == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (k == "epochs") {
        c.epochs = v.get<std::size_t>();
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "lr_projector") {
        c.lr_projector = v.get<double>();
      } else if (k == "lr_discriminator") {
        c.lr_discriminator = v.get<double>();
      } else if (k == "sigma") {
        c.sigma = v.get<double>();
      } else if (k == "subsample_ratio") {
        c.subsample_ratio = v.get<double>();
      } else if (k == "center") {
        c.center = parse_center_mode(v.get<std::string>());
      } else if (k == "synthesis") {
        c.synthesis = parse_synthesis(v.get<std::string>());
      } else if (k == "gaussian_sigma") {
        c.gaussian_sigma = v.get<double>();
      } else {
        throw ConfigError("unknown config key '" + k + "'");
      }
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ConfigError("cannot parse " + path.string() + ": " + ex.what());
  }
  return config_from_json(j);
}

}  // namespace pbas::featureio
