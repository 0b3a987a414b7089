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
#include "pbas/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "pbas/error.hpp"

namespace pbas::pipeline {
namespace {

using nlohmann::json;
using numerics::Matrix;

constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kShuffleStream = 0x2;
constexpr std::uint64_t kNoiseStream = 0x3;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ull);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<FeatureMap> project_all(const Model& model, const std::vector<FeatureMap>& t) {
  std::vector<FeatureMap> u;
  u.reserve(t.size());
  for (const auto& m : t) u.push_back(abl::project(m, model.projector));
  return u;
}

}  // namespace

FeatureMap dispersed_from_levels(const std::map<int, FeatureMap>& raw, const RunConfig& config) {
  std::map<int, FeatureMap> aggregated;
  for (int level : config.levels) {
    auto it = raw.find(level);
    if (it == raw.end()) throw DataError("hierarchy level " + std::to_string(level) + " not available");
    aggregated.emplace(level, aggregation::aggregate(it->second, config.p));
  }
  return aggregation::build_dispersed(aggregated);
}

FeatureMap load_dispersed(const featureio::ManifestEntry& entry, const RunConfig& config) {
  std::map<int, FeatureMap> raw;
  for (int level : config.levels) {
    auto it = entry.levels.find(level);
    if (it == entry.levels.end()) {
      throw DataError("entry '" + entry.id + "' has no tensor for level " + std::to_string(level));
    }
    raw.emplace(level, FeatureMap::from_tensor(featureio::read_tensor(it->second)));
  }
  return dispersed_from_levels(raw, config);
}

std::vector<FeatureMap> load_dispersed(const featureio::DatasetManifest& manifest,
                                       const RunConfig& config) {
  std::vector<FeatureMap> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(load_dispersed(e, config));
  return out;
}

Model initialize_model(const std::vector<FeatureMap>& train, const RunConfig& config) {
  config.validate();
  if (train.empty()) throw DataError("training set is empty");
  const std::size_t C = train.front().channels;
  Model model;
  model.config = config;
  std::mt19937_64 rng(derive_seed(config.seed, kInitStream));
  model.projector = abl::Projector::normal_init(C, rng);
  model.discriminator = rbo::Discriminator::normal_init(C, rng);
  if (config.center == CenterMode::kAlignment) {
    model.center = abl::init_center(train, config.batch_size, model.projector, config.beta);
  } else {
    model.center = abl::average_center(project_all(model, train));
  }
  model.projector.frozen = false;
  return model;
}

double center_loss_of(const Model& model, const std::vector<FeatureMap>& features) {
  const abl::CenterIndex index(model.center);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : features) {
    const Matrix u = abl::project(abl::to_rows(t), model.projector);
    const auto lc = abl::center_loss(u, index);
    sum += lc.value * static_cast<double>(u.rows);
    count += u.rows;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

TrainResult train(const std::vector<FeatureMap>& train, const RunConfig& config, std::ostream* log,
                  std::vector<EpochLog>* progress) {
  TrainResult result;
  result.model = initialize_model(train, config);
  Model& model = result.model;
  result.initial_center_loss = center_loss_of(model, train);

  const abl::CenterIndex index(model.center);
  rbo::Optimizers opt(config.lr_projector, config.lr_discriminator);
  const rbo::ObjectiveConfig objective{config.alpha, config.gamma, config.delta, config.synthesis,
                                       config.gaussian_sigma};
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffleStream));
  std::mt19937_64 noise_rng(derive_seed(config.seed, kNoiseStream));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng() % i]);
    }
    EpochLog entry;
    entry.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<FeatureMap> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      const Matrix t = abl::to_rows(batch);
      rbo::LossReport r;
      try {
        r = rbo::objective_step(model.projector, model.discriminator, opt, index, t, objective,
                                noise_rng);
      } catch (const DivergenceError& ex) {
        if (log) *log << "epoch " << epoch + 1 << ": " << ex.what() << "\n";
        throw;
      }
      entry.center += r.center;
      entry.normal += r.normal;
      entry.anomaly += r.anomaly;
      entry.total += r.total;
      entry.mean_normal_confidence += r.mean_normal_confidence;
      entry.mean_anomaly_confidence += r.mean_anomaly_confidence;
      entry.skipped += r.skipped;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    entry.center *= inv;
    entry.normal *= inv;
    entry.anomaly *= inv;
    entry.total *= inv;
    entry.mean_normal_confidence *= inv;
    entry.mean_anomaly_confidence *= inv;
    if (log) {
      *log << "epoch " << entry.epoch << " L_c=" << fmt(entry.center) << " L_n=" << fmt(entry.normal)
           << " L_a=" << fmt(entry.anomaly) << " total=" << fmt(entry.total);
      if (entry.skipped) *log << " skipped=" << entry.skipped;
      *log << "\n";
    }
    result.epochs.push_back(entry);
    if (progress) progress->push_back(entry);
  }
  return result;
}

namespace {

struct NamedArray {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<float>* data;
};

std::vector<NamedArray> parameter_arrays(Model& m) {
  std::vector<NamedArray> out;
  auto add = [&](const std::string& prefix, numerics::LinearLayer& l) {
    out.push_back({prefix + ".weight", {l.out_dim, l.in_dim}, &l.weight});
    out.push_back({prefix + ".bias", {l.out_dim}, &l.bias});
  };
  add("projector", m.projector.layer);
  add("discriminator.hidden1", m.discriminator.hidden1);
  add("discriminator.hidden2", m.discriminator.hidden2);
  add("discriminator.output", m.discriminator.output);
  return out;
}


}  // namespace

std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,L_c,L_n,L_a,total,mean_D_u,mean_D_z,skipped\n";
  for (const auto& e : log) {
    s += std::to_string(e.epoch) + "," + fmt(e.center) + "," + fmt(e.normal) + "," +
         fmt(e.anomaly) + "," + fmt(e.total) + "," + fmt(e.mean_normal_confidence) + "," +
         fmt(e.mean_anomaly_confidence) + "," + std::to_string(e.skipped) + "\n";
  }
  return s;
}

void save_checkpoint(const fs::path& dir, const Model& model, const std::vector<EpochLog>& log) {
  Model copy = model;
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  json header;
  header["format"] = "pbas-checkpoint";
  header["version"] = 1;
  header["channels"] = model.projector.channels();
  header["center"] = {model.center.height, model.center.width, model.center.channels};
  header["tensor_format"] = {{"magic", "PBFT"}, {"version", featureio::kTensorVersion}};
  json files = json::array();
  for (auto& a : parameter_arrays(copy)) {
    const std::string file = a.name + ".pbft";
    featureio::write_tensor(tmp / file, numerics::Tensor(a.dims, *a.data));
    files.push_back(file);
  }
  featureio::write_tensor(tmp / "center.pbft", model.center.to_tensor());
  files.push_back("center.pbft");
  header["files"] = files;
  featureio::write_text_atomic(tmp / "header.json", header.dump(2) + "\n");
  featureio::write_text_atomic(tmp / "config.json", featureio::to_json(model.config).dump(2) + "\n");
  featureio::write_text_atomic(tmp / "train_log.csv", train_log_csv(log));
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Model load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw DataError("no checkpoint header in " + dir.string());
  json header;
  try {
    in >> header;
  } catch (const json::exception& ex) {
    throw DataError("bad checkpoint header: " + std::string(ex.what()));
  }
  if (header.value("format", "") != "pbas-checkpoint" || header.value("version", 0) != 1) {
    throw DataError("unsupported checkpoint format in " + dir.string());
  }
  Model m;
  m.config = featureio::load_config(dir / "config.json");
  const std::size_t C = header.at("channels").get<std::size_t>();
  m.projector = abl::Projector(numerics::LinearLayer(C, C), false);
  m.discriminator.hidden1 = numerics::LinearLayer(C, C);
  m.discriminator.hidden2 = numerics::LinearLayer(C, C);
  m.discriminator.output = numerics::LinearLayer(C, 1);
  for (auto& a : parameter_arrays(m)) {
    const auto t = featureio::read_tensor(dir / (a.name + ".pbft"));
    if (t.dims() != a.dims) throw DataError("checkpoint array " + a.name + " has wrong shape");
    a.data->assign(t.data().begin(), t.data().end());
  }
  m.center = abl::CenterFeature::from_tensor(featureio::read_tensor(dir / "center.pbft"));
  if (m.center.channels != C) throw DataError("checkpoint center width does not match projector");
  return m;
}

std::vector<ImageResult> score_manifest(const Model& model,
                                        const featureio::DatasetManifest& manifest,
                                        bool load_masks) {
  std::vector<ImageResult> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const FeatureMap t = load_dispersed(e, model.config);
    if (t.channels != model.projector.channels()) {
      throw DataError("entry '" + e.id + "': dispersed width " + std::to_string(t.channels) +
                      " does not match the model (" + std::to_string(model.projector.channels()) + ")");
    }
    const FeatureMap u = abl::project(t, model.projector);
    ImageResult r;
    r.id = e.id;
    r.label = e.label;
    r.score = scoring::score(u, model.discriminator, e.image_height, e.image_width,
                             model.config.sigma);
    if (load_masks && e.mask) {
      std::size_t h = 0, w = 0;
      r.mask = featureio::read_mask(*e.mask, &h, &w);
      if (h != e.image_height || w != e.image_width) {
        throw DataError("entry '" + e.id + "': mask is " + std::to_string(h) + "x" +
                        std::to_string(w) + ", image dims are " + std::to_string(e.image_height) +
                        "x" + std::to_string(e.image_width));
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

Evaluation evaluate(const Model& model, const featureio::DatasetManifest& manifest,
                    bool pixel_metrics) {
  if (manifest.entries.empty()) throw DataError("test set is empty");
  Evaluation ev;
  ev.category = manifest.category;
  ev.images = score_manifest(model, manifest, pixel_metrics);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& im : ev.images) {
    scores.push_back(im.score.image_score);
    labels.push_back(im.label == featureio::Label::kAnomalous ? 1 : 0);
  }
  ev.report.image_auroc = metrics::auroc(scores, labels);
  ev.report.image_ap = metrics::average_precision(scores, labels);

  if (pixel_metrics) {
    std::vector<double> px;
    std::vector<std::uint8_t> gt;
    std::vector<std::vector<std::uint8_t>> masks(ev.images.size());
    std::vector<metrics::ScoredMask> maps;
    for (std::size_t i = 0; i < ev.images.size(); ++i) {
      const auto& im = ev.images[i];
      if (im.label == featureio::Label::kAnomalous && im.mask.empty()) {
        throw DataError("entry '" + im.id + "': anomalous entry without mask");
      }
      masks[i] = im.mask.empty() ? std::vector<std::uint8_t>(im.score.pixel_map.size(), 0) : im.mask;
      px.insert(px.end(), im.score.pixel_map.begin(), im.score.pixel_map.end());
      gt.insert(gt.end(), masks[i].begin(), masks[i].end());
    }
    for (std::size_t i = 0; i < ev.images.size(); ++i) {
      const auto& im = ev.images[i];
      maps.push_back({im.score.height, im.score.width, im.score.pixel_map, masks[i]});
    }
    ev.report.has_pixel_metrics = true;
    ev.report.pixel_auroc = metrics::auroc(px, gt);
    ev.report.pixel_ap = metrics::average_precision(px, gt);
    ev.report.pixel_pro = metrics::pro_score(maps);
  }
  return ev;
}

json metrics_json(const Evaluation& e) {
  json j;
  j["format"] = "pbas-metrics";
  j["version"] = 1;
  j["category"] = e.category;
  j["num_images"] = e.images.size();
  std::size_t anomalous = 0;
  for (const auto& im : e.images) anomalous += im.label == featureio::Label::kAnomalous;
  j["num_anomalous"] = anomalous;
  j["I-AUROC"] = e.report.image_auroc;
  j["I-AP"] = e.report.image_ap;
  if (e.report.has_pixel_metrics) {
    j["P-AUROC"] = e.report.pixel_auroc;
    j["P-AP"] = e.report.pixel_ap;
    j["P-PRO"] = e.report.pixel_pro;
  } else {
    j["P-AUROC"] = nullptr;
    j["P-AP"] = nullptr;
    j["P-PRO"] = nullptr;
  }
  return j;
}

std::string metrics_csv(const Evaluation& e) {
  auto cell = [&](double v) { return e.report.has_pixel_metrics ? fmt(v) : std::string(); };
  return "category,I-AUROC,I-AP,P-AUROC,P-AP,P-PRO\n" + e.category + "," +
         fmt(e.report.image_auroc) + "," + fmt(e.report.image_ap) + "," +
         cell(e.report.pixel_auroc) + "," + cell(e.report.pixel_ap) + "," +
         cell(e.report.pixel_pro) + "\n";
}

std::string scores_csv(const std::vector<ImageResult>& images) {
  std::string s = "id,score,label\n";
  for (const auto& im : images) {
    s += im.id + "," + fmt(im.score.image_score) + "," +
         (im.label == featureio::Label::kAnomalous ? "anomalous" : "normal") + "\n";
  }
  return s;
}

void write_scores(const fs::path& out_dir, const std::vector<ImageResult>& images, bool heatmaps) {
  fs::create_directories(out_dir);
  featureio::write_text_atomic(out_dir / "scores.csv", scores_csv(images));
  if (!heatmaps) return;
  fs::create_directories(out_dir / "heatmaps");
  for (const auto& im : images) {
    featureio::write_heatmap(out_dir / "heatmaps" / (im.id + ".pgm"), im.score.pixel_map,
                             im.score.height, im.score.width);
    std::vector<float> raw(im.score.pixel_map.begin(), im.score.pixel_map.end());
    featureio::write_tensor(out_dir / "heatmaps" / (im.id + ".pbft"),
                            numerics::Tensor({im.score.height, im.score.width}, std::move(raw)));
  }
}

void write_evaluation(const fs::path& out_dir, const Evaluation& e, bool heatmaps) {
  write_scores(out_dir, e.images, heatmaps);
  featureio::write_text_atomic(out_dir / "metrics.json", metrics_json(e).dump(2) + "\n");
  featureio::write_text_atomic(out_dir / "metrics.csv", metrics_csv(e));
}

Pca principal_components(const Matrix& data, std::size_t k, std::size_t max_iterations,
                         double tolerance) {
  const std::size_t n = data.rows, d = data.cols;
  if (n == 0 || d == 0) throw DataError("principal_components: empty data");
  Pca pca;
  pca.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) pca.mean[c] += data(r, c);
  }
  for (double& m : pca.mean) m /= static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) centered[c] = data(r, c) - pca.mean[c];
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += centered[a] * centered[b];
    }
  }
  for (double& v : cov) v /= static_cast<double>(n);

  std::mt19937_64 rng(0x9ca);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(d), w(d);
  for (std::size_t comp = 0; comp < std::min(k, d); ++comp) {
    for (double& x : v) x = g(rng);
    // Keep the start orthogonal to components already found.
    auto orthogonalize = [&](std::vector<double>& x) {
      for (const auto& prev : pca.components) {
        const double p = std::inner_product(x.begin(), x.end(), prev.begin(), 0.0);
        for (std::size_t i = 0; i < d; ++i) x[i] -= p * prev[i];
      }
      const double norm = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
      if (norm > 0.0) {
        for (double& e : x) e /= norm;
      }
      return norm;
    };
    orthogonalize(v);
    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iterations; ++it) {
      for (std::size_t a = 0; a < d; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < d; ++b) s += cov[a * d + b] * v[b];
        w[a] = s;
      }
      const double next = std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
      const double norm = orthogonalize(w);
      if (norm <= 1e-300) {
        lambda = 0.0;
        break;
      }
      const bool done = std::abs(next - lambda) <= tolerance * std::max(1.0, std::abs(next));
      lambda = next;
      v = w;
      if (done && it > 2) break;
    }
    pca.components.push_back(v);
    pca.variances.push_back(std::max(0.0, lambda));
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * v[a] * v[b];
    }
  }
  return pca;
}

std::vector<ProjectedPoint> diagnose(const Model& model, const featureio::DatasetManifest& manifest,
                                     Pca* pca_out) {
  if (manifest.entries.empty()) throw DataError("diagnose: manifest is empty");
  std::vector<FeatureMap> t = load_dispersed(manifest, model.config);
  const Matrix u = abl::project(abl::to_rows(t), model.projector);
  const abl::CenterIndex index(model.center);
  const auto lc = abl::center_loss(u, index);
  Matrix z;
  if (model.config.synthesis == Synthesis::kRay) {
    z = afs::synthesize_rows(u, lc.assignments, model.center, {model.config.alpha, lc.value}).z;
  } else {
    std::mt19937_64 rng(derive_seed(model.config.seed, kNoiseStream));
    z = afs::gaussian_rows(u, model.config.gaussian_sigma, rng).z;
  }
  Matrix pooled(u.rows + z.rows, u.cols);
  std::copy(u.data.begin(), u.data.end(), pooled.data.begin());
  std::copy(z.data.begin(), z.data.end(), pooled.data.begin() + static_cast<std::ptrdiff_t>(u.data.size()));
  Pca pca = principal_components(pooled, 2);
  while (pca.components.size() < 2) pca.components.emplace_back(u.cols, 0.0);
  std::vector<ProjectedPoint> points(pooled.rows);
  for (std::size_t r = 0; r < pooled.rows; ++r) {
    double x = 0.0, y = 0.0;
    for (std::size_t c = 0; c < pooled.cols; ++c) {
      const double v = pooled(r, c) - pca.mean[c];
      x += v * pca.components[0][c];
      y += v * pca.components[1][c];
    }
    points[r] = {x, y, r < u.rows ? "normal" : "synthetic"};
  }
  if (pca_out) *pca_out = std::move(pca);
  return points;
}

std::string diagnose_csv(const std::vector<ProjectedPoint>& points) {
  std::string s = "x,y,role\n";
  for (const auto& p : points) s += fmt(p.x) + "," + fmt(p.y) + "," + p.role + "\n";
  return s;
}

}  // namespace pbas::pipeline
