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
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "pbas/error.hpp"
#include "pbas/featureio.hpp"
#include "test_util.hpp"

using namespace pbas;
using namespace pbas::featureio;
using nlohmann::json;
using pbas::testing::ScratchDir;

namespace {

numerics::Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng) {
  numerics::Tensor t(std::move(dims));
  std::normal_distribution<double> g(0.0, 10.0);
  for (float& v : t.data()) v = static_cast<float>(g(rng));
  return t;
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (std::uint32_t(b[off + 3]) << 24);
}

}  // namespace

TEST_CASE("tensor round trip is bit exact") {
  ScratchDir dir("fio");
  std::mt19937_64 rng(1);
  const auto t = random_tensor({2, 3, 4}, rng);
  write_tensor(dir / "t.pbft", t);
  const auto bytes = read_bytes(dir / "t.pbft");
  CHECK(bytes.size() == 12 + 3 * 4 + 24 * 4);
  CHECK(std::memcmp(bytes.data(), "PBFT", 4) == 0);
  CHECK(le32(bytes, 4) == 1);
  CHECK(le32(bytes, 8) == 3);
  CHECK(le32(bytes, 12) == 2);
  CHECK(le32(bytes, 16) == 3);
  CHECK(le32(bytes, 20) == 4);
  const auto back = read_tensor(dir / "t.pbft");
  CHECK(back == t);
  write_tensor(dir / "u.pbft", back);
  CHECK(read_bytes(dir / "u.pbft") == bytes);
}

TEST_CASE("payload values are little-endian f32") {
  const numerics::Tensor t({1}, {7.5f});
  const auto bytes = encode_tensor(t);
  REQUIRE(bytes.size() == 20);
  std::uint32_t bits = le32(bytes, 16);
  float v;
  std::memcpy(&v, &bits, 4);
  CHECK(v == 7.5f);
  CHECK(decode_tensor(bytes)[0] == 7.5f);
}

TEST_CASE("zero 8x8 map: 24-byte header then 256 zero bytes") {
  const numerics::Tensor t({8, 8, 1});
  const auto bytes = encode_tensor(t);
  CHECK(bytes.size() == 24 + 256);
  for (std::size_t i = 24; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("random round trips including special values") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nd = 1 + rng() % 4;
    std::vector<std::size_t> dims(nd);
    for (auto& d : dims) d = 1 + rng() % 5;
    auto t = random_tensor(dims, rng);
    t[0] = -0.0f;
    if (t.size() > 1) t[1] = std::numeric_limits<float>::denorm_min();
    const auto back = decode_tensor(encode_tensor(t));
    REQUIRE(back.dims() == t.dims());
    CHECK(std::memcmp(back.data().data(), t.data().data(), t.size() * 4) == 0);
  }
}

TEST_CASE("malformed tensor files report format errors with offsets") {
  const auto good = encode_tensor(numerics::Tensor({2, 2}, {1, 2, 3, 4}));
  auto expect_offset = [](std::vector<std::uint8_t> b, std::size_t off) {
    try {
      decode_tensor(b, "case");
      FAIL("expected format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == off);
      CHECK(e.code() == ExitCode::kData);
    }
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_offset(bad_magic, 0);
  auto bad_version = good;
  bad_version[4] = 2;
  expect_offset(bad_version, 4);
  auto zero_ndim = good;
  zero_ndim[8] = 0;
  expect_offset(zero_ndim, 8);
  auto zero_dim = good;
  zero_dim[16] = 0;
  expect_offset(zero_dim, 16);
  auto truncated = good;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_tensor(truncated), FormatError);
  auto extra = good;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_tensor(extra), FormatError);
  CHECK_THROWS_AS(decode_tensor(std::vector<std::uint8_t>{'P', 'B'}), FormatError);
  CHECK_THROWS_AS(read_tensor("/nonexistent/dir/x.pbft"), DataError);
}

TEST_CASE("empty dims cannot be written") {
  CHECK_THROWS(numerics::Tensor(std::vector<std::size_t>{}));
}

TEST_CASE("pgm masks and heatmaps") {
  ScratchDir dir("pgm");
  std::vector<std::uint8_t> mask{0, 1, 1, 0, 0, 1};
  write_mask(dir / "m.pgm", mask, 2, 3);
  const Pgm p = read_pgm(dir / "m.pgm");
  CHECK(p.width == 3);
  CHECK(p.height == 2);
  CHECK(p.maxval == 255);
  CHECK(p.pixels[1] == 255);
  std::size_t h = 0, w = 0;
  CHECK(read_mask(dir / "m.pgm", &h, &w) == mask);
  CHECK(h == 2);
  CHECK(w == 3);

  write_mask(dir / "z.pgm", std::vector<std::uint8_t>(4, 0), 2, 2);
  for (auto v : read_mask(dir / "z.pgm")) CHECK(v == 0);

  write_heatmap(dir / "h.pgm", {0.0, 0.5, 1.0, 0.25}, 2, 2);
  const Pgm hm = read_pgm(dir / "h.pgm");
  CHECK(hm.maxval == 65535);
  CHECK(hm.pixels[0] == 0);
  CHECK(hm.pixels[2] == 65535);
  CHECK(hm.pixels[1] == 32768);

  write_file(dir / "bad.pgm", "P2\n2 2\n255\n0 0 0 0\n");
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), FormatError);
  write_file(dir / "short.pgm", std::string("P5\n2 2\n255\n") + std::string(3, '\0'));
  CHECK_THROWS_AS(read_pgm(dir / "short.pgm"), FormatError);
  write_file(dir / "comment.pgm", std::string("P5\n# exported\n2 1\n255\n") + std::string("\x00\x07", 2));
  CHECK(read_mask(dir / "comment.pgm") == std::vector<std::uint8_t>{0, 1});
}

namespace {

struct ManifestFixture {
  ScratchDir dir{"manifest"};
  ManifestFixture() {
    write_tensor(dir / "a_l2.pbft", numerics::Tensor({2, 2, 1}));
    write_tensor(dir / "a_l3.pbft", numerics::Tensor({1, 1, 1}));
    write_mask(dir / "a_mask.pgm", std::vector<std::uint8_t>(16, 0), 4, 4);
  }
  json entry(const std::string& id, const std::string& label, bool mask) const {
    json e{{"id", id},
           {"label", label},
           {"levels", {{"2", "a_l2.pbft"}, {"3", "a_l3.pbft"}}},
           {"image_height", 4},
           {"image_width", 4}};
    if (mask) e["mask"] = "a_mask.pgm";
    return e;
  }
  json manifest(const std::string& split, json entries) const {
    return json{{"format", "pbas-manifest"},
                {"version", 1},
                {"split", split},
                {"category", "toy"},
                {"entries", std::move(entries)}};
  }
};

}  // namespace

TEST_CASE("manifest contracts") {
  ManifestFixture f;
  const json one = f.manifest("train", json::array({f.entry("a", "normal", false)}));
  const auto m = parse_manifest(one, f.dir.path());
  REQUIRE(m.entries.size() == 1);
  CHECK(m.category == "toy");
  CHECK(m.entries[0].levels.at(2) == f.dir / "a_l2.pbft");

  CHECK_THROWS_AS(parse_manifest(f.manifest("train", json::array({f.entry("a", "anomalous", true)})),
                                 f.dir.path()),
                  ManifestError);
  const json no_mask = f.manifest("test", json::array({f.entry("a", "anomalous", false)}));
  CHECK_NOTHROW(parse_manifest(no_mask, f.dir.path()));
  CHECK_THROWS_AS(parse_manifest(no_mask, f.dir.path(), {true}), ManifestError);
  CHECK_NOTHROW(parse_manifest(f.manifest("test", json::array({f.entry("a", "anomalous", true)})),
                               f.dir.path(), {true}));

  json unknown = one;
  unknown["extra"] = 1;
  CHECK_THROWS_AS(parse_manifest(unknown, f.dir.path()), ManifestError);
  json dup = f.manifest("test", json::array({f.entry("a", "normal", false), f.entry("a", "normal", false)}));
  CHECK_THROWS_AS(parse_manifest(dup, f.dir.path()), ManifestError);
  json missing = f.manifest("train", json::array({f.entry("a", "normal", false)}));
  missing["entries"][0]["levels"]["2"] = "nope.pbft";
  CHECK_THROWS_AS(parse_manifest(missing, f.dir.path()), ManifestError);
  json badsplit = one;
  badsplit["split"] = "val";
  CHECK_THROWS_AS(parse_manifest(badsplit, f.dir.path()), ManifestError);
}

TEST_CASE("manifest save and load round trip") {
  ManifestFixture f;
  const auto m = parse_manifest(
      f.manifest("test", json::array({f.entry("a", "anomalous", true), f.entry("b", "normal", false)})),
      f.dir.path());
  save_manifest(f.dir / "m.json", m);
  const auto back = load_manifest(f.dir / "m.json");
  REQUIRE(back.entries.size() == 2);
  CHECK(back.split == Split::kTest);
  CHECK(back.entries[0].mask.has_value());
  CHECK_FALSE(back.entries[1].mask.has_value());
  CHECK(fs::equivalent(back.entries[0].levels.at(3), f.dir / "a_l3.pbft"));
  std::ifstream in(f.dir / "m.json");
  const json j = json::parse(in);
  CHECK(j["entries"][0]["levels"]["2"] == "a_l2.pbft");
}

TEST_CASE("subsample keeps ceil(r N) entries deterministically") {
  DatasetManifest m;
  for (int i = 0; i < 37; ++i) m.entries.push_back({"e" + std::to_string(i), {}, Label::kNormal, {}, 1, 1});
  for (double r : {0.1, 0.25, 0.5, 0.75, 1.0, 0.01}) {
    const auto a = subsample(m, r, 7);
    const auto b = subsample(m, r, 7);
    CHECK(a.entries.size() == static_cast<std::size_t>(std::ceil(r * 37 - 1e-9)));
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].id == b.entries[i].id);
    for (std::size_t i = 1; i < a.entries.size(); ++i) {
      CHECK(std::stoi(a.entries[i - 1].id.substr(1)) < std::stoi(a.entries[i].id.substr(1)));
    }
  }
  CHECK(subsample(m, 1.0, 3).entries.size() == 37);
  std::vector<std::string> ids1, ids2;
  for (const auto& e : subsample(m, 0.5, 1).entries) ids1.push_back(e.id);
  for (const auto& e : subsample(m, 0.5, 2).entries) ids2.push_back(e.id);
  CHECK(ids1 != ids2);
  CHECK_THROWS_AS(subsample(m, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(subsample(m, 1.5, 1), ConfigError);
}

TEST_CASE("run config defaults, validation and json") {
  const RunConfig c;
  CHECK(c.p == 3);
  CHECK(c.levels == std::vector<int>{2, 3});
  CHECK(c.beta == 0.1);
  CHECK(c.alpha == 0.3);
  CHECK(c.gamma == 1e-5);
  CHECK(c.delta == 1e-2);
  CHECK(c.batch_size == 8);
  CHECK(c.epochs == 400);
  CHECK(c.lr_projector == 1e-4);
  CHECK(c.lr_discriminator == 2e-4);
  CHECK_NOTHROW(c.validate());

  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(config_from_json(json{{"p", 4}}).validate(), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"beta", 0.0}}).validate(), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"alpha", -1.0}}).validate(), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"subsample_ratio", 1.5}}).validate(), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"center", "kmeans"}}), ConfigError);
  const auto lv = config_from_json(json{{"levels", {3, 2, 3}}, {"synthesis", "gaussian"}});
  CHECK(lv.levels == std::vector<int>{2, 3});
  CHECK(lv.synthesis == Synthesis::kGaussian);
}
