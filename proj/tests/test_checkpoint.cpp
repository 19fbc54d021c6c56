// Copyright 2026 The hccrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "hccrop/checkpoint.hpp"
#include "hccrop/error.hpp"
#include "hccrop/training.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace hccrop;
using nn::Tensor;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const std::filesystem::path& p, const std::string& b) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << b;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ModelConfig tiny() {
  ModelConfig c;
  c.channels = 4;
  c.fuse_channels = 6;
  c.region_dim = 5;
  c.content_dim = 5;
  c.pooled = 2;
  c.content_grid = 4;
  c.heatmap_hidden = 2;
  c.content_width1 = 2;
  c.content_width2 = 2;
  c.short_side = 32;
  c.backbone_widths = {2, 2, 3, 3, 4};
  return c;
}

}  // namespace

TEST_CASE("sha256_hex known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  std::mt19937_64 rng(1);
  Checkpoint c;
  c.config = {{"model", {{"channels", 4}}}};
  c.metadata = {{"epoch", 3}, {"rng", "12 34"}};
  c.arrays.emplace_back("a", oracle::random_tensor({2, 3, 4}, rng, -1e300, 1e300));
  Tensor special({5});
  special[0] = std::numeric_limits<double>::denorm_min();
  special[1] = -0.0;
  special[2] = std::numeric_limits<double>::infinity();
  special[3] = std::numeric_limits<double>::quiet_NaN();
  special[4] = 0.1;
  c.arrays.emplace_back("special", special);
  c.arrays.emplace_back("empty", Tensor(std::vector<int>{0}));

  const auto path = dir / "sub" / "x.ckpt";
  save_checkpoint(c, path);
  CHECK_FALSE(std::filesystem::exists(dir / "sub" / "x.ckpt.tmp"));
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == c.config);
  CHECK(back.metadata == c.metadata);
  REQUIRE(back.arrays.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.arrays[i].first == c.arrays[i].first);
    CHECK(bit_equal(back.arrays[i].second, c.arrays[i].second));
  }
  CHECK(back.find("nope") == nullptr);
  CHECK_THROWS_AS(back.at("nope"), IncompatibleCheckpointError);

  // Saving again gives identical bytes.
  save_checkpoint(back, dir / "y.ckpt");
  CHECK(read_bytes(path) == read_bytes(dir / "y.ckpt"));
}

TEST_CASE("corruption, truncation and foreign files are detected") {
  TempDir dir("ckpt_bad");
  Checkpoint c;
  c.arrays.emplace_back("w", Tensor({3, 3}, 0.25));
  const auto path = dir / "x.ckpt";
  save_checkpoint(c, path);
  const std::string good = read_bytes(path);

  std::string flipped = good;
  flipped[flipped.size() - 40] ^= 0x01;  // inside the payload
  write_bytes(dir / "flip.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), IntegrityError);

  std::string header_flip = good;
  header_flip[25] ^= 0x20;
  write_bytes(dir / "hdr.ckpt", header_flip);
  CHECK_THROWS_AS(load_checkpoint(dir / "hdr.ckpt"), IntegrityError);

  write_bytes(dir / "short.ckpt", good.substr(0, good.size() - 7));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), IntegrityError);
  write_bytes(dir / "tiny.ckpt", good.substr(0, 10));
  CHECK_THROWS_AS(load_checkpoint(dir / "tiny.ckpt"), IntegrityError);

  std::string magic = good;
  magic[0] = 'X';
  write_bytes(dir / "magic.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), IncompatibleCheckpointError);

  std::string version = good;
  version[8] = 2;
  write_bytes(dir / "v2.ckpt", version);
  CHECK_THROWS_AS(load_checkpoint(dir / "v2.ckpt"), IncompatibleCheckpointError);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), ValidationError);
}

TEST_CASE("model parameters survive a checkpoint and mismatches are rejected") {
  TempDir dir("ckpt_model");
  const CroppingModel a(tiny(), 3);
  save_checkpoint(make_checkpoint(a, TrainSchedule{}), dir / "a.ckpt");
  const Checkpoint ck = load_checkpoint(dir / "a.ckpt");

  CroppingModel b(tiny(), 99);
  load_parameters(ck, b);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(bit_equal(a.parameters()[i].value, b.parameters()[i].value));

  const CroppingModel c = model_from_checkpoint(ck);
  CHECK(c.config().label() == a.config().label());
  Image img = make_image(48, 32, {0.3, 0.5, 0.7});
  const std::vector<Box> crops{{0, 0, 30, 32}, {10, 0, 48, 30}};
  CHECK(c.score_crops(img, Box{20, 4, 30, 28}, crops).scores == a.score_crops(img, Box{20, 4, 30, 28}, crops).scores);

  ModelConfig wide = tiny();
  wide.channels = 6;
  CroppingModel w(wide, 3);
  CHECK_THROWS_AS(load_parameters(ck, w), IncompatibleCheckpointError);
  ModelConfig k2 = tiny();
  k2.partitions = 2;
  CroppingModel k(k2, 3);
  CHECK_THROWS_AS(load_parameters(ck, k), IncompatibleCheckpointError);

  // Shape tampering with a matching config is still caught.
  Checkpoint tampered = ck;
  tampered.arrays[0].second = Tensor({1});
  CHECK_THROWS_AS(load_parameters(tampered, b), IncompatibleCheckpointError);
}
