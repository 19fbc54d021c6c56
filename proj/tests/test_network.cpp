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

#include <random>
#include <set>

#include "hccrop/error.hpp"
#include "hccrop/network.hpp"
#include "oracles.hpp"

using namespace hccrop;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.channels = 8;
  c.fuse_channels = 12;
  c.region_dim = 10;
  c.content_dim = 10;
  c.pooled = 3;
  c.content_grid = 8;
  c.heatmap_hidden = 4;
  c.heatmap_upsample = 2;
  c.content_width1 = 3;
  c.content_width2 = 4;
  c.short_side = 64;
  c.backbone_widths = {4, 4, 6, 6, 8};
  return c;
}

Image noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img = make_image(w, h);
  for (double& v : img.pixels.values()) v = u(rng);
  return img;
}

const std::vector<Box> kCrops{{0, 0, 60, 50}, {10, 5, 90, 60}, {30, 0, 96, 64}, {0, 20, 50, 64}};
const Box kHuman{35, 10, 60, 58};

void zero_parameters(CroppingModel& m) {
  for (std::size_t i = 0; i < m.parameters().size(); ++i) m.parameters()[i].value.fill(0.0);
}

std::vector<double> values_of(const Tape& t, Var v) {
  const Tensor& x = t.value(v);
  return {x.values().begin(), x.values().end()};
}

}  // namespace

TEST_CASE("default configuration yields stride 8/16/32 maps for a 256 x 256 input") {
  const CroppingModel model(ModelConfig{}, 1);
  const Image img = noise_image(256, 256, 2);
  Tape t(false);
  Binding b(t, model.parameters());
  const StageMaps s = model.backbone_features(b, t.constant(model.prepare_input(img)));
  CHECK(t.value(s.stride8).dim(1) == 32);
  CHECK(t.value(s.stride16).dim(1) == 16);
  CHECK(t.value(s.stride32).dim(2) == 8);
  const Var m = model.fuse_multiscale(b, s);
  CHECK(t.value(m).shape() == std::vector<int>{32, 32, 32});
  CHECK(basic_map_size(model.config(), img.size()).rows == 32);
  CHECK(heatmap_size(model.config(), img.size()).cols == 128);
}

TEST_CASE("basic_map_size and heatmap_size agree with the forward pass") {
  const CroppingModel model(small_config(), 3);
  for (auto [w, h] : std::vector<std::pair<int, int>>{{96, 64}, {64, 97}, {200, 75}, {33, 33}, {127, 301}}) {
    const Image img = noise_image(w, h, 4);
    Tape t(false);
    Binding b(t, model.parameters());
    const std::vector<Box> crops{Box::full(img.size())};
    const ForwardResult r = model.forward(b, model.prepare_input(img), img.size(), std::nullopt, crops);
    const MapSize m = basic_map_size(model.config(), img.size());
    CHECK(t.value(r.basic_map).dim(1) == m.rows);
    CHECK(t.value(r.basic_map).dim(2) == m.cols);
    const MapSize hm = heatmap_size(model.config(), img.size());
    CHECK(t.value(r.heatmap).dim(1) == hm.rows);
    CHECK(t.value(r.heatmap).dim(2) == hm.cols);
  }
}

TEST_CASE("scores: one per crop, finite, permutation equivariant, duplicates equal") {
  const CroppingModel model(small_config(), 5);
  const Image img = noise_image(96, 64, 6);
  const CropScores s = model.score_crops(img, kHuman, kCrops);
  REQUIRE(s.scores.size() == kCrops.size());
  for (double v : s.scores) CHECK(std::isfinite(v));
  REQUIRE(s.heatmap.has_value());
  for (double v : s.heatmap->values) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  const std::vector<Box> permuted{kCrops[2], kCrops[0], kCrops[3], kCrops[1]};
  const CropScores p = model.score_crops(img, kHuman, permuted);
  CHECK(p.scores[0] == s.scores[2]);
  CHECK(p.scores[1] == s.scores[0]);
  CHECK(p.scores[2] == s.scores[3]);
  CHECK(p.scores[3] == s.scores[1]);

  const std::vector<Box> dup{kCrops[1], kCrops[1], kCrops[1]};
  const CropScores d = model.score_crops(img, kHuman, dup);
  CHECK(d.scores[0] == d.scores[1]);
  CHECK(d.scores[1] == d.scores[2]);
  CHECK(d.scores[0] == s.scores[1]);

  CHECK_THROWS_AS(model.score_crops(img, kHuman, std::vector<Box>{}), ValidationError);
  CHECK_THROWS_AS(model.score_crops(img, kHuman, std::vector<Box>{{10, 10, 10, 20}}), ValidationError);
}

TEST_CASE("zero weights give a 0.5 heatmap and zero scores") {
  CroppingModel model(small_config(), 7);
  zero_parameters(model);
  const CropScores s = model.score_crops(noise_image(96, 64, 8), kHuman, kCrops);
  for (double v : s.scores) CHECK(v == 0.0);
  for (double v : s.heatmap->values) CHECK(v == 0.5);
}

TEST_CASE("zeroed partition transforms reduce to the residual identity") {
  CroppingModel model(small_config(), 9);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    auto& p = model.parameters()[i];
    if (p.name.rfind("partition.", 0) == 0) p.value.fill(0.0);
  }
  const Image img = noise_image(96, 64, 10);
  {
    Tape t(false);
    Binding b(t, model.parameters());
    const ForwardResult r = model.forward(b, model.prepare_input(img), img.size(), kHuman, kCrops);
    CHECK(values_of(t, r.crop_map) == values_of(t, r.basic_map));
  }
  ModelConfig no_res = small_config();
  no_res.use_residual = false;
  CroppingModel plain(no_res, 9);
  for (std::size_t i = 0; i < plain.parameters().size(); ++i) {
    auto& p = plain.parameters()[i];
    if (p.name.rfind("partition.", 0) == 0) p.value.fill(0.0);
  }
  Tape t(false);
  Binding b(t, plain.parameters());
  const ForwardResult r = plain.forward(b, plain.prepare_input(img), img.size(), kHuman, kCrops);
  for (double v : t.value(r.crop_map).values()) CHECK(v == 0.0);
}

TEST_CASE("partition path is skipped without a human box") {
  const CroppingModel model(small_config(), 11);
  const Image img = noise_image(96, 64, 12);
  Tape t(false);
  Binding b(t, model.parameters());
  const ForwardResult r = model.forward(b, model.prepare_input(img), img.size(), std::nullopt, kCrops);
  CHECK(r.crop_map.id == r.basic_map.id);
}

TEST_CASE("assign_cells for K = 1, 2, 9") {
  const PartitionGrid grid = partition_image({12, 9}, {4, 3, 8, 6});
  const CellPartition one = assign_cells(grid, 9, 12, 1);
  CHECK(std::set<int>(one.owner.begin(), one.owner.end()) == std::set<int>{0});

  const CellPartition two = assign_cells(grid, 9, 12, 2);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 12; ++j) {
      const bool inside = i >= 3 && i < 6 && j >= 4 && j < 8;
      CHECK(two.owner[i * 12 + j] == (inside ? 0 : 1));
    }
  }
  const CellPartition nine = assign_cells(grid, 9, 12, 9);
  CHECK(std::set<int>(nine.owner.begin(), nine.owner.end()).size() == 9);
  CHECK(nine.owner[0] == 0);
  CHECK(nine.owner[4 * 12 + 5] == 4);
  CHECK(nine.owner[8 * 12 + 11] == 8);

  for (int k : {1, 2, 9}) {
    ModelConfig c = small_config();
    c.partitions = k;
    const CroppingModel m(c, 13);
    const CropScores s = m.score_crops(noise_image(96, 64, 14), kHuman, kCrops);
    for (double v : s.scores) CHECK(std::isfinite(v));
  }
}

TEST_CASE("region feature sees the surroundings and content feature sees the crop") {
  const CroppingModel model(small_config(), 15);
  std::mt19937_64 rng(16);
  const Tensor map = oracle::random_tensor({8, 6, 8}, rng);
  const Box crop{2, 1, 5, 4};

  auto region = [&](const Tensor& m) {
    Tape t(false);
    Binding b(t, model.parameters());
    return values_of(t, model.region_feature(b, t.constant(m), crop));
  };
  Tensor outside = map;
  outside.at(3, 5, 7) += 5.0;
  CHECK(region(outside) != region(map));
  Tensor inside = map;
  inside.at(3, 2, 3) += 5.0;
  CHECK(region(inside) != region(map));

  auto content = [&](const Box& c) {
    Tape t(false);
    Binding b(t, model.parameters());
    std::mt19937_64 same(17);
    const Var pooled = t.constant(oracle::random_tensor({1, 8, 8}, same, 0.0, 1.0));
    return values_of(t, model.content_feature(b, pooled, rasterize(c, {80, 80}, {16, 16})));
  };
  CHECK(content({0, 0, 40, 40}) != content({40, 40, 80, 80}));
  CHECK(content({0, 0, 40, 40}) == content({0, 0, 40, 40}));
}

TEST_CASE("training and inference paths agree") {
  CroppingModel model(small_config(), 18);
  const Image img = noise_image(96, 64, 19);
  const CropScores s = model.score_crops(img, kHuman, kCrops);
  Tape t(true);
  Binding b(t, model.parameters());
  const ForwardResult r = model.forward(b, model.prepare_input(img), img.size(), kHuman, kCrops);
  CHECK(values_of(t, r.scores) == s.scores);
  CHECK(values_of(t, r.heatmap) == s.heatmap->values);
}

TEST_CASE("end-to-end parameter gradients match central differences") {
  ModelConfig c = small_config();
  c.short_side = 32;
  CroppingModel model(c, 20);
  const Image img = noise_image(48, 32, 21);
  const Box human{18, 4, 32, 30};
  const std::vector<Box> crops{{0, 0, 30, 32}, {8, 2, 44, 30}, {16, 0, 48, 32}};
  const Tensor input = model.prepare_input(img);
  const std::vector<double> w{0.7, -1.3, 0.4};

  auto objective = [&](Tape& t) {
    Binding b(t, model.parameters());
    const ForwardResult r = model.forward(b, input, img.size(), human, crops);
    const Tensor& s = t.value(r.scores);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) sum += w[i] * s[i];
    double hm = 0.0;
    for (double v : t.value(r.heatmap).values()) hm += v;
    return std::pair{r, sum + hm / double(t.value(r.heatmap).size())};
  };

  model.parameters().zero_grad();
  {
    Tape t(true);
    Binding b(t, model.parameters());
    const ForwardResult r = model.forward(b, input, img.size(), human, crops);
    const Var scores = nn::reshape(t, r.scores, {3});
    const Var weighted = nn::linear(t, scores, t.constant(Tensor({1, 3}, w)), Var{});
    const double n = double(t.value(r.heatmap).size());
    const Var flat = nn::reshape(t, r.heatmap, {int(n)});
    const Var mean = nn::linear(t, flat, t.constant(Tensor({1, int(n)}, 1.0 / n)), Var{});
    t.backward(nn::add(t, weighted, mean));
  }

  std::mt19937_64 rng(22);
  std::vector<double> analytic, numeric;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    auto& p = model.parameters()[i];
    for (int k = 0; k < 3; ++k) {
      const std::size_t idx = rng() % p.value.size();
      analytic.push_back(p.grad[idx]);
      numeric.push_back(oracle::central_difference(
          [&] {
            Tape t(false);
            return objective(t).second;
          },
          p.value[idx], 1e-6));
    }
  }
  CHECK(oracle::relative_error(analytic, numeric, 1e-4) < 1e-5);
}

TEST_CASE("initialization is keyed by parameter name") {
  const CroppingModel a(small_config(), 23), b(small_config(), 23), c(small_config(), 24);
  ModelConfig k2 = small_config();
  k2.partitions = 2;
  const CroppingModel d(k2, 23);
  CHECK(a.parameters()[0].value.values()[0] == b.parameters()[0].value.values()[0]);
  CHECK(a.parameters().find("backbone.conv0.weight")->value.values()[3] !=
        c.parameters().find("backbone.conv0.weight")->value.values()[3]);
  for (const char* name : {"backbone.conv2.weight", "partition.phi1.weight", "score.fc.weight"}) {
    const auto& x = a.parameters().find(name)->value;
    const auto& y = d.parameters().find(name)->value;
    CHECK(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
  }
  CHECK(d.parameters().find("partition.phi3.weight") == nullptr);
  CHECK(a.parameters().find("partition.phi9.bias") != nullptr);
}

TEST_CASE("model config validation, labels and JSON") {
  ModelConfig basic = small_config();
  basic.use_partition = basic.use_human_feature = basic.use_content = false;
  CHECK(basic.label() == "basic");
  CHECK(small_config().label() == "full");
  ModelConfig k2 = small_config();
  k2.partitions = 2;
  CHECK(k2.label() == "region+partition2+content");
  ModelConfig conv = small_config();
  conv.use_graph = false;
  conv.use_human_feature = false;
  CHECK(conv.label() == "region+partition9+no-human+content-conv");

  ModelConfig bad = small_config();
  bad.partitions = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = small_config();
  bad.use_partition = false;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = small_config();
  bad.use_region = bad.use_content = false;
  CHECK_THROWS_AS(CroppingModel(bad, 0), ValidationError);
  bad = small_config();
  bad.channels = 7;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  const nlohmann::json j = k2;
  const ModelConfig back = j.get<ModelConfig>();
  CHECK(back.compatible_with(k2));
  CHECK_FALSE(back.compatible_with(small_config()));
  CHECK(nlohmann::json(back) == j);
}
