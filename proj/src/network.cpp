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

#include "hccrop/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hccrop/error.hpp"

namespace hccrop {

using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void fill_normal(Tensor& t, double stddev, std::uint64_t seed, const std::string& name) {
  const std::uint64_t key = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (channels < 2 || channels % 2 != 0) fail("channels must be even and >= 2");
  if (fuse_channels < 1 || region_dim < 1 || content_dim < 1) fail("feature widths must be positive");
  if (pooled < 1) fail("pooled must be positive");
  if (partitions != 1 && partitions != 2 && partitions != 9) fail("partitions must be 1, 2 or 9");
  if (heatmap_upsample < 1 || heatmap_hidden < 1) fail("heatmap head sizes must be positive");
  if (content_grid < 4 || content_grid % 4 != 0) fail("content_grid must be a positive multiple of 4");
  if (content_width1 < 1 || content_width2 < 1) fail("content encoder widths must be positive");
  if (short_side < 32) fail("short_side must be at least 32 (backbone stride)");
  if (backbone != "tiny") fail("unknown backbone '" + backbone + "'");
  if (backbone_widths.size() != 5) fail("tiny backbone needs five widths");
  for (int w : backbone_widths) {
    if (w < 1) fail("backbone widths must be positive");
  }
  if (use_human_feature && !use_partition) fail("use_human_feature requires use_partition");
  if (!use_region && !use_content) fail("score head needs region or content features");
}

std::string ModelConfig::label() const {
  if (!use_partition && !use_content && use_region) return "basic";
  if (use_partition && use_human_feature && use_residual && use_graph && use_content && use_region &&
      partitions == 9) {
    return "full";
  }
  std::string s;
  auto add = [&](const char* part) { s += (s.empty() ? "" : "+") + std::string(part); };
  if (use_region) add("region");
  if (use_partition) add(("partition" + std::to_string(partitions)).c_str());
  if (use_partition && !use_human_feature) add("no-human");
  if (use_partition && !use_residual) add("no-residual");
  if (use_content) add(use_graph ? "content" : "content-conv");
  return s;
}

bool ModelConfig::compatible_with(const ModelConfig& o) const {
  return channels == o.channels && fuse_channels == o.fuse_channels && region_dim == o.region_dim &&
         content_dim == o.content_dim && pooled == o.pooled && partitions == o.partitions &&
         heatmap_upsample == o.heatmap_upsample && heatmap_hidden == o.heatmap_hidden &&
         content_grid == o.content_grid && content_width1 == o.content_width1 &&
         content_width2 == o.content_width2 && backbone == o.backbone && backbone_widths == o.backbone_widths &&
         use_partition == o.use_partition && use_human_feature == o.use_human_feature &&
         use_residual == o.use_residual && use_graph == o.use_graph && use_content == o.use_content &&
         use_region == o.use_region;
}

void to_json(nlohmann::json& j, const CandidateParams& p) {
  j = {{"scales", p.scales},
       {"min_aspect", p.min_aspect},
       {"max_aspect", p.max_aspect},
       {"stride_fraction", p.stride_fraction},
       {"min_area_fraction", p.min_area_fraction}};
}

void from_json(const nlohmann::json& j, CandidateParams& p) {
  CandidateParams d;
  p.scales = j.value("scales", d.scales);
  p.min_aspect = j.value("min_aspect", d.min_aspect);
  p.max_aspect = j.value("max_aspect", d.max_aspect);
  p.stride_fraction = j.value("stride_fraction", d.stride_fraction);
  p.min_area_fraction = j.value("min_area_fraction", d.min_area_fraction);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"channels", c.channels},
       {"fuse_channels", c.fuse_channels},
       {"region_dim", c.region_dim},
       {"content_dim", c.content_dim},
       {"pooled", c.pooled},
       {"partitions", c.partitions},
       {"heatmap_upsample", c.heatmap_upsample},
       {"heatmap_hidden", c.heatmap_hidden},
       {"content_grid", c.content_grid},
       {"content_width1", c.content_width1},
       {"content_width2", c.content_width2},
       {"short_side", c.short_side},
       {"backbone", c.backbone},
       {"backbone_widths", c.backbone_widths},
       {"use_partition", c.use_partition},
       {"use_human_feature", c.use_human_feature},
       {"use_residual", c.use_residual},
       {"use_graph", c.use_graph},
       {"use_content", c.use_content},
       {"use_region", c.use_region},
       {"candidates", c.candidates}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig d;
  c.channels = j.value("channels", d.channels);
  c.fuse_channels = j.value("fuse_channels", d.fuse_channels);
  c.region_dim = j.value("region_dim", d.region_dim);
  c.content_dim = j.value("content_dim", d.content_dim);
  c.pooled = j.value("pooled", d.pooled);
  c.partitions = j.value("partitions", d.partitions);
  c.heatmap_upsample = j.value("heatmap_upsample", d.heatmap_upsample);
  c.heatmap_hidden = j.value("heatmap_hidden", d.heatmap_hidden);
  c.content_grid = j.value("content_grid", d.content_grid);
  c.content_width1 = j.value("content_width1", d.content_width1);
  c.content_width2 = j.value("content_width2", d.content_width2);
  c.short_side = j.value("short_side", d.short_side);
  c.backbone = j.value("backbone", d.backbone);
  c.backbone_widths = j.value("backbone_widths", d.backbone_widths);
  c.use_partition = j.value("use_partition", d.use_partition);
  c.use_human_feature = j.value("use_human_feature", d.use_human_feature);
  c.use_residual = j.value("use_residual", d.use_residual);
  c.use_graph = j.value("use_graph", d.use_graph);
  c.use_content = j.value("use_content", d.use_content);
  c.use_region = j.value("use_region", d.use_region);
  c.candidates = j.contains("candidates") ? j.at("candidates").get<CandidateParams>() : d.candidates;
}

Var Binding::operator()(const std::string& name) {
  if (auto it = cache_.find(name); it != cache_.end()) return it->second;
  Var v;
  if (mutable_ != nullptr) {
    v = tape_.parameter(mutable_->at(name));
  } else {
    const nn::Parameter* p = frozen_->find(name);
    if (p == nullptr) throw ValidationError("unknown parameter " + name);
    v = tape_.parameter(*p);
  }
  cache_.emplace(name, v);
  return v;
}

CellPartition assign_cells(const PartitionGrid& grid, int rows, int cols, int partitions) {
  CellPartition cp;
  cp.rows = rows;
  cp.cols = cols;
  cp.count = partitions;
  cp.owner.resize(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const int label = grid.cell_of(j + 0.5, i + 0.5);
      int owner = 0;
      if (partitions == 9) {
        owner = label - 1;
      } else if (partitions == 2) {
        owner = label == 5 ? 0 : 1;
      }
      cp.owner[static_cast<std::size_t>(i) * cols + j] = owner;
    }
  }
  return cp;
}

MapSize basic_map_size(const ModelConfig& config, ImageSize original) {
  int w = original.width, h = original.height;
  if (w <= 0 || h <= 0) throw ValidationError("empty image size");
  if (w <= h) {
    h = std::max(1, static_cast<int>(std::lround(double(h) * config.short_side / w)));
    w = config.short_side;
  } else {
    w = std::max(1, static_cast<int>(std::lround(double(w) * config.short_side / h)));
    h = config.short_side;
  }
  for (int i = 0; i < 3; ++i) {
    w = (w - 1) / 2 + 1;
    h = (h - 1) / 2 + 1;
  }
  return {h, w};
}

MapSize heatmap_size(const ModelConfig& config, ImageSize original) {
  const MapSize m = basic_map_size(config, original);
  return {m.rows * config.heatmap_upsample, m.cols * config.heatmap_upsample};
}

CroppingModel::CroppingModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build_parameters();
  initialize(seed);
}

int CroppingModel::partition_input_channels() const {
  return config_.channels + (config_.use_human_feature ? config_.channels / 2 : 0);
}

int CroppingModel::score_input_dim() const {
  return (config_.use_region ? config_.region_dim : 0) + (config_.use_content ? config_.content_dim : 0);
}

void CroppingModel::build_parameters() {
  const ModelConfig& c = config_;
  auto conv = [&](const std::string& name, int out, int in, int k) {
    params_.add(name + ".weight", {out, in, k, k});
    params_.add(name + ".bias", {out});
  };
  auto fc = [&](const std::string& name, int out, int in) {
    params_.add(name + ".weight", {out, in});
    params_.add(name + ".bias", {out});
  };

  int in = 3;
  for (std::size_t i = 0; i < c.backbone_widths.size(); ++i) {
    conv("backbone.conv" + std::to_string(i), c.backbone_widths[i], in, 3);
    in = c.backbone_widths[i];
  }
  for (int s = 0; s < 3; ++s) conv("fuse.proj" + std::to_string(s), c.fuse_channels, c.backbone_widths[2 + s], 1);
  conv("fuse.reduce", c.channels, c.fuse_channels, 1);

  if (c.use_partition) {
    if (c.use_human_feature) fc("human.fc", c.channels / 2, c.channels);
    for (int k = 1; k <= c.partitions; ++k) conv("partition.phi" + std::to_string(k), c.channels, partition_input_channels(), 3);
  }
  if (c.use_content) {
    if (c.use_graph) {
      params_.add("graph.theta", {c.channels, c.channels});
    } else {
      conv("graph.conv", c.channels, c.channels, 3);
    }
    conv("heatmap.conv", c.heatmap_hidden, c.channels, 3);
    conv("heatmap.head", 1, c.heatmap_hidden, 1);
    conv("content.conv1", c.content_width1, 2, 3);
    conv("content.conv2", c.content_width2, c.content_width1, 3);
    const int g = c.content_grid / 4;
    fc("content.fc", c.content_dim, c.content_width2 * g * g);
  }
  if (c.use_region) fc("region.fc", c.region_dim, 2 * c.channels * c.pooled * c.pooled);
  fc("score.fc", 1, score_input_dim());
}

void CroppingModel::initialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Parameter& p = params_[i];
    if (ends_with(p.name, ".bias")) {
      p.value.fill(0.0);
      continue;
    }
    const double fan_in = double(p.value.size()) / double(p.value.dim(0));
    double gain = 2.0;
    if (starts_with(p.name, "score.") || starts_with(p.name, "human.") || starts_with(p.name, "fuse.") ||
        p.name == "heatmap.head.weight") {
      gain = 1.0;  // no rectifier follows
    }
    double stddev = std::sqrt(gain / fan_in);
    // Partition transforms start close to the residual identity.
    if (starts_with(p.name, "partition.")) stddev *= 0.1;
    fill_normal(p.value, stddev, seed, p.name);
  }
}

Tensor CroppingModel::prepare_input(const Image& image) const {
  Tensor t = resize_short_side(image, config_.short_side).pixels;
  for (double& v : t.values()) v = 2.0 * v - 1.0;
  return t;
}

StageMaps CroppingModel::backbone_features(Binding& b, Var image) const {
  Tape& t = b.tape();
  const Tensor& x = t.value(image);
  if (x.rank() != 3 || x.dim(0) != 3) throw ValidationError("backbone expects a [3, H, W] image");
  if (x.dim(1) < 32 || x.dim(2) < 32) {
    throw ValidationError("image " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(1)) +
                          " is smaller than the backbone stride 32");
  }
  StageMaps out;
  Var h = image;
  for (int i = 0; i < 5; ++i) {
    const std::string n = "backbone.conv" + std::to_string(i);
    h = nn::relu(t, nn::conv2d(t, h, b(n + ".weight"), b(n + ".bias"), 2, 1));
    if (i == 2) out.stride8 = h;
    if (i == 3) out.stride16 = h;
    if (i == 4) out.stride32 = h;
  }
  return out;
}

Var CroppingModel::fuse_multiscale(Binding& b, const StageMaps& stages) const {
  Tape& t = b.tape();
  const int h = t.value(stages.stride8).dim(1);
  const int w = t.value(stages.stride8).dim(2);
  const Var maps[3] = {stages.stride8, stages.stride16, stages.stride32};
  Var sum;
  for (int s = 0; s < 3; ++s) {
    const std::string n = "fuse.proj" + std::to_string(s);
    Var p = nn::conv2d(t, maps[s], b(n + ".weight"), b(n + ".bias"), 1, 0);
    const Tensor& pv = t.value(p);
    if (pv.dim(1) != h || pv.dim(2) != w) p = nn::resize_bilinear(t, p, h, w);
    sum = sum.valid() ? nn::add(t, sum, p) : p;
  }
  return nn::conv2d(t, sum, b("fuse.reduce.weight"), b("fuse.reduce.bias"), 1, 0);
}

Var CroppingModel::extract_human_feature(Binding& b, Var basic, const Box& human_box) const {
  Tape& t = b.tape();
  const Var aligned = nn::roi_align(t, basic, human_box, config_.pooled);
  return nn::linear(t, nn::spatial_mean(t, aligned), b("human.fc.weight"), b("human.fc.bias"));
}

Var CroppingModel::partition_aware(Binding& b, Var basic, const CellPartition& cells, Var human_feature) const {
  Tape& t = b.tape();
  const Tensor& m = t.value(basic);
  const int c = m.dim(0), h = m.dim(1), w = m.dim(2);
  if (cells.rows != h || cells.cols != w) throw ValidationError("partition grid does not match the feature map");
  if (cells.count != config_.partitions) throw ValidationError("partition count does not match the model");

  Var input = basic;
  if (config_.use_human_feature) {
    if (!human_feature.valid()) throw ValidationError("partition_aware: human feature required");
    input = nn::concat(t, {basic, nn::tile_vector(t, human_feature, h, w)});
  }
  Var out = t.constant(Tensor({c, h, w}));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w);
  for (int k = 0; k < cells.count; ++k) {
    int y0 = h, x0 = w, y1 = -1, x1 = -1;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const bool in = cells.owner[static_cast<std::size_t>(i) * w + j] == k;
        mask[static_cast<std::size_t>(i) * w + j] = in;
        if (in) {
          y0 = std::min(y0, i);
          x0 = std::min(x0, j);
          y1 = std::max(y1, i);
          x1 = std::max(x1, j);
        }
      }
    }
    if (y1 < 0) continue;  // empty partition
    const nn::CellRect rect{y0, x0, y1 - y0 + 1, x1 - x0 + 1};
    const std::string n = "partition.phi" + std::to_string(k + 1);
    const Var sub = nn::masked_crop(t, input, rect, mask);
    Var phi = nn::relu(t, nn::conv2d(t, sub, b(n + ".weight"), b(n + ".bias"), 1, 1));
    if (config_.use_residual) phi = nn::add(t, phi, nn::masked_crop(t, basic, rect, mask));
    out = nn::masked_paste(t, out, phi, rect, mask);
  }
  return out;
}

Var CroppingModel::graph_relation(Binding& b, Var partition_map) const {
  Tape& t = b.tape();
  if (config_.use_graph) return nn::graph_relation(t, partition_map, b("graph.theta"));
  return nn::relu(t, nn::conv2d(t, partition_map, b("graph.conv.weight"), b("graph.conv.bias"), 1, 1));
}

Var CroppingModel::predict_heatmap(Binding& b, Var relation_map) const {
  Tape& t = b.tape();
  const Tensor& f = t.value(relation_map);
  const int up = config_.heatmap_upsample;
  Var h = nn::resize_bilinear(t, relation_map, f.dim(1) * up, f.dim(2) * up);
  h = nn::relu(t, nn::conv2d(t, h, b("heatmap.conv.weight"), b("heatmap.conv.bias"), 1, 1));
  h = nn::conv2d(t, h, b("heatmap.head.weight"), b("heatmap.head.bias"), 1, 0);
  return nn::sigmoid(t, h);
}

Var CroppingModel::pool_heatmap(Binding& b, Var heatmap) const {
  return nn::adaptive_avg_pool(b.tape(), heatmap, config_.content_grid, config_.content_grid);
}

Var CroppingModel::region_feature(Binding& b, Var map, const Box& crop) const {
  Tape& t = b.tape();
  const Tensor& m = t.value(map);
  const Box full{0.0, 0.0, double(m.dim(2)), double(m.dim(1))};
  const int p = config_.pooled;
  const Var roi = nn::roi_align(t, map, crop, p);
  const Var rod = nn::roi_align(t, nn::zero_inside(t, map, crop), full, p);
  const Var flat = nn::reshape(t, nn::concat(t, {roi, rod}), {2 * m.dim(0) * p * p});
  return nn::relu(t, nn::linear(t, flat, b("region.fc.weight"), b("region.fc.bias")));
}

Var CroppingModel::content_feature(Binding& b, Var pooled_heatmap, const Grid& crop_binary_map) const {
  Tape& t = b.tape();
  const int g = config_.content_grid;
  const Tensor& ph = t.value(pooled_heatmap);
  if (ph.rank() != 3 || ph.dim(0) != 1 || ph.dim(1) != g || ph.dim(2) != g) {
    throw ValidationError("content_feature: pooled heatmap must be [1, grid, grid]");
  }
  if (crop_binary_map.size() == 0) throw ValidationError("content_feature: empty binary map");
  const Var binary = t.constant(Tensor({1, crop_binary_map.rows, crop_binary_map.cols}, crop_binary_map.values));
  Var x = nn::concat(t, {nn::adaptive_avg_pool(t, binary, g, g), pooled_heatmap});
  x = nn::relu(t, nn::conv2d(t, x, b("content.conv1.weight"), b("content.conv1.bias"), 1, 1));
  x = nn::adaptive_avg_pool(t, x, g / 2, g / 2);
  x = nn::relu(t, nn::conv2d(t, x, b("content.conv2.weight"), b("content.conv2.bias"), 1, 1));
  x = nn::adaptive_avg_pool(t, x, g / 4, g / 4);
  x = nn::reshape(t, x, {int(t.value(x).size())});
  return nn::relu(t, nn::linear(t, x, b("content.fc.weight"), b("content.fc.bias")));
}

Var CroppingModel::score_head(Binding& b, Var region, Var content) const {
  Tape& t = b.tape();
  std::vector<Var> parts;
  if (config_.use_region) parts.push_back(region);
  if (config_.use_content) parts.push_back(content);
  const Var joined = parts.size() == 1 ? parts[0] : nn::concat(t, parts);
  return nn::linear(t, joined, b("score.fc.weight"), b("score.fc.bias"));
}

ForwardResult CroppingModel::forward(Binding& b, const Tensor& input, ImageSize original,
                                     const std::optional<Box>& human_box, std::span<const Box> crops) const {
  if (crops.empty()) throw ValidationError("score_crops: no candidate crops");
  if (original.width <= 0 || original.height <= 0) throw ValidationError("score_crops: empty image size");
  Tape& t = b.tape();
  ForwardResult r;
  const Var image = t.constant(input);
  r.basic_map = fuse_multiscale(b, backbone_features(b, image));
  const Tensor& m = t.value(r.basic_map);
  const int h = m.dim(1), w = m.dim(2);
  const double sx = double(w) / original.width;
  const double sy = double(h) / original.height;

  r.crop_map = r.basic_map;
  if (human_box && config_.use_partition) {
    const Box human = make_box(human_box->x1, human_box->y1, human_box->x2, human_box->y2, original);
    const Box mapped = human.scaled(sx, sy);
    Var fh;
    if (config_.use_human_feature) fh = extract_human_feature(b, r.basic_map, mapped);
    const PartitionGrid grid = partition_image({w, h}, mapped);
    r.crop_map = partition_aware(b, r.basic_map, assign_cells(grid, h, w, config_.partitions), fh);
  }

  Var pooled;
  r.heatmap_size = {h * config_.heatmap_upsample, w * config_.heatmap_upsample};
  if (config_.use_content) {
    r.heatmap = predict_heatmap(b, graph_relation(b, r.crop_map));
    pooled = pool_heatmap(b, r.heatmap);
  }

  std::vector<Var> scores;
  scores.reserve(crops.size());
  for (const Box& crop : crops) {
    if (!crop.valid()) throw ValidationError("score_crops: degenerate crop");
    Var region, content;
    if (config_.use_region) region = region_feature(b, r.crop_map, crop.scaled(sx, sy));
    if (config_.use_content) content = content_feature(b, pooled, rasterize(crop, original, r.heatmap_size));
    scores.push_back(score_head(b, region, content));
  }
  r.scores = nn::concat(t, scores);
  return r;
}

CropScores CroppingModel::score_crops(const Image& image, const std::optional<Box>& human_box,
                                      std::span<const Box> crops) const {
  Tape tape(false);
  Binding b(tape, params_);
  const ForwardResult r = forward(b, prepare_input(image), image.size(), human_box, crops);
  CropScores out;
  const Tensor& s = tape.value(r.scores);
  out.scores.assign(s.values().begin(), s.values().end());
  if (r.heatmap.valid()) {
    const Tensor& hv = tape.value(r.heatmap);
    Heatmap hm(hv.dim(1), hv.dim(2));
    hm.values.assign(hv.values().begin(), hv.values().end());
    out.heatmap = std::move(hm);
  }
  return out;
}

}  // namespace hccrop
