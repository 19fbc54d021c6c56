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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "hccrop/geometry.hpp"
#include "hccrop/heatmap.hpp"
#include "hccrop/image.hpp"
#include "hccrop/ops.hpp"
#include "hccrop/tape.hpp"

namespace hccrop {

struct ModelConfig {
  int channels = 32;         // C of the basic map
  int fuse_channels = 256;   // width each stage is projected to before summing
  int region_dim = 256;      // f^r
  int content_dim = 256;     // f^c
  int pooled = 8;            // RoI / RoD / human alignment size
  int partitions = 9;        // K in {1, 2, 9}
  int heatmap_upsample = 4;
  int heatmap_hidden = 16;
  int content_grid = 32;     // E^g input is pooled to grid x grid
  int content_width1 = 8;
  int content_width2 = 16;
  int short_side = 256;      // input resize
  std::string backbone = "tiny";
  std::vector<int> backbone_widths{16, 24, 32, 48, 64};

  bool use_partition = true;
  bool use_human_feature = true;
  bool use_residual = true;
  bool use_graph = true;
  bool use_content = true;
  bool use_region = true;

  CandidateParams candidates;

  // Throws ValidationError on inconsistent settings.
  void validate() const;
  // "basic", "full", or a '+'-joined list of the enabled features.
  std::string label() const;
  // Same architecture and parameter shapes.
  bool compatible_with(const ModelConfig& other) const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const CandidateParams& p);
void from_json(const nlohmann::json& j, CandidateParams& p);

// Resolves parameter names to tape variables, once per forward pass. A
// binding over a const ParameterSet never produces gradients.
class Binding {
 public:
  Binding(nn::Tape& tape, nn::ParameterSet& params) : tape_(tape), mutable_(&params), frozen_(&params) {}
  Binding(nn::Tape& tape, const nn::ParameterSet& params) : tape_(tape), frozen_(&params) {}

  nn::Tape& tape() { return tape_; }
  nn::Var operator()(const std::string& name);

 private:
  nn::Tape& tape_;
  nn::ParameterSet* mutable_ = nullptr;
  const nn::ParameterSet* frozen_ = nullptr;
  std::unordered_map<std::string, nn::Var> cache_;
};

struct StageMaps {
  nn::Var stride8, stride16, stride32;
};

struct ForwardResult {
  nn::Var scores;        // [N]
  nn::Var heatmap;       // [1, Hh, Wh]; invalid when the content branch is off
  nn::Var basic_map;     // M
  nn::Var crop_map;      // map the region features read (F or M)
  MapSize heatmap_size;
};

struct CropScores {
  std::vector<double> scores;
  std::optional<Heatmap> heatmap;
};

// Partition map of the basic feature grid: each cell gets the index of the
// transform that owns it, 0..K-1.
struct CellPartition {
  int rows = 0, cols = 0, count = 0;
  std::vector<int> owner;
};

CellPartition assign_cells(const PartitionGrid& grid_in_map_units, int rows, int cols, int partitions);

// Spatial size of the basic map and of the predicted heatmap for an image
// of `original` size, without running the network.
MapSize basic_map_size(const ModelConfig& config, ImageSize original);
MapSize heatmap_size(const ModelConfig& config, ImageSize original);

// Human-centric crop scorer: backbone, multi-scale fusion, partition-aware
// map, graph relation, heatmap head, RoI+RoD region feature, content
// feature encoder, and the linear score head.
class CroppingModel {
 public:
  CroppingModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // Resize to the configured short side and map pixels to [-1, 1].
  nn::Tensor prepare_input(const Image& image) const;

  StageMaps backbone_features(Binding& b, nn::Var image) const;
  nn::Var fuse_multiscale(Binding& b, const StageMaps& stages) const;
  // `human_box` in feature-map units.
  nn::Var extract_human_feature(Binding& b, nn::Var basic, const Box& human_box) const;
  nn::Var partition_aware(Binding& b, nn::Var basic, const CellPartition& cells, nn::Var human_feature) const;
  nn::Var graph_relation(Binding& b, nn::Var partition_map) const;
  nn::Var predict_heatmap(Binding& b, nn::Var relation_map) const;
  // Pools the heatmap to the content-encoder grid, shared across crops.
  nn::Var pool_heatmap(Binding& b, nn::Var heatmap) const;
  // `crop` in feature-map units.
  nn::Var region_feature(Binding& b, nn::Var map, const Box& crop) const;
  nn::Var content_feature(Binding& b, nn::Var pooled_heatmap, const Grid& crop_binary_map) const;
  nn::Var score_head(Binding& b, nn::Var region, nn::Var content) const;

  // Full forward on an already prepared input. Boxes are in pixels of the
  // original image (`original`).
  ForwardResult forward(Binding& b, const nn::Tensor& input, ImageSize original, const std::optional<Box>& human_box,
                        std::span<const Box> crops) const;

  // Inference on frozen weights; safe to call concurrently.
  CropScores score_crops(const Image& image, const std::optional<Box>& human_box, std::span<const Box> crops) const;

 private:
  void build_parameters();
  void initialize(std::uint64_t seed);
  int partition_input_channels() const;
  int score_input_dim() const;

  ModelConfig config_;
  nn::ParameterSet params_;
};

}  // namespace hccrop
