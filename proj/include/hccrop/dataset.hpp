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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hccrop/geometry.hpp"
#include "hccrop/heatmap.hpp"
#include "hccrop/image.hpp"

namespace hccrop {

// Largest human-box share of the frame for an image to count as
// human-centric.
inline constexpr double kHumanCentricMaxArea = 0.9;

struct AnnotatedImage {
  std::string image;                     // reference as written in the annotation file
  std::filesystem::path path;            // resolved file path; empty for in-memory images
  std::shared_ptr<const Image> pixels;   // in-memory grid, if any
  ImageSize size;
  std::optional<Box> human_box;
  std::vector<ScoredCrop> crops;
  std::vector<Box> best_crops;           // explicit best-crop ground truth, if annotated
  bool human_centric = false;

  // In-memory pixels, or decoded from `path`. Decoded images must match `size`.
  Image load() const;
  // Human box the model should use: present only for human-centric images.
  std::optional<Box> subject() const { return human_centric ? human_box : std::nullopt; }
  std::vector<Box> crop_boxes() const;
  std::vector<double> crop_scores() const;
};

struct Diagnostic {
  std::size_t record = 0;           // image index in the file
  std::optional<std::size_t> crop;  // crop index within the record, if crop-level
  std::string message;

  std::string to_string() const;
};

struct DatasetIndex {
  std::string split = "train";
  std::vector<AnnotatedImage> images;
  // Mean ground-truth score over every crop of this index; unset when the
  // index holds no crops. The training split's value is the heatmap threshold.
  std::optional<double> mean_score;
  std::vector<Diagnostic> diagnostics;

  std::size_t crop_count() const;
  std::size_t human_centric_count() const;
  void refresh_mean();
  // Counts, human-centric ratio and a unit-bin histogram over the 1..5 scale.
  nlohmann::json statistics() const;
};

// Reads the canonical schema, either a bare array of image records or
// {"split": ..., "images": [...]}. Per record:
//   {"image": str, "width": int, "height": int,
//    "human_box": [x1, y1, x2, y2] | null,
//    "crops": [{"box": [x1, y1, x2, y2], "score": float}, ...],
//    "best_crops": [[x1, y1, x2, y2], ...]   (optional)
//    "human_centric": bool                   (optional; derived if absent)}
// Invalid crops are dropped and invalid images rejected; each rejection
// leaves a Diagnostic. Malformed JSON throws ValidationError with line and
// column.
DatasetIndex load_annotations(const std::filesystem::path& path, std::string split = "train");
DatasetIndex parse_annotations(const std::string& text, const std::filesystem::path& base_dir,
                               std::string split = "train");

nlohmann::json annotations_to_json(const DatasetIndex& index);

// First `train_count` images form the training split, the rest held out.
std::pair<DatasetIndex, DatasetIndex> split_dataset(const DatasetIndex& index, std::size_t train_count);

nlohmann::json box_to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);

}  // namespace hccrop
