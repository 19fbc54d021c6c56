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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hccrop/geometry.hpp"

namespace hccrop {

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either argument has zero rank variance. Requires N >= 2.
double srcc(std::span<const double> y, std::span<const double> y_hat);

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Indices sorted by descending value, ties by lowest index.
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k);

// Per-image averaged top-N accuracy in [0, 1]: for K = 1..4, whether any of
// the K best predicted crops is among the ground-truth top N; the four
// indicators are averaged. nullopt when the image has fewer than N crops.
std::optional<double> acc_top_n(std::span<const double> gt_scores, std::span<const double> pred_scores,
                                std::size_t n);

struct BestCropResult {
  double iou = 0.0;
  double disp = 0.0;
  std::size_t matched = 0;  // index of the argmax-IoU ground-truth crop
};

// IoU is the maximum over gt_crops; Disp is measured against that argmax.
BestCropResult best_crop_eval(const Box& pred_best, std::span<const Box> gt_crops, ImageSize size);

enum class Protocol { kGaicd, kIouDisp };

std::string protocol_name(Protocol p);
Protocol parse_protocol(const std::string& name);

struct ImageEval {
  std::string image;
  std::optional<double> srcc;
  std::optional<double> acc5;  // in [0, 100]
  std::optional<double> acc10;
  std::optional<double> iou;
  std::optional<double> disp;
  std::optional<Box> predicted;
};

struct EvalReport {
  Protocol protocol = Protocol::kGaicd;
  std::string label;  // configuration name, e.g. "basic" or "full"
  double srcc_mean = 0.0;
  double acc5_mean = 0.0;
  double acc10_mean = 0.0;
  double iou_mean = 0.0;
  double disp_mean = 0.0;
  std::size_t skipped_acc5 = 0;
  std::size_t skipped_acc10 = 0;
  std::vector<ImageEval> images;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Fills the means from the per-image records.
EvalReport summarize(Protocol protocol, std::string label, std::vector<ImageEval> images);

}  // namespace hccrop
