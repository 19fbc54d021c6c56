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
#include <string>
#include <vector>

#include "hccrop/dataset.hpp"
#include "hccrop/metrics.hpp"
#include "hccrop/network.hpp"

namespace hccrop {

struct BestCrop {
  Box box;
  std::size_t index = 0;  // position in `candidates`
  std::vector<Box> candidates;
  std::vector<double> scores;
  std::optional<Heatmap> heatmap;
};

// Scores the candidate grid and returns the top-1 crop (ties to the lowest
// index).
BestCrop predict_best_crop(const CroppingModel& model, const Image& image, const std::optional<Box>& human_box,
                           const CandidateParams& params);

// Explicit best crops when annotated, otherwise every crop sharing the
// maximum score. Throws ValidationError when the image has neither.
std::vector<Box> ground_truth_crops(const AnnotatedImage& image);

// gaicd: SRCC / Acc5 / Acc10 over the annotated crops.
// iou-disp: top-1 over the model's candidate grid vs ground_truth_crops.
EvalReport evaluate(const CroppingModel& model, const DatasetIndex& data, Protocol protocol);

enum class Baseline { kA, kB };
Baseline parse_baseline(const std::string& name);
std::string baseline_label(Baseline b);

// Baseline crop for one image; the full frame when no human box is annotated.
Box baseline_crop(Baseline which, const AnnotatedImage& image, const CandidateParams& params);
// iou-disp protocol only.
EvalReport evaluate_baseline(Baseline which, const DatasetIndex& data, const CandidateParams& params);

}  // namespace hccrop
