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
#include <span>
#include <vector>

#include "hccrop/geometry.hpp"
#include "hccrop/grid.hpp"

namespace hccrop {

struct ScoredCrop {
  Box box;
  double score = 0.0;
};

// Values in [0, 1]; rows x cols is four times the basic feature map.
using Heatmap = Grid;

struct CropWeights {
  std::vector<double> weights;  // positive, sum to one

  std::size_t count() const { return weights.size(); }
};

// Crops scoring strictly above `threshold`, order preserved. When none
// clear it, returns the first best-scored crop alone.
std::vector<ScoredCrop> select_highly_scored(std::span<const ScoredCrop> crops, double threshold);

CropWeights softmax_weights(std::span<const double> scores);

// Softmax-weighted average of the selected crops' binary maps.
Heatmap pseudo_heatmap(std::span<const ScoredCrop> selected, ImageSize size, MapSize map);

// Mean absolute difference over all cells.
double content_loss(const Heatmap& pred, const Heatmap& gt);

// round(255 * h) per cell, row-major.
std::vector<std::uint8_t> to_gray8(const Heatmap& h);

}  // namespace hccrop
