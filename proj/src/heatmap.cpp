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

#include "hccrop/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "hccrop/error.hpp"

namespace hccrop {

std::vector<ScoredCrop> select_highly_scored(std::span<const ScoredCrop> crops, double threshold) {
  if (crops.empty()) throw ValidationError("select_highly_scored: no crops");
  std::vector<ScoredCrop> out;
  for (const auto& c : crops) {
    if (c.score > threshold) out.push_back(c);
  }
  if (out.empty()) {
    const auto best = std::max_element(crops.begin(), crops.end(),
                                       [](const auto& a, const auto& b) { return a.score < b.score; });
    out.push_back(*best);
  }
  return out;
}

CropWeights softmax_weights(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("softmax_weights: no scores");
  const double top = *std::max_element(scores.begin(), scores.end());
  CropWeights w;
  w.weights.reserve(scores.size());
  double total = 0.0;
  for (double s : scores) {
    w.weights.push_back(std::exp(s - top));
    total += w.weights.back();
  }
  for (double& v : w.weights) v /= total;
  return w;
}

Heatmap pseudo_heatmap(std::span<const ScoredCrop> selected, ImageSize size, MapSize map) {
  if (selected.empty()) throw ValidationError("pseudo_heatmap: no selected crops");
  std::vector<double> scores;
  scores.reserve(selected.size());
  for (const auto& c : selected) scores.push_back(c.score);
  const CropWeights w = softmax_weights(scores);

  Heatmap h(map.rows, map.cols);
  for (std::size_t m = 0; m < selected.size(); ++m) {
    const Grid binary = rasterize(selected[m].box, size, map);
    for (std::size_t i = 0; i < h.size(); ++i) h.values[i] += w.weights[m] * binary.values[i];
  }
  // Rounding can push a fully covered cell a few ulps past 1.
  for (double& v : h.values) v = std::clamp(v, 0.0, 1.0);
  return h;
}

double content_loss(const Heatmap& pred, const Heatmap& gt) {
  if (!pred.same_shape(gt)) throw ValidationError("content_loss: heatmap shape mismatch");
  if (pred.size() == 0) throw ValidationError("content_loss: empty heatmap");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred.values[i] - gt.values[i]);
  return sum / static_cast<double>(pred.size());
}

std::vector<std::uint8_t> to_gray8(const Heatmap& h) {
  std::vector<std::uint8_t> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(h.values[i], 0.0, 1.0)));
  }
  return out;
}

}  // namespace hccrop
