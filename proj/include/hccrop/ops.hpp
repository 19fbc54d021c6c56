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
#include "hccrop/tape.hpp"

namespace hccrop::nn {

// Differentiable building blocks. Feature maps are [C, H, W]; vectors are
// rank-1. Boxes passed to spatial ops are in feature-map units, where cell
// (y, x) covers [x, x+1) x [y, y+1).

// `bias` may be an invalid Var.
Var conv2d(Tape& tape, Var x, Var weight, Var bias, int stride, int pad);
Var linear(Tape& tape, Var x, Var weight, Var bias);

Var relu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);

// Half-pixel bilinear resampling (corners not aligned).
Var resize_bilinear(Tape& tape, Var x, int out_h, int out_w);
// Mean over windows [floor(i*H/oh), ceil((i+1)*H/oh)).
Var adaptive_avg_pool(Tape& tape, Var x, int out_h, int out_w);
// [C, H, W] -> [C]
Var spatial_mean(Tape& tape, Var x);

// Concatenation along the leading axis; trailing dims must agree.
Var concat(Tape& tape, const std::vector<Var>& parts);
Var reshape(Tape& tape, Var x, std::vector<int> shape);
// [D] -> [D, h, w]
Var tile_vector(Tape& tape, Var v, int h, int w);

struct CellRect {
  int y0 = 0;
  int x0 = 0;
  int h = 0;
  int w = 0;
  bool empty() const { return h <= 0 || w <= 0; }
};

// Cells of `x` inside `rect`, with cells whose mask entry (H*W, row-major
// over the full map) is 0 set to zero.
Var masked_crop(Tape& tape, Var x, CellRect rect, std::span<const std::uint8_t> mask);
// Copy of `base` where masked cells inside `rect` take values from `patch`.
Var masked_paste(Tape& tape, Var base, Var patch, CellRect rect, std::span<const std::uint8_t> mask);

// Row-normalized non-negative cosine similarity between the L = H*W cell
// vectors of x; self-similarity is 1 and zero vectors are similar to
// nothing else. Returns [L, L].
Tensor cosine_adjacency(const Tensor& x);
// rectifier(A * X * theta) where X = [L, C] view of x; output [C, H, W].
// Gradient flows through the adjacency.
Var graph_relation(Tape& tape, Var x, Var theta);
// Same propagation with a fixed adjacency.
Var graph_propagate(Tape& tape, Var x, Var theta, Tensor adjacency);

// Bilinear region alignment to pooled x pooled bins with
// `sampling_ratio`^2 samples per bin. The box is clamped to the map.
Var roi_align(Tape& tape, Var x, const Box& box, int pooled, int sampling_ratio = 2);
// Copy of x with cells whose centers fall inside the box set to zero.
Var zero_inside(Tape& tape, Var x, const Box& box);

Var regression_loss(Tape& tape, Var pred, std::span<const double> targets);
Var ranking_loss(Tape& tape, Var pred, std::span<const double> targets);
Var mean_abs_error(Tape& tape, Var pred, const Tensor& target);
Var weighted_sum(Tape& tape, const std::vector<Var>& scalars, const std::vector<double>& weights);

}  // namespace hccrop::nn
