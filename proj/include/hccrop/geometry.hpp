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

#include <array>
#include <span>
#include <vector>

#include "hccrop/grid.hpp"

namespace hccrop {

struct ImageSize {
  int width = 0;
  int height = 0;

  double area() const { return static_cast<double>(width) * height; }
  bool operator==(const ImageSize&) const = default;
};

// Axis-aligned rectangle in source-image pixels. Valid boxes satisfy
// x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 < x2 && y1 < y2; }
  bool contains(const Box& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
  }
  bool inside(ImageSize size) const {
    return x1 >= 0.0 && y1 >= 0.0 && x2 <= size.width && y2 <= size.height;
  }
  bool operator==(const Box&) const = default;

  static Box full(ImageSize size) { return {0.0, 0.0, double(size.width), double(size.height)}; }
  // Box with coordinates divided by the image width/height.
  Box normalized(ImageSize size) const;
  Box scaled(double sx, double sy) const { return {x1 * sx, y1 * sy, x2 * sx, y2 * sy}; }
};

// Clamps to the image and throws ValidationError if the result is degenerate.
Box make_box(double x1, double y1, double x2, double y2, ImageSize size);

double intersection_area(const Box& a, const Box& b);

// Nine cells induced by the human box. Cells are numbered 1..9 row-major,
// so cell 5 is the human box itself. Edge cells may be empty.
struct PartitionGrid {
  std::array<double, 4> xs{};  // 0, human.x1, human.x2, width
  std::array<double, 4> ys{};  // 0, human.y1, human.y2, height

  Box cell(int k) const;
  // 1-based cell index containing point (x, y); points on a cut belong to
  // the cell to the right / below it.
  int cell_of(double x, double y) const;
};

PartitionGrid partition_image(ImageSize size, const Box& human_box);

double iou(const Box& a, const Box& b);

// Mean of the four edge offsets; horizontal edges normalized by width,
// vertical edges by height.
double boundary_displacement(const Box& a, const Box& b, ImageSize size);

struct MapSize {
  int rows = 0;
  int cols = 0;
  bool operator==(const MapSize&) const = default;
};

// Cell (i, j) is 1 iff its center, mapped to image coordinates, lies in
// the half-open box [x1, x2) x [y1, y2). A box that covers no center lights
// the cell containing its own center.
Grid rasterize(const Box& box, ImageSize size, MapSize map);

struct CandidateParams {
  std::vector<double> scales{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double min_aspect = 0.5;  // width / height, in pixels
  double max_aspect = 2.0;
  double stride_fraction = 0.25;  // of the crop side
  double min_area_fraction = 0.2;
};

// Grid-anchored crops: widths scale*W and heights scale*H over all scale
// pairs, slid with step stride_fraction * side. Sorted by (x1, y1, x2, y2),
// duplicates removed. Throws EmptyCandidatesError if nothing survives.
std::vector<Box> generate_candidates(ImageSize size, const CandidateParams& params);

// Largest w*h + alpha*(1 - distance of center to image center), normalized
// units. Ties go to the lowest index.
Box select_main_subject(std::span<const Box> boxes, ImageSize size, double alpha = 0.1);

Box baseline_a(const Box& human_box);

// Candidate maximizing IoU(human, c) + sqrt(2) - |center(human) - center(c)|
// with centers normalized by the image size.
Box baseline_b(const Box& human_box, std::span<const Box> candidates, ImageSize size);
double baseline_b_score(const Box& human_box, const Box& candidate, ImageSize size);

}  // namespace hccrop
