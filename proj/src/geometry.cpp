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

#include "hccrop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "hccrop/error.hpp"

namespace hccrop {
namespace {

constexpr double kTol = 1e-9;

std::string describe(const Box& b) {
  std::ostringstream os;
  os << "[" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << "]";
  return os.str();
}

std::vector<double> anchor_positions(double extent, double side, double step) {
  std::vector<double> out;
  const double room = extent - side;
  const int n = static_cast<int>(std::floor(room / step + kTol));
  for (int i = 0; i <= n; ++i) out.push_back(std::min(i * step, room));
  if (room - out.back() > kTol) out.push_back(room);
  return out;
}

bool nearly_equal(const Box& a, const Box& b) {
  return std::abs(a.x1 - b.x1) <= kTol && std::abs(a.y1 - b.y1) <= kTol &&
         std::abs(a.x2 - b.x2) <= kTol && std::abs(a.y2 - b.y2) <= kTol;
}

}  // namespace

Box Box::normalized(ImageSize size) const {
  return {x1 / size.width, y1 / size.height, x2 / size.width, y2 / size.height};
}

Box make_box(double x1, double y1, double x2, double y2, ImageSize size) {
  Box b{std::clamp(x1, 0.0, double(size.width)), std::clamp(y1, 0.0, double(size.height)),
        std::clamp(x2, 0.0, double(size.width)), std::clamp(y2, 0.0, double(size.height))};
  if (!b.valid()) {
    throw ValidationError("degenerate box " + describe(Box{x1, y1, x2, y2}));
  }
  return b;
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

Box PartitionGrid::cell(int k) const {
  if (k < 1 || k > 9) throw ValidationError("partition index out of range");
  const int r = (k - 1) / 3;
  const int c = (k - 1) % 3;
  return {xs[c], ys[r], xs[c + 1], ys[r + 1]};
}

int PartitionGrid::cell_of(double x, double y) const {
  const int c = x < xs[1] ? 0 : (x < xs[2] ? 1 : 2);
  const int r = y < ys[1] ? 0 : (y < ys[2] ? 1 : 2);
  return r * 3 + c + 1;
}

PartitionGrid partition_image(ImageSize size, const Box& human_box) {
  if (size.width <= 0 || size.height <= 0) throw ValidationError("empty image size");
  if (!human_box.valid()) throw ValidationError("degenerate human box " + describe(human_box));
  if (!human_box.inside(size)) throw ValidationError("human box outside image " + describe(human_box));
  PartitionGrid g;
  g.xs = {0.0, human_box.x1, human_box.x2, double(size.width)};
  g.ys = {0.0, human_box.y1, human_box.y2, double(size.height)};
  return g;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double boundary_displacement(const Box& a, const Box& b, ImageSize size) {
  const double w = size.width;
  const double h = size.height;
  return (std::abs(a.x1 - b.x1) / w + std::abs(a.x2 - b.x2) / w + std::abs(a.y1 - b.y1) / h +
          std::abs(a.y2 - b.y2) / h) /
         4.0;
}

Grid rasterize(const Box& box, ImageSize size, MapSize map) {
  if (map.rows <= 0 || map.cols <= 0) throw ValidationError("map size must be positive");
  if (size.width <= 0 || size.height <= 0) throw ValidationError("empty image size");
  Grid out(map.rows, map.cols);
  const double sx = double(size.width) / map.cols;
  const double sy = double(size.height) / map.rows;
  bool any = false;
  for (int i = 0; i < map.rows; ++i) {
    const double cy = (i + 0.5) * sy;
    if (cy < box.y1 || cy >= box.y2) continue;
    for (int j = 0; j < map.cols; ++j) {
      const double cx = (j + 0.5) * sx;
      if (cx >= box.x1 && cx < box.x2) {
        out.at(i, j) = 1.0;
        any = true;
      }
    }
  }
  if (!any) {
    const int j = std::clamp(static_cast<int>(std::floor(box.center_x() / sx)), 0, map.cols - 1);
    const int i = std::clamp(static_cast<int>(std::floor(box.center_y() / sy)), 0, map.rows - 1);
    out.at(i, j) = 1.0;
  }
  return out;
}

std::vector<Box> generate_candidates(ImageSize size, const CandidateParams& params) {
  if (size.width <= 0 || size.height <= 0) throw ValidationError("empty image size");
  if (params.scales.empty()) throw ValidationError("candidate scales are empty");
  for (double s : params.scales) {
    if (!(s > 0.0 && s <= 1.0)) throw ValidationError("candidate scale outside (0, 1]");
  }
  if (!(params.min_aspect > 0.0) || params.max_aspect < params.min_aspect) {
    throw ValidationError("invalid aspect ratio range");
  }
  if (!(params.stride_fraction > 0.0 && params.stride_fraction <= 1.0)) {
    throw ValidationError("stride_fraction outside (0, 1]");
  }
  if (params.min_area_fraction < 0.0 || params.min_area_fraction > 1.0) {
    throw ValidationError("min_area_fraction outside [0, 1]");
  }

  const double W = size.width;
  const double H = size.height;
  std::vector<Box> out;
  for (double sw : params.scales) {
    for (double sh : params.scales) {
      const double w = sw * W;
      const double h = sh * H;
      const double aspect = w / h;
      if (aspect < params.min_aspect - kTol || aspect > params.max_aspect + kTol) continue;
      if (w * h < params.min_area_fraction * W * H - kTol) continue;
      for (double y : anchor_positions(H, h, params.stride_fraction * h)) {
        for (double x : anchor_positions(W, w, params.stride_fraction * w)) {
          out.push_back({x, y, std::min(x + w, W), std::min(y + h, H)});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Box& a, const Box& b) {
    return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
  });
  out.erase(std::unique(out.begin(), out.end(), nearly_equal), out.end());
  if (out.empty()) throw EmptyCandidatesError("no candidate crop satisfies the constraints");
  return out;
}

Box select_main_subject(std::span<const Box> boxes, ImageSize size, double alpha) {
  if (boxes.empty()) throw ValidationError("no subject boxes given");
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box n = boxes[i].normalized(size);
    const double dx = n.center_x() - 0.5;
    const double dy = n.center_y() - 0.5;
    const double score = n.width() * n.height() + alpha * (1.0 - std::sqrt(dx * dx + dy * dy));
    if (i == 0 || score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return boxes[best];
}

Box baseline_a(const Box& human_box) { return human_box; }

double baseline_b_score(const Box& human_box, const Box& candidate, ImageSize size) {
  const Box h = human_box.normalized(size);
  const Box c = candidate.normalized(size);
  const double dx = h.center_x() - c.center_x();
  const double dy = h.center_y() - c.center_y();
  return iou(human_box, candidate) + std::sqrt(2.0) - std::sqrt(dx * dx + dy * dy);
}

Box baseline_b(const Box& human_box, std::span<const Box> candidates, ImageSize size) {
  if (candidates.empty()) throw ValidationError("baseline_b needs at least one candidate");
  std::size_t best = 0;
  double best_score = baseline_b_score(human_box, candidates[0], size);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = baseline_b_score(human_box, candidates[i], size);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return candidates[best];
}

}  // namespace hccrop
