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
#include <filesystem>

#include "hccrop/geometry.hpp"
#include "hccrop/grid.hpp"
#include "hccrop/tensor.hpp"

namespace hccrop {

// RGB image as a [3, H, W] tensor with values in [0, 1].
struct Image {
  nn::Tensor pixels;

  int width() const { return pixels.rank() == 3 ? pixels.dim(2) : 0; }
  int height() const { return pixels.rank() == 3 ? pixels.dim(1) : 0; }
  ImageSize size() const { return {width(), height()}; }
};

Image make_image(int width, int height, std::array<double, 3> rgb = {0.0, 0.0, 0.0});

// Bilinear resize so the shorter side equals `short_side`, aspect kept.
Image resize_short_side(const Image& image, int short_side);

void fill_rect(Image& image, const Box& box, std::array<double, 3> rgb);
void fill_ellipse(Image& image, const Box& bounds, std::array<double, 3> rgb);
// Rectangle outline `thickness` pixels wide, drawn inside the box.
void draw_rect(Image& image, const Box& box, std::array<double, 3> rgb, int thickness = 2);

// Decodes any format OpenCV reads. Throws ValidationError when unreadable.
Image load_image(const std::filesystem::path& path);
// Format chosen by extension (.png, .ppm, .jpg, ...).
void save_image(const std::filesystem::path& path, const Image& image);
// 8-bit grayscale, value = round(255 * h).
void save_heatmap(const std::filesystem::path& path, const Grid& heatmap);

// Image with the heatmap (resized to the image) tinted red and `box` outlined.
Image overlay(const Image& image, const Grid* heatmap, const Box& box);

}  // namespace hccrop
