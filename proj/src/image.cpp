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

#include "hccrop/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hccrop/error.hpp"
#include "hccrop/heatmap.hpp"
#include "hccrop/ops.hpp"

namespace hccrop {
namespace {

nn::Tensor resize_map(const nn::Tensor& t, int h, int w) {
  nn::Tape tape(false);
  const nn::Var v = nn::resize_bilinear(tape, tape.constant(t), h, w);
  return tape.value(v);
}

int clamp_pixel(double v, int hi) { return std::clamp(static_cast<int>(std::floor(v)), 0, hi); }

}  // namespace

Image make_image(int width, int height, std::array<double, 3> rgb) {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
  Image im{nn::Tensor({3, height, width})};
  for (int c = 0; c < 3; ++c) {
    std::fill(im.pixels.data() + static_cast<std::size_t>(c) * width * height,
              im.pixels.data() + static_cast<std::size_t>(c + 1) * width * height, rgb[c]);
  }
  return im;
}

Image resize_short_side(const Image& image, int short_side) {
  if (short_side <= 0) throw ValidationError("short side must be positive");
  const int w = image.width();
  const int h = image.height();
  if (w <= 0 || h <= 0) throw ValidationError("empty image");
  int nw, nh;
  if (w <= h) {
    nw = short_side;
    nh = std::max(1, static_cast<int>(std::lround(double(h) * short_side / w)));
  } else {
    nh = short_side;
    nw = std::max(1, static_cast<int>(std::lround(double(w) * short_side / h)));
  }
  if (nw == w && nh == h) return image;
  return Image{resize_map(image.pixels, nh, nw)};
}

void fill_rect(Image& image, const Box& box, std::array<double, 3> rgb) {
  const int x0 = clamp_pixel(box.x1, image.width());
  const int x1 = clamp_pixel(std::ceil(box.x2), image.width());
  const int y0 = clamp_pixel(box.y1, image.height());
  const int y1 = clamp_pixel(std::ceil(box.y2), image.height());
  for (int c = 0; c < 3; ++c) {
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) image.pixels.at(c, y, x) = rgb[c];
    }
  }
}

void fill_ellipse(Image& image, const Box& bounds, std::array<double, 3> rgb) {
  const double cx = bounds.center_x();
  const double cy = bounds.center_y();
  const double rx = 0.5 * bounds.width();
  const double ry = 0.5 * bounds.height();
  if (rx <= 0.0 || ry <= 0.0) return;
  for (int y = clamp_pixel(bounds.y1, image.height()); y < clamp_pixel(std::ceil(bounds.y2), image.height()); ++y) {
    for (int x = clamp_pixel(bounds.x1, image.width()); x < clamp_pixel(std::ceil(bounds.x2), image.width()); ++x) {
      const double dx = (x + 0.5 - cx) / rx;
      const double dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) {
        for (int c = 0; c < 3; ++c) image.pixels.at(c, y, x) = rgb[c];
      }
    }
  }
}

void draw_rect(Image& image, const Box& box, std::array<double, 3> rgb, int thickness) {
  const double t = thickness;
  fill_rect(image, {box.x1, box.y1, box.x2, std::min(box.y2, box.y1 + t)}, rgb);
  fill_rect(image, {box.x1, std::max(box.y1, box.y2 - t), box.x2, box.y2}, rgb);
  fill_rect(image, {box.x1, box.y1, std::min(box.x2, box.x1 + t), box.y2}, rgb);
  fill_rect(image, {std::max(box.x1, box.x2 - t), box.y1, box.x2, box.y2}, rgb);
}

Image load_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError("cannot read image " + path.string());
  Image im{nn::Tensor({3, bgr.rows, bgr.cols})};
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) im.pixels.at(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return im;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        row[x][2 - c] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(image.pixels.at(c, y, x), 0.0, 1.0)));
      }
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image " + path.string());
}

void save_heatmap(const std::filesystem::path& path, const Grid& heatmap) {
  std::vector<std::uint8_t> gray = to_gray8(heatmap);
  const cv::Mat m(heatmap.rows, heatmap.cols, CV_8UC1, gray.data());
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write heatmap " + path.string());
}

Image overlay(const Image& image, const Grid* heatmap, const Box& box) {
  Image out = image;
  if (heatmap != nullptr && heatmap->size() > 0) {
    const nn::Tensor h = resize_map(nn::Tensor({1, heatmap->rows, heatmap->cols}, heatmap->values),
                                    image.height(), image.width());
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const double a = 0.5 * std::clamp(h.at(0, y, x), 0.0, 1.0);
        out.pixels.at(0, y, x) = (1.0 - a) * out.pixels.at(0, y, x) + a;
        out.pixels.at(1, y, x) *= 1.0 - a;
        out.pixels.at(2, y, x) *= 1.0 - a;
      }
    }
  }
  draw_rect(out, box, {1.0, 1.0, 0.0}, std::max(1, std::min(image.width(), image.height()) / 100));
  return out;
}

}  // namespace hccrop
