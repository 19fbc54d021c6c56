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

// Brute-force reference implementations used only by the tests. They are
// written from the definitions, not from the library code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "hccrop/geometry.hpp"
#include "hccrop/grid.hpp"
#include "hccrop/heatmap.hpp"
#include "hccrop/tape.hpp"

namespace oracle {

inline double smooth_l1(double x) {
  const double a = x < 0 ? -x : x;
  return a < 1.0 ? 0.5 * a * a : a - 0.5;
}

inline double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Ordered pairs m != n, each unordered pair seen twice.
inline double ranking_loss(const std::vector<double>& y, const std::vector<double>& p) {
  const std::size_t n = y.size();
  double s = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      const double e = y[a] - y[b];
      const double eh = p[a] - p[b];
      s += std::max(0.0, sign(e) * (e - eh));
    }
  }
  return s / double(n * (n - 1));
}

// Rank of v[i] = 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = double(a.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sx += ra[i];
    sy += rb[i];
    sxx += ra[i] * ra[i];
    syy += rb[i] * rb[i];
    sxy += ra[i] * rb[i];
  }
  const double vx = n * sxx - sx * sx;
  const double vy = n * syy - sy * sy;
  if (vx <= 1e-9 || vy <= 1e-9) return 0.0;
  return (n * sxy - sx * sy) / std::sqrt(vx * vy);
}

// Index set of the k largest values, ties to the lowest index.
inline std::set<std::size_t> top_set(const std::vector<double>& v, std::size_t k) {
  std::set<std::size_t> out;
  std::vector<bool> used(v.size(), false);
  for (std::size_t r = 0; r < k; ++r) {
    std::size_t best = v.size();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!used[i] && (best == v.size() || v[i] > v[best])) best = i;
    }
    used[best] = true;
    out.insert(best);
  }
  return out;
}

inline double acc_top_n(const std::vector<double>& gt, const std::vector<double>& pred, std::size_t n) {
  const auto g = top_set(gt, n);
  double total = 0.0;
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto p = top_set(pred, k);
    bool hit = false;
    for (std::size_t i : p) hit = hit || g.count(i) > 0;
    total += hit;
  }
  return total / 4.0;
}

// Binary map via cell-center enumeration, with the single-cell fallback
// for boxes that cover no center.
inline hccrop::Grid binary_map(const hccrop::Box& b, hccrop::ImageSize size, hccrop::MapSize map) {
  hccrop::Grid g(map.rows, map.cols);
  int ones = 0;
  for (int i = 0; i < map.rows; ++i) {
    for (int j = 0; j < map.cols; ++j) {
      const double cx = (j + 0.5) * size.width / map.cols;
      const double cy = (i + 0.5) * size.height / map.rows;
      if (b.x1 <= cx && cx < b.x2 && b.y1 <= cy && cy < b.y2) {
        g.at(i, j) = 1.0;
        ++ones;
      }
    }
  }
  if (ones == 0) {
    int j = int(std::floor(0.5 * (b.x1 + b.x2) * map.cols / size.width));
    int i = int(std::floor(0.5 * (b.y1 + b.y2) * map.rows / size.height));
    g.at(std::clamp(i, 0, map.rows - 1), std::clamp(j, 0, map.cols - 1)) = 1.0;
  }
  return g;
}

// Per-cell accumulation of softmax-weighted binary maps.
inline hccrop::Grid pseudo_heatmap(const std::vector<hccrop::ScoredCrop>& sel, hccrop::ImageSize size,
                                   hccrop::MapSize map) {
  double z = 0.0;
  for (const auto& c : sel) z += std::exp(c.score);
  hccrop::Grid h(map.rows, map.cols);
  for (int i = 0; i < map.rows; ++i) {
    for (int j = 0; j < map.cols; ++j) {
      double v = 0.0;
      for (const auto& c : sel) v += std::exp(c.score) / z * binary_map(c.box, size, map).at(i, j);
      h.at(i, j) = v;
    }
  }
  return h;
}

inline double box_iou(const hccrop::Box& a, const hccrop::Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter);
}

// Central differences of `f` with respect to selected entries of `x`.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// ||a - b|| / max(||a||, ||b||, floor): relative error of a gradient block.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline hccrop::nn::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  hccrop::nn::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace oracle
