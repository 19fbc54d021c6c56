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

#include "hccrop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hccrop/error.hpp"

namespace hccrop {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw ValidationError("srcc: length mismatch");
  if (y.size() < 2) throw ValidationError("srcc: needs at least two crops");
  const auto ra = average_ranks(y);
  const auto rb = average_ranks(y_hat);
  const double n = static_cast<double>(y.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

std::optional<double> acc_top_n(std::span<const double> gt_scores, std::span<const double> pred_scores,
                                std::size_t n) {
  if (gt_scores.size() != pred_scores.size()) throw ValidationError("acc_top_n: length mismatch");
  if (gt_scores.size() < n || n == 0) return std::nullopt;
  const auto gt_top = top_indices(gt_scores, n);
  const auto pred_top = top_indices(pred_scores, 4);
  double hits = 0.0;
  bool found = false;
  for (std::size_t k = 0; k < 4; ++k) {
    if (!found && k < pred_top.size()) {
      found = std::find(gt_top.begin(), gt_top.end(), pred_top[k]) != gt_top.end();
    }
    hits += found ? 1.0 : 0.0;
  }
  return hits / 4.0;
}

BestCropResult best_crop_eval(const Box& pred_best, std::span<const Box> gt_crops, ImageSize size) {
  if (gt_crops.empty()) throw ValidationError("best_crop_eval: no ground-truth crops");
  BestCropResult r;
  r.iou = -1.0;
  for (std::size_t i = 0; i < gt_crops.size(); ++i) {
    const double v = iou(pred_best, gt_crops[i]);
    if (v > r.iou) {
      r.iou = v;
      r.matched = i;
    }
  }
  r.disp = boundary_displacement(pred_best, gt_crops[r.matched], size);
  return r;
}

std::string protocol_name(Protocol p) { return p == Protocol::kGaicd ? "gaicd" : "iou-disp"; }

Protocol parse_protocol(const std::string& name) {
  if (name == "gaicd") return Protocol::kGaicd;
  if (name == "iou-disp") return Protocol::kIouDisp;
  throw ValidationError("unknown protocol '" + name + "' (expected gaicd or iou-disp)");
}

namespace {

double mean_of(const std::vector<ImageEval>& images, std::optional<double> ImageEval::*field,
               std::size_t* skipped) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& im : images) {
    if ((im.*field).has_value()) {
      sum += *(im.*field);
      ++count;
    } else if (skipped != nullptr) {
      ++*skipped;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

EvalReport summarize(Protocol protocol, std::string label, std::vector<ImageEval> images) {
  EvalReport r;
  r.protocol = protocol;
  r.label = std::move(label);
  r.images = std::move(images);
  if (protocol == Protocol::kGaicd) {
    r.srcc_mean = mean_of(r.images, &ImageEval::srcc, nullptr);
    r.acc5_mean = mean_of(r.images, &ImageEval::acc5, &r.skipped_acc5);
    r.acc10_mean = mean_of(r.images, &ImageEval::acc10, &r.skipped_acc10);
  } else {
    r.iou_mean = mean_of(r.images, &ImageEval::iou, nullptr);
    r.disp_mean = mean_of(r.images, &ImageEval::disp, nullptr);
  }
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = protocol_name(protocol);
  j["label"] = label;
  if (protocol == Protocol::kGaicd) {
    j["srcc_mean"] = srcc_mean;
    j["acc5_mean"] = acc5_mean;
    j["acc10_mean"] = acc10_mean;
    j["skipped_acc5"] = skipped_acc5;
    j["skipped_acc10"] = skipped_acc10;
  } else {
    j["iou_mean"] = iou_mean;
    j["disp_mean"] = disp_mean;
  }
  j["images"] = nlohmann::json::array();
  for (const auto& im : images) {
    nlohmann::json rec{{"image", im.image}};
    if (protocol == Protocol::kGaicd) {
      rec["srcc"] = opt(im.srcc);
      rec["acc5"] = opt(im.acc5);
      rec["acc10"] = opt(im.acc10);
    } else {
      rec["iou"] = opt(im.iou);
      rec["disp"] = opt(im.disp);
      if (im.predicted) {
        rec["box"] = {im.predicted->x1, im.predicted->y1, im.predicted->x2, im.predicted->y2};
      }
    }
    j["images"].push_back(std::move(rec));
  }
  return j;
}

std::string EvalReport::to_table() const {
  char buf[256];
  std::string out;
  const std::string name = label.empty() ? "model" : label;
  if (protocol == Protocol::kGaicd) {
    std::snprintf(buf, sizeof(buf), "%-16s %8s %8s %8s\n", "Method", "SRCC", "Acc5", "Acc10");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %8.3f %8.1f %8.1f\n", name.c_str(), srcc_mean, acc5_mean, acc10_mean);
    out += buf;
  } else {
    std::snprintf(buf, sizeof(buf), "%-16s %8s %8s\n", "Method", "IoU", "Disp");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %8.4f %8.4f\n", name.c_str(), iou_mean, disp_mean);
    out += buf;
  }
  return out;
}

}  // namespace hccrop
