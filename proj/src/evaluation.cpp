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

#include "hccrop/evaluation.hpp"

#include <algorithm>

#include "hccrop/error.hpp"

namespace hccrop {

BestCrop predict_best_crop(const CroppingModel& model, const Image& image, const std::optional<Box>& human_box,
                           const CandidateParams& params) {
  BestCrop out;
  out.candidates = generate_candidates(image.size(), params);
  CropScores s = model.score_crops(image, human_box, out.candidates);
  out.scores = std::move(s.scores);
  out.heatmap = std::move(s.heatmap);
  out.index = top_indices(out.scores, 1).front();
  out.box = out.candidates[out.index];
  return out;
}

std::vector<Box> ground_truth_crops(const AnnotatedImage& image) {
  if (!image.best_crops.empty()) return image.best_crops;
  if (image.crops.empty()) throw ValidationError("image " + image.image + " has no ground-truth crop");
  double best = image.crops.front().score;
  for (const auto& c : image.crops) best = std::max(best, c.score);
  std::vector<Box> out;
  for (const auto& c : image.crops) {
    if (c.score == best) out.push_back(c.box);
  }
  return out;
}

EvalReport evaluate(const CroppingModel& model, const DatasetIndex& data, Protocol protocol) {
  std::vector<ImageEval> records;
  records.reserve(data.images.size());
  for (const auto& img : data.images) {
    ImageEval rec;
    rec.image = img.image;
    if (protocol == Protocol::kGaicd) {
      if (img.crops.size() < 2) throw ValidationError("image " + img.image + " needs at least two scored crops");
      const std::vector<double> gt = img.crop_scores();
      const std::vector<Box> boxes = img.crop_boxes();
      const std::vector<double> pred = model.score_crops(img.load(), img.subject(), boxes).scores;
      rec.srcc = srcc(gt, pred);
      if (auto a = acc_top_n(gt, pred, 5)) rec.acc5 = 100.0 * *a;
      if (auto a = acc_top_n(gt, pred, 10)) rec.acc10 = 100.0 * *a;
    } else {
      const std::vector<Box> gt = ground_truth_crops(img);
      const BestCrop best = predict_best_crop(model, img.load(), img.subject(), model.config().candidates);
      const BestCropResult r = best_crop_eval(best.box, gt, img.size);
      rec.iou = r.iou;
      rec.disp = r.disp;
      rec.predicted = best.box;
    }
    records.push_back(std::move(rec));
  }
  return summarize(protocol, model.config().label(), std::move(records));
}

Baseline parse_baseline(const std::string& name) {
  if (name == "a") return Baseline::kA;
  if (name == "b") return Baseline::kB;
  throw ValidationError("baseline must be 'a' or 'b', got '" + name + "'");
}

std::string baseline_label(Baseline b) { return b == Baseline::kA ? "baseline_a" : "baseline_b"; }

Box baseline_crop(Baseline which, const AnnotatedImage& image, const CandidateParams& params) {
  if (!image.human_box) return Box::full(image.size);
  if (which == Baseline::kA) return baseline_a(*image.human_box);
  return baseline_b(*image.human_box, generate_candidates(image.size, params), image.size);
}

EvalReport evaluate_baseline(Baseline which, const DatasetIndex& data, const CandidateParams& params) {
  std::vector<ImageEval> records;
  for (const auto& img : data.images) {
    ImageEval rec;
    rec.image = img.image;
    const Box box = baseline_crop(which, img, params);
    const BestCropResult r = best_crop_eval(box, ground_truth_crops(img), img.size);
    rec.iou = r.iou;
    rec.disp = r.disp;
    rec.predicted = box;
    records.push_back(std::move(rec));
  }
  return summarize(Protocol::kIouDisp, baseline_label(which), std::move(records));
}

}  // namespace hccrop
