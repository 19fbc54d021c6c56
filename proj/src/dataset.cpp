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

#include "hccrop/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hccrop/error.hpp"

namespace hccrop {
namespace {

using nlohmann::json;

// Line and column of byte offset `pos` in `text`, 1-based.
std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t pos) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::string line_text(const std::string& text, std::size_t line) {
  std::istringstream in(text);
  std::string s;
  for (std::size_t i = 0; i < line && std::getline(in, s); ++i) {
  }
  return s;
}

bool finite_box_array(const json& j) {
  if (!j.is_array() || j.size() != 4) return false;
  for (const auto& v : j) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) return false;
  }
  return true;
}

// Box check shared by crops, best crops and the human box.
std::optional<std::string> box_problem(const json& j, ImageSize size, Box& out) {
  if (!finite_box_array(j)) return "box must be four finite numbers";
  out = box_from_json(j);
  if (!out.valid()) return "degenerate box (need x1 < x2 and y1 < y2)";
  if (!out.inside(size)) return "box outside the image bounds";
  return std::nullopt;
}

std::optional<AnnotatedImage> parse_record(const json& r, std::size_t index, const std::filesystem::path& base,
                                           std::vector<Diagnostic>& diags) {
  auto reject = [&](std::string msg) {
    diags.push_back({index, std::nullopt, "record rejected: " + std::move(msg)});
    return std::nullopt;
  };
  if (!r.is_object()) return reject("not an object");
  if (!r.contains("image") || !r["image"].is_string()) return reject("missing string field 'image'");
  for (const char* k : {"width", "height"}) {
    if (!r.contains(k) || !r[k].is_number_integer() || r[k].get<long long>() <= 0) {
      return reject(std::string("field '") + k + "' must be a positive integer");
    }
  }
  AnnotatedImage img;
  img.image = r["image"].get<std::string>();
  img.path = base / img.image;
  img.size = {r["width"].get<int>(), r["height"].get<int>()};

  if (r.contains("human_box") && !r["human_box"].is_null()) {
    Box h;
    if (auto p = box_problem(r["human_box"], img.size, h)) return reject("human_box: " + *p);
    img.human_box = h;
  }
  if (!r.contains("crops") || !r["crops"].is_array()) return reject("missing array field 'crops'");
  const json& crops = r["crops"];
  for (std::size_t c = 0; c < crops.size(); ++c) {
    const json& e = crops[c];
    Box b;
    std::optional<std::string> problem;
    if (!e.is_object() || !e.contains("box") || !e.contains("score")) {
      problem = "crop needs 'box' and 'score'";
    } else if (!e["score"].is_number() || !std::isfinite(e["score"].get<double>())) {
      problem = "score must be a finite number";
    } else {
      problem = box_problem(e["box"], img.size, b);
    }
    if (problem) {
      diags.push_back({index, c, "crop rejected: " + *problem});
      continue;
    }
    img.crops.push_back({b, e["score"].get<double>()});
  }
  if (r.contains("best_crops")) {
    if (!r["best_crops"].is_array()) return reject("'best_crops' must be an array");
    for (const auto& e : r["best_crops"]) {
      Box b;
      if (auto p = box_problem(e, img.size, b)) return reject("best_crops: " + *p);
      img.best_crops.push_back(b);
    }
  }

  const bool small_enough = img.human_box && img.human_box->area() <= kHumanCentricMaxArea * img.size.area();
  if (r.contains("human_centric")) {
    if (!r["human_centric"].is_boolean()) return reject("'human_centric' must be a boolean");
    img.human_centric = r["human_centric"].get<bool>();
    if (img.human_centric && !small_enough) {
      return reject("human_centric requires a human box covering at most 90% of the image");
    }
  } else {
    img.human_centric = small_enough;
  }
  return img;
}

}  // namespace

Image AnnotatedImage::load() const {
  if (pixels) return *pixels;
  Image im = load_image(path);
  if (im.size() != size) {
    throw ValidationError("image " + path.string() + " is " + std::to_string(im.width()) + "x" +
                          std::to_string(im.height()) + ", annotation says " + std::to_string(size.width) + "x" +
                          std::to_string(size.height));
  }
  return im;
}

std::vector<Box> AnnotatedImage::crop_boxes() const {
  std::vector<Box> out;
  out.reserve(crops.size());
  for (const auto& c : crops) out.push_back(c.box);
  return out;
}

std::vector<double> AnnotatedImage::crop_scores() const {
  std::vector<double> out;
  out.reserve(crops.size());
  for (const auto& c : crops) out.push_back(c.score);
  return out;
}

std::string Diagnostic::to_string() const {
  std::string s = "record " + std::to_string(record);
  if (crop) s += " crop " + std::to_string(*crop);
  return s + ": " + message;
}

std::size_t DatasetIndex::crop_count() const {
  std::size_t n = 0;
  for (const auto& im : images) n += im.crops.size();
  return n;
}

std::size_t DatasetIndex::human_centric_count() const {
  std::size_t n = 0;
  for (const auto& im : images) n += im.human_centric ? 1 : 0;
  return n;
}

void DatasetIndex::refresh_mean() {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& im : images) {
    for (const auto& c : im.crops) {
      sum += c.score;
      ++n;
    }
  }
  mean_score = n == 0 ? std::nullopt : std::optional<double>(sum / static_cast<double>(n));
}

nlohmann::json DatasetIndex::statistics() const {
  // Unit bins [1,2), [2,3), [3,4), [4,5]; scores off the 1..5 scale are counted apart.
  std::vector<std::size_t> hist(4, 0);
  std::size_t outside = 0;
  for (const auto& im : images) {
    for (const auto& c : im.crops) {
      if (c.score < 1.0 || c.score > 5.0) {
        ++outside;
      } else {
        ++hist[static_cast<std::size_t>(std::min(std::floor(c.score), 4.0)) - 1];
      }
    }
  }
  json h = json::array();
  for (int b = 0; b < 4; ++b) {
    h.push_back({{"low", b + 1}, {"high", b + 2}, {"count", hist[b]}});
  }
  const std::size_t n = images.size();
  return {{"split", split},
          {"images", n},
          {"crops", crop_count()},
          {"human_centric", human_centric_count()},
          {"human_centric_ratio", n == 0 ? 0.0 : double(human_centric_count()) / double(n)},
          {"mean_score", mean_score ? json(*mean_score) : json(nullptr)},
          {"score_histogram", h},
          {"scores_outside_1_5", outside},
          {"diagnostics", diagnostics.size()}};
}

DatasetIndex parse_annotations(const std::string& text, const std::filesystem::path& base_dir, std::string split) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ValidationError("annotation parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what() + "\n  " + line_text(text, line));
  }
  DatasetIndex index;
  index.split = std::move(split);
  const json* records = &root;
  if (root.is_object()) {
    if (root.contains("split") && root["split"].is_string()) index.split = root["split"].get<std::string>();
    if (!root.contains("images") || !root["images"].is_array()) {
      throw ValidationError("annotation file must be an array of records or an object with an 'images' array");
    }
    records = &root["images"];
  } else if (!root.is_array()) {
    throw ValidationError("annotation file must be an array of records or an object with an 'images' array");
  }
  for (std::size_t i = 0; i < records->size(); ++i) {
    if (auto img = parse_record((*records)[i], i, base_dir, index.diagnostics)) index.images.push_back(std::move(*img));
  }
  index.refresh_mean();
  return index;
}

DatasetIndex load_annotations(const std::filesystem::path& path, std::string split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open annotation file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str(), path.parent_path(), std::move(split));
}

nlohmann::json annotations_to_json(const DatasetIndex& index) {
  json images = json::array();
  for (const auto& im : index.images) {
    json crops = json::array();
    for (const auto& c : im.crops) crops.push_back({{"box", box_to_json(c.box)}, {"score", c.score}});
    json r = {{"image", im.image},
              {"width", im.size.width},
              {"height", im.size.height},
              {"human_box", im.human_box ? box_to_json(*im.human_box) : json(nullptr)},
              {"human_centric", im.human_centric},
              {"crops", crops}};
    if (!im.best_crops.empty()) {
      json best = json::array();
      for (const auto& b : im.best_crops) best.push_back(box_to_json(b));
      r["best_crops"] = best;
    }
    images.push_back(std::move(r));
  }
  return {{"split", index.split}, {"images", images}};
}

std::pair<DatasetIndex, DatasetIndex> split_dataset(const DatasetIndex& index, std::size_t train_count) {
  if (train_count > index.images.size()) throw ValidationError("split larger than the dataset");
  DatasetIndex train, test;
  train.split = "train";
  test.split = "test";
  train.images.assign(index.images.begin(), index.images.begin() + static_cast<std::ptrdiff_t>(train_count));
  test.images.assign(index.images.begin() + static_cast<std::ptrdiff_t>(train_count), index.images.end());
  train.refresh_mean();
  test.refresh_mean();
  return {std::move(train), std::move(test)};
}

nlohmann::json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const nlohmann::json& j) {
  if (!finite_box_array(j)) throw ValidationError("box must be four finite numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace hccrop
