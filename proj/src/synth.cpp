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

#include "hccrop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hccrop/error.hpp"
#include "hccrop/network.hpp"

namespace hccrop {
namespace {

using nlohmann::json;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::array<double, 3> random_color(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Position of the person center inside the crop, or nothing when outside.
std::optional<std::pair<double, double>> relative_center(const Box& person, const Box& crop) {
  const double u = (person.center_x() - crop.x1) / crop.width();
  const double v = (person.center_y() - crop.y1) / crop.height();
  if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return std::nullopt;
  return std::make_pair(u, v);
}

constexpr std::array<double, 3> kHair{0.15, 0.1, 0.05};
constexpr std::array<double, 3> kFace{0.95, 0.8, 0.65};
constexpr std::array<double, 3> kMarker{1.0, 1.0, 1.0};

}  // namespace

std::string facing_name(Facing f) {
  switch (f) {
    case Facing::kLeft: return "left";
    case Facing::kRight: return "right";
    case Facing::kFront: return "front";
  }
  return "front";
}

Facing parse_facing(const std::string& s) {
  if (s == "left") return Facing::kLeft;
  if (s == "right") return Facing::kRight;
  if (s == "front") return Facing::kFront;
  throw ValidationError("facing must be left, right or front, got '" + s + "'");
}

void SynthSpec::validate() const {
  if (count < 0) throw ValidationError("synth count must be non-negative");
  if (size.width < 32 || size.height < 32) throw ValidationError("synth images must be at least 32x32");
  if (crops_per_image < 1) throw ValidationError("crops_per_image must be positive");
  for (double w : {weights.thirds, weights.leadroom, weights.object, weights.cut}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("oracle weights must be finite and non-negative");
  }
  if (!(person_height_min > 0.0 && person_height_min <= person_height_max && person_height_max <= 1.0)) {
    throw ValidationError("person height range must satisfy 0 < min <= max <= 1");
  }
  if (!(person_aspect > 0.0) || person_aspect * person_height_max * size.height > size.width) {
    throw ValidationError("person does not fit the image width");
  }
  if (!(person_center_min >= 0.0 && person_center_min <= person_center_max && person_center_max <= 1.0)) {
    throw ValidationError("person center range must satisfy 0 <= min <= max <= 1");
  }
  if (person_center_x && !(*person_center_x > 0.0 && *person_center_x < 1.0)) {
    throw ValidationError("person_center_x must lie in (0, 1)");
  }
  if (min_objects < 0 || max_objects < min_objects) throw ValidationError("invalid object count range");
}

void to_json(json& j, const SynthSpec& s) {
  j = {{"seed", s.seed},
       {"count", s.count},
       {"width", s.size.width},
       {"height", s.size.height},
       {"candidates", s.grid},
       {"crops_per_image", s.crops_per_image},
       {"weights",
        {{"thirds", s.weights.thirds},
         {"leadroom", s.weights.leadroom},
         {"object", s.weights.object},
         {"cut", s.weights.cut}}},
       {"person_height_min", s.person_height_min},
       {"person_height_max", s.person_height_max},
       {"person_aspect", s.person_aspect},
       {"facing", s.facing ? json(facing_name(*s.facing)) : json(nullptr)},
       {"person_center_x", s.person_center_x ? json(*s.person_center_x) : json(nullptr)},
       {"person_center_min", s.person_center_min},
       {"person_center_max", s.person_center_max},
       {"min_objects", s.min_objects},
       {"max_objects", s.max_objects}};
}

void from_json(const json& j, SynthSpec& s) {
  s.seed = j.value("seed", s.seed);
  s.count = j.value("count", s.count);
  s.size.width = j.value("width", s.size.width);
  s.size.height = j.value("height", s.size.height);
  if (j.contains("candidates")) j.at("candidates").get_to(s.grid);
  s.crops_per_image = j.value("crops_per_image", s.crops_per_image);
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    s.weights.thirds = w.value("thirds", s.weights.thirds);
    s.weights.leadroom = w.value("leadroom", s.weights.leadroom);
    s.weights.object = w.value("object", s.weights.object);
    s.weights.cut = w.value("cut", s.weights.cut);
  }
  s.person_height_min = j.value("person_height_min", s.person_height_min);
  s.person_height_max = j.value("person_height_max", s.person_height_max);
  s.person_aspect = j.value("person_aspect", s.person_aspect);
  if (j.contains("facing") && !j["facing"].is_null()) s.facing = parse_facing(j["facing"].get<std::string>());
  if (j.contains("person_center_x") && !j["person_center_x"].is_null()) {
    s.person_center_x = j["person_center_x"].get<double>();
  }
  s.person_center_min = j.value("person_center_min", s.person_center_min);
  s.person_center_max = j.value("person_center_max", s.person_center_max);
  s.min_objects = j.value("min_objects", s.min_objects);
  s.max_objects = j.value("max_objects", s.max_objects);
}

OracleTerms oracle_terms(const Scene& scene, const Box& crop) {
  OracleTerms t;
  if (const auto rc = relative_center(scene.person, crop)) {
    const auto [u, v] = *rc;
    double d = std::numeric_limits<double>::infinity();
    for (double a : {1.0 / 3.0, 2.0 / 3.0}) {
      for (double b : {1.0 / 3.0, 2.0 / 3.0}) d = std::min(d, std::hypot(u - a, v - b));
    }
    t.thirds = clamp01(1.0 - 2.0 * d);

    double room = 1.0 - u;  // share of the crop right of the person
    double target = 0.5;
    if (scene.facing == Facing::kRight) {
      target = 2.0 / 3.0;
    } else if (scene.facing == Facing::kLeft) {
      room = u;
      target = 2.0 / 3.0;
    }
    t.leadroom = clamp01(1.0 - 2.0 * std::abs(room - target));
  }
  double total = 0.0, kept = 0.0;
  for (const auto& o : scene.objects) {
    total += o.area();
    kept += intersection_area(o, crop);
  }
  t.object = total > 0.0 ? kept / total : 1.0;
  t.cut = 1.0 - intersection_area(scene.person, crop) / scene.person.area();
  return t;
}

double oracle_score(const Scene& scene, const Box& crop, const OracleWeights& w) {
  const OracleTerms t = oracle_terms(scene, crop);
  return 1.0 + 4.0 * clamp01(w.thirds * t.thirds + w.leadroom * t.leadroom + w.object * t.object - w.cut * t.cut);
}

Scene random_scene(const SynthSpec& spec, std::mt19937_64& rng) {
  Scene s;
  s.size = spec.size;
  const double W = spec.size.width;
  const double H = spec.size.height;
  s.background = random_color(rng, 0.25, 0.55);
  s.body = random_color(rng, 0.0, 1.0);

  const double ph = uniform(rng, spec.person_height_min, spec.person_height_max) * H;
  const double pw = spec.person_aspect * ph;
  const double lo = std::max(0.5 * pw, spec.person_center_min * W);
  const double hi = std::max(lo, std::min(W - 0.5 * pw, spec.person_center_max * W));
  const double cx = spec.person_center_x ? *spec.person_center_x * W : uniform(rng, lo, hi);
  const double cy = uniform(rng, 0.5 * ph, H - 0.5 * ph);
  s.person = {std::clamp(cx - 0.5 * pw, 0.0, W - pw), cy - 0.5 * ph, 0.0, cy + 0.5 * ph};
  s.person.x2 = s.person.x1 + pw;

  const int facing = std::uniform_int_distribution<int>(0, 2)(rng);
  s.facing = spec.facing ? *spec.facing : static_cast<Facing>(facing);

  const int n_objects = std::uniform_int_distribution<int>(spec.min_objects, spec.max_objects)(rng);
  for (int i = 0; i < n_objects; ++i) {
    Box obj;
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double side = uniform(rng, 0.1, 0.25) * H;
      const double x = uniform(rng, 0.0, W - side);
      const double y = uniform(rng, 0.0, H - side);
      obj = {x, y, x + side, y + side};
      if (intersection_area(obj, s.person) == 0.0) break;
    }
    s.objects.push_back(obj);
    s.object_colors.push_back(random_color(rng, 0.0, 1.0));
  }
  return s;
}

Image render_scene(const Scene& s) {
  Image im = make_image(s.size.width, s.size.height, s.background);
  for (std::size_t i = 0; i < s.objects.size(); ++i) fill_ellipse(im, s.objects[i], s.object_colors[i]);

  const Box& p = s.person;
  const double head_h = 0.35 * p.height();
  fill_rect(im, {p.x1, p.y1 + head_h, p.x2, p.y2}, s.body);

  const double inset = 0.1 * p.width();
  const Box head{p.x1 + inset, p.y1, p.x2 - inset, p.y1 + head_h};
  fill_ellipse(im, head, kFace);
  const double mid = head.center_x();
  const double eye = std::max(1.0, 0.15 * head.width());
  const double eye_y = head.y1 + 0.4 * head.height();
  switch (s.facing) {
    case Facing::kRight:
      fill_rect(im, {head.x1, head.y1, mid, head.y2}, kHair);
      fill_rect(im, {head.x2 - eye, eye_y, head.x2, eye_y + eye}, kMarker);
      break;
    case Facing::kLeft:
      fill_rect(im, {mid, head.y1, head.x2, head.y2}, kHair);
      fill_rect(im, {head.x1, eye_y, head.x1 + eye, eye_y + eye}, kMarker);
      break;
    case Facing::kFront:
      fill_rect(im, {head.x1, head.y1, head.x2, head.y1 + 0.25 * head.height()}, kHair);
      fill_rect(im, {mid - 1.5 * eye, eye_y, mid - 0.5 * eye, eye_y + eye}, kMarker);
      fill_rect(im, {mid + 0.5 * eye, eye_y, mid + 1.5 * eye, eye_y + eye}, kMarker);
      break;
  }
  return im;
}

DatasetIndex synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::vector<Box> candidates = generate_candidates(spec.size, spec.grid);
  std::mt19937_64 rng(spec.seed);
  DatasetIndex index;
  index.split = "synthetic";
  for (int i = 0; i < spec.count; ++i) {
    const Scene scene = random_scene(spec, rng);

    std::vector<double> scores(candidates.size());
    std::size_t best = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      scores[c] = oracle_score(scene, candidates[c], spec.weights);
      if (scores[c] > scores[best]) best = c;
    }

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    const std::size_t keep = std::min(order.size(), static_cast<std::size_t>(spec.crops_per_image));
    for (std::size_t c = 0; c < keep; ++c) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(c, order.size() - 1)(rng);
      std::swap(order[c], order[j]);
    }
    order.resize(keep);
    std::sort(order.begin(), order.end());

    AnnotatedImage img;
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06d.ppm", i);
    img.image = name;
    img.pixels = std::make_shared<const Image>(render_scene(scene));
    img.size = spec.size;
    img.human_box = scene.person;
    img.human_centric = scene.person.area() <= kHumanCentricMaxArea * spec.size.area();
    for (std::size_t c : order) img.crops.push_back({candidates[c], scores[c]});
    img.best_crops.push_back(candidates[best]);
    index.images.push_back(std::move(img));
  }
  index.refresh_mean();
  return index;
}

void write_dataset(const DatasetIndex& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& im : index.images) {
    const std::filesystem::path target = dir / im.image;
    std::filesystem::create_directories(target.parent_path());
    save_image(target, im.load());
  }
  std::ofstream out(dir / "annotations.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "annotations.json").string());
  out << annotations_to_json(index).dump(2) << "\n";
}

}  // namespace hccrop
