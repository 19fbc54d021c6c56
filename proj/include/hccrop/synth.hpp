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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hccrop/dataset.hpp"
#include "hccrop/geometry.hpp"
#include "hccrop/image.hpp"

namespace hccrop {

enum class Facing { kLeft, kRight, kFront };

std::string facing_name(Facing f);
Facing parse_facing(const std::string& s);

struct OracleWeights {
  double thirds = 0.3;
  double leadroom = 0.4;
  double object = 0.2;
  double cut = 1.0;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  int count = 16;
  ImageSize size{96, 64};
  CandidateParams grid;
  int crops_per_image = 32;  // sampled from the candidate grid; all when larger
  OracleWeights weights;

  // Person box height as a fraction of the image height.
  double person_height_min = 0.3;
  double person_height_max = 0.55;
  double person_aspect = 0.4;               // width / height
  std::optional<Facing> facing;             // random per image when unset
  std::optional<double> person_center_x;    // fraction of width; random when unset
  double person_center_min = 0.2;           // random centers stay within this share of the width
  double person_center_max = 0.8;
  int min_objects = 1;
  int max_objects = 3;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct Scene {
  ImageSize size;
  Box person;
  Facing facing = Facing::kFront;
  std::vector<Box> objects;
  std::array<double, 3> background{};
  std::array<double, 3> body{};
  std::vector<std::array<double, 3>> object_colors;
};

struct OracleTerms {
  double thirds = 0.0;    // person center near a rule-of-thirds point of the crop
  double leadroom = 0.0;  // crop space on the facing side matches the target share
  double object = 0.0;    // share of object area kept by the crop
  double cut = 0.0;       // share of the person box cut away
};

OracleTerms oracle_terms(const Scene& scene, const Box& crop);
// 1 + 4 * clamp01(w . terms), with the cut term subtracted.
double oracle_score(const Scene& scene, const Box& crop, const OracleWeights& w);

Scene random_scene(const SynthSpec& spec, std::mt19937_64& rng);
Image render_scene(const Scene& scene);

// Images are held in memory and named "images/NNNNNN.ppm". Each image also
// records the oracle-best crop of the full candidate grid in best_crops.
DatasetIndex synth_generate(const SynthSpec& spec);

// Writes annotations.json and the PPM images under `dir`.
void write_dataset(const DatasetIndex& index, const std::filesystem::path& dir);

}  // namespace hccrop
