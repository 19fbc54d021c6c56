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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hccrop/network.hpp"
#include "hccrop/training.hpp"

namespace hccrop {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

struct RunConfig {
  ModelConfig model;
  TrainSchedule train;
};

// {"model": {...}, "train": {...}}; both blocks optional. Without a path the
// defaults are returned.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

// partition (also drops the human feature), human, residual, content, graph.
void apply_ablation(ModelConfig& config, const std::string& flag);

// "x1,y1,x2,y2" (commas or spaces).
Box parse_box(const std::string& text);

// Verbs: train, evaluate, crop, synth, heatmap. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hccrop
