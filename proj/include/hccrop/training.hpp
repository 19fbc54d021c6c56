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

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>

#include <json.hpp>

#include "hccrop/checkpoint.hpp"
#include "hccrop/dataset.hpp"
#include "hccrop/losses.hpp"
#include "hccrop/network.hpp"

namespace hccrop {

struct TrainSchedule {
  int epochs = 80;
  double base_lr = 1e-4;
  double weight_decay = 1e-4;
  int warmup_epochs = 5;
  int crops_per_image = 64;
  std::uint64_t seed = 0;
  double lambda = 1.0;  // content loss weight

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

// Linear warmup from 0 to base_lr over warmup_epochs, then cosine decay to
// 0 at `epochs`. `epoch` is fractional, counted from the start of training.
double learning_rate(const TrainSchedule& s, double epoch);

// Adam with decoupled weight decay: p -= lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
class AdamW {
 public:
  explicit AdamW(nn::ParameterSet& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(double lr, double weight_decay);
  long steps() const { return steps_; }

  // Moments are stored as "adam.m.<param>" and "adam.v.<param>".
  void save(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt);

 private:
  nn::ParameterSet& params_;
  double beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<nn::Tensor> m_, v_;
};

struct StepRecord {
  int epoch = 0;   // 1-based
  long step = 0;   // global, 1-based
  std::string image;
  double lr = 0.0;
  LossBreakdown loss;

  nlohmann::json to_json() const;
};

// Config block stored in checkpoints and read from config files:
// {"model": ModelConfig, "train": TrainSchedule}.
nlohmann::json make_config_json(const ModelConfig& model, const TrainSchedule& schedule);

// Parameter arrays plus the config. Training state is added by Trainer.
Checkpoint make_checkpoint(const CroppingModel& model, const TrainSchedule& schedule);
// Throws IncompatibleCheckpointError when the stored model config or any
// array shape differs from `model`.
void load_parameters(const Checkpoint& ckpt, CroppingModel& model);
CroppingModel model_from_checkpoint(const Checkpoint& ckpt);

// One image per step: sample crops, forward, total loss, backward, AdamW.
class Trainer {
 public:
  using StepCallback = std::function<void(const StepRecord&)>;
  using EpochCallback = std::function<void(int epoch)>;

  Trainer(CroppingModel& model, TrainSchedule schedule);

  // Runs epochs completed_epochs()+1 .. schedule.epochs. Throws
  // ValidationError on an empty dataset and NonFiniteLossError when a loss
  // stops being finite.
  void fit(const DatasetIndex& train, const StepCallback& on_step = {}, const EpochCallback& on_epoch = {});

  // Single update on image `image_index`; the split's mean score selects the
  // pseudo-heatmap crops.
  LossBreakdown train_step(const DatasetIndex& train, std::size_t image_index, double lr);

  int completed_epochs() const { return epoch_; }
  long global_step() const { return step_; }
  const TrainSchedule& schedule() const { return schedule_; }

  // Parameters, moments, epoch, step and RNG state.
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  const nn::Tensor& input_for(const DatasetIndex& train, std::size_t i);
  const Heatmap& target_for(const DatasetIndex& train, std::size_t i, MapSize size);

  CroppingModel& model_;
  TrainSchedule schedule_;
  AdamW optimizer_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  long step_ = 0;
  std::map<std::size_t, nn::Tensor> inputs_;
  std::size_t cached_values_ = 0;
  std::map<std::size_t, Heatmap> targets_;
  const DatasetIndex* cached_for_ = nullptr;
};

}  // namespace hccrop
