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

#include "hccrop/training.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hccrop/error.hpp"

namespace hccrop {
namespace {

using nlohmann::json;
using nn::Tensor;
using nn::Var;

// Prepared inputs are cached up to this many doubles (256 MiB).
constexpr std::size_t kInputCacheValues = std::size_t{32} << 20;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void TrainSchedule::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ValidationError("warmup must satisfy 0 <= warmup < epochs");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ValidationError("learning rate must be finite and >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ValidationError("weight decay must be >= 0");
  if (crops_per_image < 2) throw ValidationError("crops_per_image must be at least 2");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
}

void to_json(json& j, const TrainSchedule& s) {
  j = {{"epochs", s.epochs},
       {"base_lr", s.base_lr},
       {"weight_decay", s.weight_decay},
       {"warmup_epochs", s.warmup_epochs},
       {"crops_per_image", s.crops_per_image},
       {"seed", s.seed},
       {"lambda", s.lambda}};
}

void from_json(const json& j, TrainSchedule& s) {
  s.epochs = j.value("epochs", s.epochs);
  s.base_lr = j.value("base_lr", s.base_lr);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.warmup_epochs = j.value("warmup_epochs", s.warmup_epochs);
  s.crops_per_image = j.value("crops_per_image", s.crops_per_image);
  s.seed = j.value("seed", s.seed);
  s.lambda = j.value("lambda", s.lambda);
}

double learning_rate(const TrainSchedule& s, double epoch) {
  const double t = std::clamp(epoch, 0.0, double(s.epochs));
  if (t < s.warmup_epochs) return s.base_lr * t / s.warmup_epochs;
  const double progress = (t - s.warmup_epochs) / (s.epochs - s.warmup_epochs);
  return 0.5 * s.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(nn::ParameterSet& params, double beta1, double beta2, double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_.emplace_back(params_[i].value.shape());
    v_.emplace_back(params_[i].value.shape());
  }
}

void AdamW::step(double lr, double weight_decay) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, double(steps_));
  const double c2 = 1.0 - std::pow(beta2_, double(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Parameter& p = params_[i];
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      w[k] -= lr * (weight_decay * w[k] + update);
    }
  }
}

void AdamW::save(Checkpoint& ckpt) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.arrays.emplace_back("adam.m." + params_[i].name, m_[i]);
    ckpt.arrays.emplace_back("adam.v." + params_[i].name, v_[i]);
  }
  ckpt.metadata["adam_steps"] = steps_;
}

void AdamW::restore(const Checkpoint& ckpt) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& m = ckpt.at("adam.m." + params_[i].name);
    const Tensor& v = ckpt.at("adam.v." + params_[i].name);
    if (!m.same_shape(m_[i]) || !v.same_shape(v_[i])) {
      throw IncompatibleCheckpointError("optimizer moment shape mismatch for " + params_[i].name);
    }
    m_[i] = m;
    v_[i] = v;
  }
  steps_ = ckpt.metadata.at("adam_steps").get<long>();
}

json StepRecord::to_json() const {
  return {{"epoch", epoch},
          {"step", step},
          {"image", image},
          {"lr", lr},
          {"reg", finite_or_null(loss.reg)},
          {"rank", finite_or_null(loss.rank)},
          {"cont", finite_or_null(loss.cont)},
          {"total", finite_or_null(loss.total)}};
}

json make_config_json(const ModelConfig& model, const TrainSchedule& schedule) {
  return {{"model", model}, {"train", schedule}};
}

Checkpoint make_checkpoint(const CroppingModel& model, const TrainSchedule& schedule) {
  Checkpoint ckpt;
  ckpt.config = make_config_json(model.config(), schedule);
  const nn::ParameterSet& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ckpt.arrays.emplace_back(ps[i].name, ps[i].value);
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, CroppingModel& model) {
  if (!ckpt.config.contains("model")) throw IncompatibleCheckpointError("checkpoint has no model config");
  ModelConfig stored;
  try {
    ckpt.config.at("model").get_to(stored);
  } catch (const json::exception& e) {
    throw IncompatibleCheckpointError(std::string("checkpoint model config unreadable: ") + e.what());
  }
  if (!stored.compatible_with(model.config())) {
    throw IncompatibleCheckpointError("checkpoint model config (" + json(stored).dump() +
                                      ") does not match the requested model (" + json(model.config()).dump() + ")");
  }
  nn::ParameterSet& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& t = ckpt.at(ps[i].name);
    if (!t.same_shape(ps[i].value)) {
      throw IncompatibleCheckpointError("shape mismatch for " + ps[i].name + ": checkpoint " + t.shape_string() +
                                        ", model " + ps[i].value.shape_string());
    }
    ps[i].value = t;
  }
}

CroppingModel model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("model")) throw IncompatibleCheckpointError("checkpoint has no model config");
  ModelConfig config;
  try {
    ckpt.config.at("model").get_to(config);
    config.validate();
  } catch (const std::exception& e) {
    throw IncompatibleCheckpointError(std::string("checkpoint model config invalid: ") + e.what());
  }
  CroppingModel model(config, 0);
  load_parameters(ckpt, model);
  return model;
}

Trainer::Trainer(CroppingModel& model, TrainSchedule schedule)
    : model_(model), schedule_(schedule), optimizer_(model.parameters()), rng_(schedule.seed) {
  schedule_.validate();
}

const Tensor& Trainer::input_for(const DatasetIndex& train, std::size_t i) {
  if (cached_for_ != &train) {
    inputs_.clear();
    targets_.clear();
    cached_values_ = 0;
    cached_for_ = &train;
  }
  auto it = inputs_.find(i);
  if (it != inputs_.end()) return it->second;
  Tensor input = model_.prepare_input(train.images[i].load());
  if (cached_values_ + input.size() > kInputCacheValues && !inputs_.empty()) {
    cached_values_ -= inputs_.begin()->second.size();
    inputs_.erase(inputs_.begin());
  }
  cached_values_ += input.size();
  return inputs_.emplace(i, std::move(input)).first->second;
}

const Heatmap& Trainer::target_for(const DatasetIndex& train, std::size_t i, MapSize size) {
  auto it = targets_.find(i);
  if (it != targets_.end() && it->second.rows == size.rows && it->second.cols == size.cols) return it->second;
  const AnnotatedImage& img = train.images[i];
  const auto selected = select_highly_scored(img.crops, *train.mean_score);
  return targets_[i] = pseudo_heatmap(selected, img.size, size);
}

LossBreakdown Trainer::train_step(const DatasetIndex& train, std::size_t image_index, double lr) {
  const AnnotatedImage& img = train.images.at(image_index);
  if (img.crops.size() < 2) throw ValidationError("image " + img.image + " has fewer than two scored crops");
  if (!train.mean_score) throw ValidationError("training split has no crops");

  const std::size_t n = img.crops.size();
  const std::size_t k = std::min(n, static_cast<std::size_t>(schedule_.crops_per_image));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(c, n - 1)(rng_);
    std::swap(order[c], order[j]);
  }
  std::vector<Box> boxes(k);
  std::vector<double> targets(k);
  for (std::size_t c = 0; c < k; ++c) {
    boxes[c] = img.crops[order[c]].box;
    targets[c] = img.crops[order[c]].score;
  }

  const Tensor& input = input_for(train, image_index);
  nn::Tape tape;
  Binding b(tape, model_.parameters());
  const ForwardResult r = model_.forward(b, input, img.size, img.subject(), boxes);

  std::vector<Var> terms{nn::regression_loss(tape, r.scores, targets), nn::ranking_loss(tape, r.scores, targets)};
  std::vector<double> weights{1.0, 1.0};
  const bool with_content = model_.config().use_content && schedule_.lambda != 0.0;
  if (with_content) {
    const Heatmap& gt = target_for(train, image_index, r.heatmap_size);
    terms.push_back(nn::mean_abs_error(tape, r.heatmap, Tensor({1, gt.rows, gt.cols}, gt.values)));
    weights.push_back(schedule_.lambda);
  }
  const Var total = nn::weighted_sum(tape, terms, weights);

  LossBreakdown loss;
  loss.lambda = schedule_.lambda;
  loss.reg = tape.value(terms[0])[0];
  loss.rank = tape.value(terms[1])[0];
  loss.cont = with_content ? tape.value(terms[2])[0] : 0.0;
  loss.total = tape.value(total)[0];
  if (!std::isfinite(loss.total)) {
    StepRecord rec{epoch_ + 1, step_ + 1, img.image, lr, loss};
    json dump = rec.to_json();
    dump["crops"] = json::array();
    for (std::size_t c = 0; c < k; ++c) dump["crops"].push_back({{"box", box_to_json(boxes[c])}, {"score", targets[c]}});
    json norms = json::object();
    const nn::ParameterSet& ps = model_.parameters();
    for (std::size_t p = 0; p < ps.size(); ++p) {
      double s = 0.0;
      for (double v : ps[p].value.values()) s += v * v;
      norms[ps[p].name] = finite_or_null(std::sqrt(s));
    }
    dump["parameter_norms"] = norms;
    throw NonFiniteLossError("non-finite loss at epoch " + std::to_string(rec.epoch) + ", step " +
                                 std::to_string(rec.step) + " (" + img.image + ")",
                             dump.dump(2));
  }

  model_.parameters().zero_grad();
  tape.backward(total);
  optimizer_.step(lr, schedule_.weight_decay);
  return loss;
}

void Trainer::fit(const DatasetIndex& train, const StepCallback& on_step, const EpochCallback& on_epoch) {
  if (train.images.empty()) throw ValidationError("training dataset is empty");
  if (!train.mean_score) throw ValidationError("training dataset has no scored crops");
  for (const auto& img : train.images) {
    if (img.crops.size() < 2) throw ValidationError("image " + img.image + " has fewer than two scored crops");
  }
  const std::size_t steps_per_epoch = train.images.size();
  while (epoch_ < schedule_.epochs) {
    std::vector<std::size_t> order(steps_per_epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const double lr = learning_rate(schedule_, epoch_ + double(s) / double(steps_per_epoch));
      const LossBreakdown loss = train_step(train, order[s], lr);
      ++step_;
      if (on_step) on_step(StepRecord{epoch_ + 1, step_, train.images[order[s]].image, lr, loss});
    }
    ++epoch_;
    if (on_epoch) on_epoch(epoch_);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt = make_checkpoint(model_, schedule_);
  optimizer_.save(ckpt);
  std::ostringstream rng;
  rng << rng_;
  ckpt.metadata["epoch"] = epoch_;
  ckpt.metadata["step"] = step_;
  ckpt.metadata["seed"] = schedule_.seed;
  ckpt.metadata["rng"] = rng.str();
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  load_parameters(ckpt, model_);
  optimizer_.restore(ckpt);
  try {
    epoch_ = ckpt.metadata.at("epoch").get<int>();
    step_ = ckpt.metadata.at("step").get<long>();
    std::istringstream rng(ckpt.metadata.at("rng").get<std::string>());
    rng >> rng_;
    if (!rng) throw IncompatibleCheckpointError("checkpoint RNG state unreadable");
  } catch (const json::exception& e) {
    throw IncompatibleCheckpointError(std::string("checkpoint training state missing: ") + e.what());
  }
  inputs_.clear();
  targets_.clear();
  cached_values_ = 0;
  cached_for_ = nullptr;
}

}  // namespace hccrop
