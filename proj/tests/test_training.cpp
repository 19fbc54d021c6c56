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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "hccrop/error.hpp"
#include "hccrop/synth.hpp"
#include "hccrop/training.hpp"

using namespace hccrop;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.channels = 4;
  c.fuse_channels = 6;
  c.region_dim = 6;
  c.content_dim = 6;
  c.pooled = 2;
  c.content_grid = 4;
  c.heatmap_hidden = 2;
  c.content_width1 = 2;
  c.content_width2 = 2;
  c.short_side = 32;
  c.backbone_widths = {3, 3, 4, 4, 6};
  return c;
}

TrainSchedule quick(int epochs) {
  TrainSchedule s;
  s.epochs = epochs;
  s.warmup_epochs = epochs > 1 ? 1 : 0;
  s.base_lr = 1e-3;
  s.crops_per_image = 6;
  s.seed = 5;
  return s;
}

DatasetIndex data(int count) {
  SynthSpec spec;
  spec.count = count;
  spec.size = {48, 32};
  spec.crops_per_image = 10;
  return synth_generate(spec);
}

bool same_parameters(const CroppingModel& a, const CroppingModel& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& x = a.parameters()[i].value;
    const auto& y = b.parameters()[i].value;
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("learning rate: linear warmup then cosine") {
  TrainSchedule s;
  s.epochs = 20;
  s.warmup_epochs = 4;
  s.base_lr = 0.01;
  CHECK(learning_rate(s, 0.0) == 0.0);
  CHECK(learning_rate(s, 2.0) == doctest::Approx(0.005));
  CHECK(learning_rate(s, 4.0) == doctest::Approx(0.01));
  CHECK(learning_rate(s, 12.0) == doctest::Approx(0.005));
  CHECK(learning_rate(s, 20.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(learning_rate(s, 25.0) == doctest::Approx(0.0).epsilon(1e-15));
  for (double t = 0.0; t <= 20.0; t += 0.125) {
    const double want =
        t < 4.0 ? 0.01 * t / 4.0 : 0.005 * (1.0 + std::cos(std::numbers::pi * (t - 4.0) / 16.0));
    CHECK(learning_rate(s, t) == doctest::Approx(want).epsilon(1e-12));
    CHECK(learning_rate(s, t) >= 0.0);
    CHECK(learning_rate(s, t) <= 0.01 + 1e-15);
  }
  s.warmup_epochs = 0;
  CHECK(learning_rate(s, 0.0) == 0.01);
}

TEST_CASE("AdamW matches a scalar reference") {
  nn::ParameterSet ps;
  nn::Parameter& p = ps.add("w", {2});
  p.value[0] = 1.0;
  p.value[1] = -2.0;
  AdamW opt(ps);
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double lr = 0.1, wd = 0.01;
  for (int t = 1; t <= 5; ++t) {
    for (int k = 0; k < 2; ++k) {
      const double g = 3.0 * w[k] + 0.5;  // gradient of 1.5 w^2 + 0.5 w
      p.grad[k] = g;
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
      w[k] -= lr * (wd * w[k] + mh / (std::sqrt(vh) + 1e-8));
    }
    opt.step(lr, wd);
    CHECK(p.value[0] == doctest::Approx(w[0]).epsilon(1e-14));
    CHECK(p.value[1] == doctest::Approx(w[1]).epsilon(1e-14));
  }
  CHECK(opt.steps() == 5);
}

TEST_CASE("training is deterministic in the seed") {
  const DatasetIndex train = data(3);
  CroppingModel a(tiny(), 1), b(tiny(), 1);
  std::vector<double> la, lb;
  Trainer ta(a, quick(2)), tb(b, quick(2));
  ta.fit(train, [&](const StepRecord& r) { la.push_back(r.loss.total); });
  tb.fit(train, [&](const StepRecord& r) { lb.push_back(r.loss.total); });
  CHECK(la == lb);
  CHECK(same_parameters(a, b));
  CHECK(ta.global_step() == 6);
  CHECK(ta.completed_epochs() == 2);

  CroppingModel c(tiny(), 1);
  TrainSchedule other = quick(2);
  other.seed = 6;
  Trainer(c, other).fit(train);
  CHECK_FALSE(same_parameters(a, c));
}

TEST_CASE("resuming from an epoch checkpoint reproduces uninterrupted training") {
  const DatasetIndex train = data(3);
  CroppingModel full(tiny(), 2);
  Trainer tf(full, quick(3));
  std::optional<Checkpoint> after_one;
  tf.fit(train, {}, [&](int epoch) {
    if (epoch == 1) after_one = tf.checkpoint();
  });
  REQUIRE(after_one.has_value());
  CHECK((*after_one).metadata["epoch"] == 1);

  CroppingModel resumed(tiny(), 77);
  Trainer tr(resumed, quick(3));
  tr.restore(*after_one);
  CHECK(tr.completed_epochs() == 1);
  std::vector<int> epochs;
  tr.fit(train, [&](const StepRecord& r) { epochs.push_back(r.epoch); });
  CHECK(epochs.front() == 2);
  CHECK(epochs.back() == 3);
  CHECK(tr.global_step() == tf.global_step());
  CHECK(same_parameters(full, resumed));
}

TEST_CASE("content loss is logged as zero when disabled") {
  const DatasetIndex train = data(2);
  TrainSchedule s = quick(1);
  s.lambda = 0.0;
  CroppingModel a(tiny(), 3);
  Trainer(a, s).fit(train, [](const StepRecord& r) {
    CHECK(r.loss.cont == 0.0);
    CHECK(r.loss.total == doctest::Approx(r.loss.reg + r.loss.rank).epsilon(1e-12));
  });

  ModelConfig basic = tiny();
  basic.use_partition = basic.use_human_feature = basic.use_content = false;
  CroppingModel b(basic, 3);
  Trainer(b, quick(1)).fit(train, [](const StepRecord& r) { CHECK(r.loss.cont == 0.0); });

  CroppingModel c(tiny(), 3);
  Trainer(c, quick(1)).fit(train, [](const StepRecord& r) {
    CHECK(r.loss.cont > 0.0);
    CHECK(r.loss.total == doctest::Approx(r.loss.reg + r.loss.rank + r.loss.cont).epsilon(1e-12));
    const auto j = r.to_json();
    CHECK(j.contains("lr"));
    CHECK(j["epoch"] == 1);
  });
}

TEST_CASE("loss goes down when overfitting a couple of images") {
  const DatasetIndex train = data(2);
  TrainSchedule s = quick(40);
  s.base_lr = 3e-3;
  s.crops_per_image = 10;
  CroppingModel m(tiny(), 4);
  std::vector<double> totals;
  Trainer(m, s).fit(train, [&](const StepRecord& r) { totals.push_back(r.loss.total); });
  const double first = (totals[0] + totals[1]) / 2.0;
  const double last = (totals[totals.size() - 1] + totals[totals.size() - 2]) / 2.0;
  CHECK(last < 0.5 * first);
}

TEST_CASE("non-finite losses stop training with a diagnostic dump") {
  const DatasetIndex train = data(2);
  CroppingModel m(tiny(), 5);
  m.parameters().at("score.fc.bias").value[0] = std::numeric_limits<double>::quiet_NaN();
  Trainer t(m, quick(1));
  try {
    t.fit(train);
    FAIL("expected NonFiniteLossError");
  } catch (const NonFiniteLossError& e) {
    const auto j = nlohmann::json::parse(e.diagnostic());
    CHECK(j["total"].is_null());
    CHECK(j["epoch"] == 1);
    CHECK(j["crops"].size() == 6);
    CHECK(j["parameter_norms"]["score.fc.bias"].is_null());
  }
}

TEST_CASE("fit rejects unusable datasets and schedules") {
  CroppingModel m(tiny(), 6);
  Trainer t(m, quick(1));
  CHECK_THROWS_AS(t.fit(DatasetIndex{}), ValidationError);
  DatasetIndex one = data(1);
  one.images[0].crops.resize(1);
  one.refresh_mean();
  CHECK_THROWS_AS(t.fit(one), ValidationError);

  TrainSchedule bad = quick(1);
  bad.warmup_epochs = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = quick(3);
  bad.crops_per_image = 1;
  CHECK_THROWS_AS(Trainer(m, bad), ValidationError);
  bad = quick(3);
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  const nlohmann::json j = quick(7);
  CHECK(nlohmann::json(j.get<TrainSchedule>()) == j);
}
