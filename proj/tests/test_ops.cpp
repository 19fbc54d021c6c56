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

#include <random>

#include "hccrop/error.hpp"
#include "hccrop/ops.hpp"
#include "oracles.hpp"

using namespace hccrop;
using namespace hccrop::nn;

namespace {

using OpFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Contracts the op output with fixed random weights so every output entry
// contributes to a scalar, then compares tape gradients with central
// differences for every input entry. Returns the worst relative error.
double gradcheck(std::vector<Parameter>& inputs, const OpFn& op, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  Tensor probe;
  auto scalar = [&](Tape& t) {
    std::vector<Var> vars;
    for (auto& p : inputs) vars.push_back(t.parameter(p));
    const Var out = op(t, vars);
    const std::size_t n = t.value(out).size();
    if (probe.empty()) probe = oracle::random_tensor({1, int(n)}, rng);
    return linear(t, reshape(t, out, {int(n)}), t.constant(probe), Var{});
  };
  for (auto& p : inputs) p.grad = Tensor(p.value.shape());
  {
    Tape t;
    t.backward(scalar(t));
  }
  double worst = 0.0;
  for (auto& p : inputs) {
    std::vector<double> analytic(p.grad.values().begin(), p.grad.values().end()), numeric;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      numeric.push_back(oracle::central_difference(
          [&] {
            Tape t(false);
            return t.value(scalar(t))[0];
          },
          p.value[k], 1e-6));
    }
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return worst;
}

Parameter param(std::string name, std::vector<int> shape, std::mt19937_64& rng) {
  Parameter p{std::move(name), oracle::random_tensor(std::move(shape), rng), {}};
  return p;
}

Tensor eval(const OpFn& op, std::vector<Tensor> values) {
  Tape t(false);
  std::vector<Var> vars;
  for (auto& v : values) vars.push_back(t.constant(v));
  return t.value(op(t, vars));
}

// Direct zero-padded convolution.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor out({co, oh, ow});
  for (int o = 0; o < co; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        double s = b.empty() ? 0.0 : b[o];
        for (int c = 0; c < ci; ++c) {
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const int iy = y * stride - pad + dy, ix = xx * stride - pad + dx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              s += w[((o * ci + c) * k + dy) * k + dx] * x.at(c, iy, ix);
            }
          }
        }
        out.at(o, y, xx) = s;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches direct convolution") {
  std::mt19937_64 rng(41);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      const Tensor x = oracle::random_tensor({3, 7, 6}, rng);
      const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng);
      const Tensor b = oracle::random_tensor({4}, rng);
      const Tensor got = eval([&](Tape& t, const auto& v) { return conv2d(t, v[0], v[1], v[2], stride, pad); },
                              {x, w, b});
      const Tensor want = naive_conv(x, w, b, stride, pad);
      REQUIRE(got.same_shape(want));
      for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradients: conv2d, linear, relu, sigmoid, add, scale") {
  std::mt19937_64 rng(42);
  std::vector<Parameter> conv{param("x", {2, 5, 6}, rng), param("w", {3, 2, 3, 3}, rng), param("b", {3}, rng)};
  CHECK(gradcheck(conv, [](Tape& t, const auto& v) { return conv2d(t, v[0], v[1], v[2], 2, 1); }) < 1e-6);
  CHECK(gradcheck(conv, [](Tape& t, const auto& v) { return relu(t, conv2d(t, v[0], v[1], v[2], 1, 1)); }) < 1e-6);

  std::vector<Parameter> lin{param("x", {5}, rng), param("w", {3, 5}, rng), param("b", {3}, rng)};
  CHECK(gradcheck(lin, [](Tape& t, const auto& v) { return sigmoid(t, linear(t, v[0], v[1], v[2])); }) < 1e-6);

  std::vector<Parameter> pair{param("a", {2, 3, 3}, rng), param("b", {2, 3, 3}, rng)};
  CHECK(gradcheck(pair, [](Tape& t, const auto& v) { return scale(t, add(t, v[0], v[1]), -1.7); }) < 1e-6);
}

TEST_CASE("resize_bilinear and pooling: values and gradients") {
  std::mt19937_64 rng(43);
  const Tensor constant({2, 3, 5}, 0.7);
  const Tensor up = eval([](Tape& t, const auto& v) { return resize_bilinear(t, v[0], 12, 20); }, {constant});
  for (double v : up.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

  // 2x2 -> 4x4 half-pixel: the first row is 1, 1.25, 1.75, 2 for inputs (1, 2).
  const Tensor small({1, 2, 2}, std::vector<double>{1, 2, 1, 2});
  const Tensor big = eval([](Tape& t, const auto& v) { return resize_bilinear(t, v[0], 4, 4); }, {small});
  CHECK(big.at(0, 0, 0) == 1.0);
  CHECK(big.at(0, 0, 1) == 1.25);
  CHECK(big.at(0, 0, 2) == 1.75);
  CHECK(big.at(0, 0, 3) == 2.0);

  const Tensor grid({1, 4, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  const Tensor pooled = eval([](Tape& t, const auto& v) { return adaptive_avg_pool(t, v[0], 2, 2); }, {grid});
  CHECK(pooled.at(0, 0, 0) == 3.5);
  CHECK(pooled.at(0, 1, 1) == 13.5);
  const Tensor mean = eval([](Tape& t, const auto& v) { return spatial_mean(t, v[0]); }, {grid});
  CHECK(mean[0] == 8.5);

  std::vector<Parameter> x{param("x", {2, 5, 7}, rng)};
  CHECK(gradcheck(x, [](Tape& t, const auto& v) { return resize_bilinear(t, v[0], 9, 4); }) < 1e-6);
  CHECK(gradcheck(x, [](Tape& t, const auto& v) { return adaptive_avg_pool(t, v[0], 3, 2); }) < 1e-6);
  CHECK(gradcheck(x, [](Tape& t, const auto& v) { return spatial_mean(t, v[0]); }) < 1e-6);
}

TEST_CASE("concat, reshape and tile_vector gradients") {
  std::mt19937_64 rng(44);
  std::vector<Parameter> ps{param("a", {2, 3, 4}, rng), param("b", {1, 3, 4}, rng), param("v", {3}, rng)};
  CHECK(gradcheck(ps, [](Tape& t, const auto& v) {
          return concat(t, {v[0], v[1], tile_vector(t, v[2], 3, 4)});
        }) < 1e-6);
}

TEST_CASE("masked crop and paste keep partitions apart") {
  std::mt19937_64 rng(45);
  const Tensor x = oracle::random_tensor({2, 4, 4}, rng);
  std::vector<std::uint8_t> mask(16, 0);
  mask[5] = mask[6] = mask[10] = 1;  // cells (1,1), (1,2), (2,2)
  const CellRect rect{1, 1, 2, 2};
  const Tensor crop = eval([&](Tape& t, const auto& v) { return masked_crop(t, v[0], rect, mask); }, {x});
  CHECK(crop.shape() == std::vector<int>{2, 2, 2});
  CHECK(crop.at(0, 0, 0) == x.at(0, 1, 1));
  CHECK(crop.at(1, 1, 0) == 0.0);  // cell (2,1) is masked out

  const Tensor base({2, 4, 4}, 9.0);
  const Tensor patch({2, 2, 2}, -1.0);
  const Tensor pasted =
      eval([&](Tape& t, const auto& v) { return masked_paste(t, v[0], v[1], rect, mask); }, {base, patch});
  CHECK(pasted.at(0, 1, 1) == -1.0);
  CHECK(pasted.at(0, 2, 1) == 9.0);
  CHECK(pasted.at(1, 0, 0) == 9.0);

  std::vector<Parameter> ps{param("x", {2, 4, 4}, rng), param("p", {2, 2, 2}, rng)};
  CHECK(gradcheck(ps, [&](Tape& t, const auto& v) {
          return masked_paste(t, v[0], masked_crop(t, v[1], {0, 0, 2, 2}, std::vector<std::uint8_t>{1, 0, 1, 1}),
                              rect, mask);
        }) < 1e-6);
}

TEST_CASE("cosine adjacency: row-stochastic, degenerate cases") {
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = oracle::random_tensor({3, 3, 4}, rng);
    const Tensor a = cosine_adjacency(x);
    for (int i = 0; i < 12; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 12; ++j) {
        CHECK(a[i * 12 + j] >= 0.0);
        sum += a[i * 12 + j];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
  // 2x1 map with orthogonal unit rows.
  const Tensor ortho({2, 2, 1}, std::vector<double>{1, 0, 0, 1});
  CHECK(cosine_adjacency(ortho).values().size() == 4);
  const Tensor a = cosine_adjacency(ortho);
  CHECK(a[0] == 1.0);
  CHECK(a[1] == 0.0);
  CHECK(a[2] == 0.0);
  CHECK(a[3] == 1.0);

  // Zero rows only see themselves.
  const Tensor zeros({2, 1, 3}, std::vector<double>{0, 1, 1, 0, 1, 1});
  const Tensor z = cosine_adjacency(zeros);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 0.0);
  CHECK(z[4] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("graph relation: identical rows and identity adjacency") {
  std::mt19937_64 rng(47);
  Tensor identity({3, 3});
  for (int i = 0; i < 3; ++i) identity[i * 3 + i] = 1.0;
  Tensor same({3, 2, 2});
  const double row[3] = {0.5, -1.0, 2.0};
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) same[c * 4 + k] = row[c];
  }
  const Tensor out = eval([](Tape& t, const auto& v) { return graph_relation(t, v[0], v[1]); }, {same, identity});
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) CHECK(out[c * 4 + k] == doctest::Approx(std::max(0.0, row[c])).epsilon(1e-12));
  }

  const Tensor x = oracle::random_tensor({3, 2, 3}, rng);
  Tensor eye({6, 6});
  for (int i = 0; i < 6; ++i) eye[i * 6 + i] = 1.0;
  const Tensor p = eval([&](Tape& t, const auto& v) { return graph_propagate(t, v[0], v[1], eye); }, {x, identity});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(p[i] == std::max(0.0, x[i]));

  std::vector<Parameter> ps{param("x", {3, 3, 3}, rng), param("theta", {3, 3}, rng)};
  CHECK(gradcheck(ps, [](Tape& t, const auto& v) { return graph_relation(t, v[0], v[1]); }) < 1e-6);
}

TEST_CASE("roi_align and zero_inside") {
  std::mt19937_64 rng(48);
  const Tensor constant({2, 6, 6}, 1.5);
  const Tensor r =
      eval([](Tape& t, const auto& v) { return roi_align(t, v[0], {0.7, 1.2, 4.9, 5.1}, 4); }, {constant});
  CHECK(r.shape() == std::vector<int>{2, 4, 4});
  for (double v : r.values()) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));

  // Boxes past the map are clamped rather than rejected.
  const Tensor clamped =
      eval([](Tape& t, const auto& v) { return roi_align(t, v[0], {-3, -3, 20, 20}, 2); }, {constant});
  for (double v : clamped.values()) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));

  const Tensor z = eval([](Tape& t, const auto& v) { return zero_inside(t, v[0], {0, 0, 6, 6}); }, {constant});
  for (double v : z.values()) CHECK(v == 0.0);
  const Tensor half = eval([](Tape& t, const auto& v) { return zero_inside(t, v[0], {0, 0, 3, 6}); }, {constant});
  CHECK(half.at(0, 0, 2) == 0.0);
  CHECK(half.at(0, 0, 3) == 1.5);

  std::vector<Parameter> ps{param("x", {2, 5, 6}, rng)};
  CHECK(gradcheck(ps, [](Tape& t, const auto& v) { return roi_align(t, v[0], {0.3, 0.8, 4.1, 3.9}, 3); }) < 1e-6);
  CHECK(gradcheck(ps, [](Tape& t, const auto& v) {
          return roi_align(t, zero_inside(t, v[0], {1, 1, 3, 3}), {0, 0, 6, 5}, 2);
        }) < 1e-6);
}

TEST_CASE("loss ops agree with the scalar losses and have correct gradients") {
  std::mt19937_64 rng(49);
  const std::vector<double> y{3.0, 1.5, 4.0, 1.5, 2.0};
  std::vector<Parameter> ps{param("p", {5}, rng), param("h", {1, 3, 4}, rng)};
  const Tensor target = oracle::random_tensor({1, 3, 4}, rng, 0.0, 1.0);
  {
    Tape t(false);
    const Var p = t.parameter(ps[0]);
    std::vector<double> pv(ps[0].value.values().begin(), ps[0].value.values().end());
    double reg = 0.0;
    for (int i = 0; i < 5; ++i) reg += oracle::smooth_l1(y[i] - pv[i]);
    CHECK(t.value(regression_loss(t, p, y))[0] == doctest::Approx(reg / 5).epsilon(1e-14));
    CHECK(t.value(ranking_loss(t, p, y))[0] == doctest::Approx(oracle::ranking_loss(y, pv)).epsilon(1e-14));
  }
  CHECK(gradcheck(ps, [&](Tape& t, const auto& v) {
          return weighted_sum(t, {regression_loss(t, v[0], y), ranking_loss(t, v[0], y), mean_abs_error(t, v[1], target)},
                              {1.0, 1.0, 0.5});
        }) < 1e-6);
}

TEST_CASE("op shape errors are reported") {
  Tape t(false);
  const Var x = t.constant(Tensor({2, 3, 3}));
  const Var w = t.constant(Tensor({4, 3, 3, 3}));
  CHECK_THROWS_AS(conv2d(t, x, w, Var{}, 1, 1), ValidationError);
  CHECK_THROWS_AS(mean_abs_error(t, x, Tensor({2, 3, 4})), ValidationError);
}
