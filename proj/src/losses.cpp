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

#include "hccrop/losses.hpp"

#include <cmath>

#include "hccrop/error.hpp"

namespace hccrop {
namespace {

void check_lengths(std::span<const double> y, std::span<const double> y_hat, std::size_t min_n,
                   const char* what) {
  if (y.size() != y_hat.size()) throw ValidationError(std::string(what) + ": length mismatch");
  if (y.size() < min_n) throw ValidationError(std::string(what) + ": too few crops");
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) { return std::abs(x) < 1.0 ? x : sign(x); }

double regression_loss(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, 1, "regression_loss");
  double sum = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) sum += smooth_l1(y[m] - y_hat[m]);
  return sum / static_cast<double>(y.size());
}

std::vector<double> regression_loss_grad(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, 1, "regression_loss");
  std::vector<double> g(y.size());
  const double inv_n = 1.0 / static_cast<double>(y.size());
  for (std::size_t m = 0; m < y.size(); ++m) g[m] = -smooth_l1_derivative(y[m] - y_hat[m]) * inv_n;
  return g;
}

double ranking_loss(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, 2, "ranking_loss");
  const std::size_t n = y.size();
  double sum = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = m + 1; k < n; ++k) {
      const double e = y[m] - y[k];
      const double e_hat = y_hat[m] - y_hat[k];
      sum += std::max(0.0, sign(e) * (e - e_hat));
    }
  }
  return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<double> ranking_loss_grad(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, 2, "ranking_loss");
  const std::size_t n = y.size();
  const double inv_pairs = 1.0 / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
  std::vector<double> g(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = m + 1; k < n; ++k) {
      const double e = y[m] - y[k];
      const double s = sign(e);
      if (s * (e - (y_hat[m] - y_hat[k])) > 0.0) {
        // d/d e_hat of s * (e - e_hat) is -s.
        g[m] -= s * inv_pairs;
        g[k] += s * inv_pairs;
      }
    }
  }
  return g;
}

LossBreakdown total_loss(std::span<const double> y, std::span<const double> y_hat, const Heatmap* pred,
                         const Heatmap* gt, double lambda) {
  LossBreakdown out;
  out.lambda = lambda;
  out.reg = regression_loss(y, y_hat);
  out.rank = ranking_loss(y, y_hat);
  if (pred != nullptr && gt != nullptr) out.cont = content_loss(*pred, *gt);
  out.total = out.reg + out.rank + lambda * out.cont;
  return out;
}

}  // namespace hccrop
