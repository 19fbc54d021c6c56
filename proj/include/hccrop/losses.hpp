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

#include <span>
#include <vector>

#include "hccrop/heatmap.hpp"

namespace hccrop {

struct LossBreakdown {
  double reg = 0.0;
  double rank = 0.0;
  double cont = 0.0;
  double total = 0.0;
  double lambda = 1.0;
};

// 0.5 x^2 when |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);
double smooth_l1_derivative(double x);

// (1/N) sum smooth_l1(y_m - y_hat_m).
double regression_loss(std::span<const double> y, std::span<const double> y_hat);
// d/d y_hat of regression_loss.
std::vector<double> regression_loss_grad(std::span<const double> y, std::span<const double> y_hat);

// Pairwise hinge over unordered pairs m < n:
//   max(0, sign(e) * (e - e_hat)),  e = y_m - y_n,  e_hat = y_hat_m - y_hat_n
// averaged over N(N-1)/2. Ground-truth ties contribute nothing.
double ranking_loss(std::span<const double> y, std::span<const double> y_hat);
std::vector<double> ranking_loss_grad(std::span<const double> y, std::span<const double> y_hat);

// total = reg + rank + lambda * cont. Pass `gt` = nullptr when heatmap
// supervision is disabled; cont is then 0.
LossBreakdown total_loss(std::span<const double> y, std::span<const double> y_hat, const Heatmap* pred,
                         const Heatmap* gt, double lambda = 1.0);

}  // namespace hccrop
