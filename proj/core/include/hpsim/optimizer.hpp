/* Copyright 2026 The hpsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "hpsim/tensor.hpp"

namespace hpsim {

/// Momentum-SGD hyperparameters and the piecewise-constant learning-rate
/// schedule (base rate multiplied by schedule_factor at each milestone).
struct HyperParams {
  double momentum = 0.9;       // mu
  double lr = 0.01;            // epsilon
  double weight_decay = 0.0;   // omega
  int epochs = 1;
  std::vector<double> schedule_milestones{0.25, 0.5, 0.75};
  double schedule_factor = default_schedule_factor();
  /// Learning rate for the per-sub-batch fully-connected updates in
  /// variable-batch mode; unset means the global per-step rate.
  std::optional<double> fc_partial_lr;

  static double default_schedule_factor() {
    return std::pow(250.0, -1.0 / 3.0);
  }

  void validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw ConfigError("hyper.momentum: must be in [0,1)");
    }
    if (!(lr > 0.0)) throw ConfigError("hyper.lr: must be positive");
    if (!(weight_decay >= 0.0)) {
      throw ConfigError("hyper.weight_decay: must be non-negative");
    }
  }
};

/// One momentum-SGD update, descent form:
///   delta := momentum * delta - lr * (grad + weight_decay * w)
///   w     := w + delta
/// grad is the mean descent gradient of the loss. The update is applied in
/// place; it is a deterministic elementwise function of (w, delta, grad), so
/// applying it to a tensor or independently to disjoint shards of that
/// tensor produces bit-identical results.
void momentum_update(Tensor& w, Tensor& delta, const Tensor& grad, double lr,
                     double momentum, double weight_decay);

/// Learning rate after the schedule: base_lr * factor^m where m counts the
/// milestones strictly below progress. progress must lie in [0,1].
double lr_at(double progress, double base_lr,
             std::span<const double> milestones, double factor);
double lr_at(double progress, double base_lr);  // standard schedule

}  // namespace hpsim
