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

#include <string>

#include "hpsim/errors.hpp"

namespace hpsim {

/// Learning-rate rule when the batch size is multiplied by k.
/// TheorySqrt keeps the variance of the gradient estimate constant
/// (lr' = sqrt(k) * lr); HeuristicLinear is the lr' = k * lr rule that
/// tends to work better in practice at moderate batch sizes.
enum class ScaleRule { kTheorySqrt, kHeuristicLinear };

const char* to_string(ScaleRule r);
ScaleRule scale_rule_from_string(const std::string& s);

double scale_lr(double lr, double k, ScaleRule rule);

/// Weight decay that makes one decay application at batch size k*N match k
/// applications at batch size N:
///   omega' = (1 / (sqrt(k) * lr)) * (1 - (1 - lr*omega)^k)
/// using the sqrt(k)-scaled learning rate in the denominator.
/// Requires lr*omega < 1.
double scale_weight_decay_exact(double lr, double weight_decay, double k);

/// Small-lr limit of the exact rule: omega' = sqrt(k) * omega.
double scale_weight_decay_approx(double weight_decay, double k);

/// A batch-size change plan: inputs, chosen rule, and all derived values.
struct ScalePlan {
  double k = 1.0;
  double lr = 0.0;
  double weight_decay = 0.0;
  ScaleRule rule = ScaleRule::kTheorySqrt;
  double scaled_lr = 0.0;
  double weight_decay_exact = 0.0;
  double weight_decay_approx = 0.0;
  /// With the linear-lr heuristic the decay that pairs with it in practice
  /// is simply the unscaled omega; reported alongside the derived values.
  double weight_decay_practical = 0.0;
};

ScalePlan make_scale_plan(double lr, double weight_decay, double k,
                          ScaleRule rule);

}  // namespace hpsim
