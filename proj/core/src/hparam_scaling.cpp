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
#include "hpsim/hparam_scaling.hpp"

#include <cmath>

namespace hpsim {

const char* to_string(ScaleRule r) {
  return r == ScaleRule::kTheorySqrt ? "theory" : "heuristic";
}

ScaleRule scale_rule_from_string(const std::string& s) {
  if (s == "theory" || s == "sqrt") return ScaleRule::kTheorySqrt;
  if (s == "heuristic" || s == "linear") return ScaleRule::kHeuristicLinear;
  throw ConfigError("unknown scale rule '" + s +
                    "' (expected theory|heuristic)");
}

double scale_lr(double lr, double k, ScaleRule rule) {
  if (!(lr > 0.0)) throw DomainError("scale_lr: lr must be positive");
  if (!(k > 0.0)) throw DomainError("scale_lr: k must be positive");
  return rule == ScaleRule::kTheorySqrt ? lr * std::sqrt(k) : lr * k;
}

double scale_weight_decay_exact(double lr, double weight_decay, double k) {
  if (!(k > 0.0)) throw DomainError("scale_weight_decay_exact: k must be positive");
  const double per_step = lr * weight_decay;
  if (!(per_step < 1.0)) {
    throw DomainError("scale_weight_decay_exact: lr*weight_decay = " +
                      std::to_string(per_step) + " must be < 1");
  }
  return (1.0 - std::pow(1.0 - per_step, k)) / (std::sqrt(k) * lr);
}

double scale_weight_decay_approx(double weight_decay, double k) {
  if (!(k > 0.0)) throw DomainError("scale_weight_decay_approx: k must be positive");
  return std::sqrt(k) * weight_decay;
}

ScalePlan make_scale_plan(double lr, double weight_decay, double k,
                          ScaleRule rule) {
  ScalePlan plan;
  plan.k = k;
  plan.lr = lr;
  plan.weight_decay = weight_decay;
  plan.rule = rule;
  plan.scaled_lr = scale_lr(lr, k, rule);
  plan.weight_decay_exact = scale_weight_decay_exact(lr, weight_decay, k);
  plan.weight_decay_approx = scale_weight_decay_approx(weight_decay, k);
  plan.weight_decay_practical = weight_decay;
  return plan;
}

}  // namespace hpsim
