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
#include "hpsim/optimizer.hpp"

namespace hpsim {

void momentum_update(Tensor& w, Tensor& delta, const Tensor& grad, double lr,
                     double momentum, double weight_decay) {
  if (w.shape() != delta.shape() || w.shape() != grad.shape()) {
    throw DimensionError("momentum_update: w " + shape_string(w.shape()) +
                         ", delta " + shape_string(delta.shape()) +
                         ", grad " + shape_string(grad.shape()) +
                         " must share a shape");
  }
  delta.scale(momentum);
  delta.add_scaled(grad, -lr);
  delta.add_scaled(w, -lr * weight_decay);
  w.add(delta);
}

double lr_at(double progress, double base_lr,
             std::span<const double> milestones, double factor) {
  if (progress < 0.0 || progress > 1.0) {
    throw DomainError("lr_at: progress " + std::to_string(progress) +
                      " outside [0,1]");
  }
  double lr = base_lr;
  for (double m : milestones) {
    if (progress > m) lr *= factor;
  }
  return lr;
}

double lr_at(double progress, double base_lr) {
  const double milestones[] = {0.25, 0.5, 0.75};
  return lr_at(progress, base_lr, milestones,
               HyperParams::default_schedule_factor());
}

}  // namespace hpsim
