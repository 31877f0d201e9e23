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

#include <cstdint>
#include <vector>

#include "hpsim/model.hpp"
#include "hpsim/optimizer.hpp"

namespace hpsim {

/// Plain single-worker synchronous SGD on a whole model: forward, backward,
/// one momentum update per step over whatever batch it is given. This is
/// the reference a K-worker cluster run is compared against (at batch size
/// K*b). It never touches the cluster code path.
class SingleTrainer {
 public:
  SingleTrainer(const ModelSpec& spec, std::uint64_t seed,
                Precision precision = Precision::kDouble);
  explicit SingleTrainer(Model model);

  /// One step: returns the mean loss over the batch.
  double step(const Tensor& batch, const Tensor& targets,
              const HyperParams& hp, double lr);

  const Model& model() const { return model_; }
  Model& model() { return model_; }

 private:
  Model model_;
  std::vector<ConvParams> conv_momentum_;
  std::vector<FcParams> fc_momentum_;
};

/// Largest relative parameter divergence between two models with identical
/// specs: max over parameter tensors of ||a - b||_inf / (||b||_inf + eps)
/// with eps = 1e-30.
double max_relative_divergence(const Model& a, const Model& b);

}  // namespace hpsim
