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

#include "hpsim/tensor.hpp"

namespace hpsim {

struct ConvLayerSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool relu = true;
};

struct FcLayerSpec {
  std::int64_t in_dim = 0;
  std::int64_t out_dim = 0;
  bool relu = false;
};

/// Two-part network: a convolutional stack followed by a fully-connected
/// stack. The output of the last conv layer is flattened per example in
/// channel-major row-major order (the natural memory order of a CxHxW
/// volume); that flattened vector is the tensor handed from the
/// data-parallel half to the model-parallel half of a cluster step.
struct ModelSpec {
  std::vector<ConvLayerSpec> conv_layers;
  std::vector<FcLayerSpec> fc_layers;
  std::vector<std::int64_t> input_shape;  // C, H, W
  std::int64_t num_classes = 0;

  /// Throws ConfigError if layer shapes do not chain, the flattened conv
  /// volume does not match the first fc in_dim, either stack is empty, or
  /// the last fc out_dim differs from num_classes.
  void validate() const;

  /// Spatial size (H, W) of each conv layer's output.
  std::vector<std::pair<std::int64_t, std::int64_t>> conv_output_sizes() const;
  std::int64_t flattened_conv_size() const;
};

struct ModelStats {
  std::int64_t conv_params = 0;
  std::int64_t fc_params = 0;
  // Forward FLOPs per example; 2 FLOPs per multiply-accumulate, bias adds
  // and activation functions not counted.
  std::int64_t conv_flops = 0;
  std::int64_t fc_flops = 0;
  std::int64_t last_conv_activation_size = 0;

  std::int64_t total_params() const { return conv_params + fc_params; }
  std::int64_t total_flops() const { return conv_flops + fc_flops; }
};

ModelStats count_stats(const ModelSpec& spec);

struct ConvParams {
  Tensor kernels;  // [F x C x R x S]
  Tensor bias;     // [F]
};

struct FcParams {
  Tensor weight;  // [in_dim x out_dim]
  Tensor bias;    // [out_dim]
};

/// Instantiated parameters. init_model draws weights from Gaussian(0, 0.01)
/// (standard deviation 0.01) and zeroes biases; identical (spec, seed) pairs
/// produce bit-identical parameters.
struct Model {
  ModelSpec spec;
  std::vector<ConvParams> conv;
  std::vector<FcParams> fc;
  std::uint64_t rng_seed = 0;
  Precision precision = Precision::kDouble;
};

Model init_model(const ModelSpec& spec, std::uint64_t seed,
                 Precision precision = Precision::kDouble);

/// Per-layer activations kept for the backward pass.
struct ActivationCache {
  Tensor input;                     // [B x C x H x W]
  std::vector<Tensor> conv_pre;     // pre-activation per conv layer
  std::vector<Tensor> conv_out;     // post-activation per conv layer
  Tensor flat;                      // [B x flattened_conv_size]
  std::vector<Tensor> fc_in;        // input per fc layer
  std::vector<Tensor> fc_pre;       // pre-activation per fc layer
  Tensor logits;                    // [B x L]
  std::int64_t batch = 0;
};

ActivationCache forward(const Model& model, const Tensor& batch);

/// Mean-over-batch parameter gradients, split by stack.
struct Gradients {
  std::vector<ConvParams> conv;  // same shapes as model.conv
  std::vector<FcParams> fc;      // same shapes as model.fc
  double loss = 0.0;
};

Gradients backward(const Model& model, const ActivationCache& cache,
                   const Tensor& targets);

/// Forward through the conv stack alone; fills the conv part of the cache
/// (including the flattened last-stage activations). Takes the parameter
/// list directly so a cluster worker can run it on its own replica.
ActivationCache conv_forward(const ModelSpec& spec,
                             const std::vector<ConvParams>& conv,
                             const Tensor& batch);

/// Backward pass through the conv stack alone, given the gradient of the
/// flattened last-stage conv activations (mean-over-batch semantics are the
/// caller's; this propagates whatever scaling the flat gradient carries).
std::vector<ConvParams> conv_backward_from_flat(
    const ModelSpec& spec, const std::vector<ConvParams>& conv,
    const ActivationCache& cache, const Tensor& flat_grad);

/// x * w + bias (bias broadcast over rows). The one affine kernel used by
/// every fully-connected path, sharded or not, so summation order matches.
Tensor fc_affine(const Tensor& x, const Tensor& w, const Tensor& bias);

}  // namespace hpsim
