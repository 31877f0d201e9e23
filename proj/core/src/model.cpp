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
#include "hpsim/model.hpp"

#include <string>

#include "hpsim/rng.hpp"

namespace hpsim {

namespace {

std::int64_t conv_out_dim(std::int64_t in, int kernel, int stride, int pad,
                          const std::string& where) {
  const std::int64_t num = in + 2 * pad - kernel;
  if (num < 0 || num % stride != 0) {
    throw ConfigError(where + ": output dimension (" + std::to_string(in) +
                      "+2*" + std::to_string(pad) + "-" +
                      std::to_string(kernel) + ")/" + std::to_string(stride) +
                      "+1 is not a positive integer");
  }
  return num / stride + 1;
}

}  // namespace

void ModelSpec::validate() const {
  if (input_shape.size() != 3) {
    throw ConfigError("model.input_shape: expected [C,H,W]");
  }
  for (auto d : input_shape) {
    if (d <= 0) throw ConfigError("model.input_shape: dimensions must be positive");
  }
  if (conv_layers.empty()) {
    throw ConfigError("model.conv_layers: at least one conv layer required");
  }
  if (fc_layers.empty()) {
    throw ConfigError("model.fc_layers: at least one fc layer required");
  }
  std::int64_t channels = input_shape[0];
  std::int64_t h = input_shape[1];
  std::int64_t w = input_shape[2];
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& l = conv_layers[i];
    const std::string where = "model.conv_layers[" + std::to_string(i) + "]";
    if (l.in_channels != channels) {
      throw ConfigError(where + ".in_channels: expected " +
                        std::to_string(channels) + ", got " +
                        std::to_string(l.in_channels));
    }
    if (l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0 || l.pad < 0) {
      throw ConfigError(where + ": out_channels/kernel/stride must be positive, pad non-negative");
    }
    h = conv_out_dim(h, l.kernel, l.stride, l.pad, where + " (height)");
    w = conv_out_dim(w, l.kernel, l.stride, l.pad, where + " (width)");
    channels = l.out_channels;
  }
  const std::int64_t flat = channels * h * w;
  std::int64_t dim = flat;
  for (std::size_t i = 0; i < fc_layers.size(); ++i) {
    const auto& l = fc_layers[i];
    const std::string where = "model.fc_layers[" + std::to_string(i) + "]";
    if (l.in_dim != dim) {
      throw ConfigError(where + ".in_dim: expected " + std::to_string(dim) +
                        " (flattened preceding output), got " +
                        std::to_string(l.in_dim));
    }
    if (l.out_dim <= 0) throw ConfigError(where + ".out_dim: must be positive");
    dim = l.out_dim;
  }
  if (num_classes <= 0) {
    throw ConfigError("model.num_classes: must be positive");
  }
  if (dim != num_classes) {
    throw ConfigError("model.fc_layers: last out_dim " + std::to_string(dim) +
                      " does not match num_classes " +
                      std::to_string(num_classes));
  }
}

std::vector<std::pair<std::int64_t, std::int64_t>> ModelSpec::conv_output_sizes()
    const {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::int64_t h = input_shape[1];
  std::int64_t w = input_shape[2];
  for (const auto& l : conv_layers) {
    h = conv_out_dim(h, l.kernel, l.stride, l.pad, "conv");
    w = conv_out_dim(w, l.kernel, l.stride, l.pad, "conv");
    out.emplace_back(h, w);
  }
  return out;
}

std::int64_t ModelSpec::flattened_conv_size() const {
  const auto sizes = conv_output_sizes();
  return conv_layers.back().out_channels * sizes.back().first *
         sizes.back().second;
}

ModelStats count_stats(const ModelSpec& spec) {
  spec.validate();
  ModelStats stats;
  const auto sizes = spec.conv_output_sizes();
  for (std::size_t i = 0; i < spec.conv_layers.size(); ++i) {
    const auto& l = spec.conv_layers[i];
    const std::int64_t kernel_params =
        l.out_channels * l.in_channels * l.kernel * l.kernel;
    stats.conv_params += kernel_params + l.out_channels;
    const std::int64_t out_positions = sizes[i].first * sizes[i].second;
    const std::int64_t macs_per_output = l.in_channels * l.kernel * l.kernel;
    stats.conv_flops += 2 * l.out_channels * out_positions * macs_per_output;
  }
  for (const auto& l : spec.fc_layers) {
    stats.fc_params += l.in_dim * l.out_dim + l.out_dim;
    stats.fc_flops += 2 * l.in_dim * l.out_dim;
  }
  stats.last_conv_activation_size = spec.flattened_conv_size();
  return stats;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed,
                 Precision precision) {
  spec.validate();
  Model model;
  model.spec = spec;
  model.rng_seed = seed;
  model.precision = precision;
  GaussianSampler gauss(seed);
  const double stddev = 0.01;
  auto gaussian_tensor = [&](std::vector<std::int64_t> shape) {
    Tensor t(std::move(shape), precision);
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t.set_value(i, stddev * gauss.next());
    }
    return t;
  };
  for (const auto& l : spec.conv_layers) {
    ConvParams p;
    p.kernels = gaussian_tensor({l.out_channels, l.in_channels, l.kernel, l.kernel});
    p.bias = Tensor({l.out_channels}, precision);
    model.conv.push_back(std::move(p));
  }
  for (const auto& l : spec.fc_layers) {
    FcParams p;
    p.weight = gaussian_tensor({l.in_dim, l.out_dim});
    p.bias = Tensor({l.out_dim}, precision);
    model.fc.push_back(std::move(p));
  }
  return model;
}

namespace {

// y[b,f,:,:] += bias[f]
void add_channel_bias(Tensor& y, const Tensor& bias) {
  const auto b = y.dim(0), f = y.dim(1), hw = y.dim(2) * y.dim(3);
  if (y.precision() == Precision::kSingle) {
    auto d = y.data<float>();
    auto bv = bias.data<float>();
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t j = 0; j < f; ++j)
        for (std::int64_t k = 0; k < hw; ++k) d[(i * f + j) * hw + k] += bv[j];
  } else {
    auto d = y.data<double>();
    auto bv = bias.data<double>();
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t j = 0; j < f; ++j)
        for (std::int64_t k = 0; k < hw; ++k) d[(i * f + j) * hw + k] += bv[j];
  }
}

// bias_grad[f] = sum_{b,h,w} g[b,f,h,w], ascending (b,h,w)
Tensor channel_sums(const Tensor& g) {
  const auto b = g.dim(0), f = g.dim(1), hw = g.dim(2) * g.dim(3);
  Tensor out({f}, g.precision());
  if (g.precision() == Precision::kSingle) {
    auto s = g.data<float>();
    auto d = out.data<float>();
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t j = 0; j < f; ++j)
        for (std::int64_t k = 0; k < hw; ++k) d[j] += s[(i * f + j) * hw + k];
  } else {
    auto s = g.data<double>();
    auto d = out.data<double>();
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t j = 0; j < f; ++j)
        for (std::int64_t k = 0; k < hw; ++k) d[j] += s[(i * f + j) * hw + k];
  }
  return out;
}

void check_batch_shape(const ModelSpec& spec, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != spec.input_shape[0] ||
      batch.dim(2) != spec.input_shape[1] ||
      batch.dim(3) != spec.input_shape[2]) {
    throw DimensionError("forward: batch shape " +
                         shape_string(batch.shape()) +
                         " does not match model input [Bx" +
                         std::to_string(spec.input_shape[0]) + "x" +
                         std::to_string(spec.input_shape[1]) + "x" +
                         std::to_string(spec.input_shape[2]) + "]");
  }
}

}  // namespace

Tensor fc_affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor z = matmul(x, w);
  add_row_broadcast(z, bias);
  return z;
}

ActivationCache conv_forward(const ModelSpec& spec,
                             const std::vector<ConvParams>& conv,
                             const Tensor& batch) {
  check_batch_shape(spec, batch);
  ActivationCache cache;
  cache.input = batch;
  cache.batch = batch.dim(0);
  Tensor x = batch;
  for (std::size_t i = 0; i < spec.conv_layers.size(); ++i) {
    const auto& l = spec.conv_layers[i];
    Tensor z = conv2d_forward(x, conv[i].kernels, l.stride, l.pad);
    add_channel_bias(z, conv[i].bias);
    cache.conv_pre.push_back(z);
    x = l.relu ? relu(z) : z;
    cache.conv_out.push_back(x);
  }
  cache.flat = x.reshaped({cache.batch, spec.flattened_conv_size()});
  return cache;
}

ActivationCache forward(const Model& model, const Tensor& batch) {
  ActivationCache cache = conv_forward(model.spec, model.conv, batch);
  Tensor x = cache.flat;
  for (std::size_t i = 0; i < model.spec.fc_layers.size(); ++i) {
    const auto& l = model.spec.fc_layers[i];
    cache.fc_in.push_back(x);
    Tensor z = fc_affine(x, model.fc[i].weight, model.fc[i].bias);
    cache.fc_pre.push_back(z);
    x = l.relu ? relu(z) : z;
  }
  cache.logits = x;
  return cache;
}

std::vector<ConvParams> conv_backward_from_flat(
    const ModelSpec& spec, const std::vector<ConvParams>& conv,
    const ActivationCache& cache, const Tensor& flat_grad) {
  if (cache.conv_out.size() != conv.size()) {
    throw UsageError("conv_backward_from_flat: cache does not match model");
  }
  const auto sizes = spec.conv_output_sizes();
  Tensor grad = flat_grad.reshaped({cache.batch,
                                    spec.conv_layers.back().out_channels,
                                    sizes.back().first, sizes.back().second});
  std::vector<ConvParams> grads(conv.size());
  for (std::int64_t i = static_cast<std::int64_t>(conv.size()) - 1; i >= 0;
       --i) {
    const auto& l = spec.conv_layers[static_cast<std::size_t>(i)];
    const auto idx = static_cast<std::size_t>(i);
    Tensor dz = l.relu ? relu_backward(cache.conv_pre[idx], grad) : grad;
    grads[idx].bias = channel_sums(dz);
    const Tensor& layer_input = i == 0 ? cache.input : cache.conv_out[idx - 1];
    Conv2dGrads cg =
        conv2d_backward(layer_input, conv[idx].kernels, dz, l.stride, l.pad);
    grads[idx].kernels = std::move(cg.grad_kernels);
    if (i > 0) grad = std::move(cg.grad_input);
  }
  return grads;
}

Gradients backward(const Model& model, const ActivationCache& cache,
                   const Tensor& targets) {
  if (cache.fc_in.size() != model.fc.size() ||
      cache.conv_out.size() != model.conv.size()) {
    throw UsageError("backward: cache was not produced by forward on this model");
  }
  Gradients grads;
  grads.fc.resize(model.fc.size());

  XentResult xent = logistic_xent(cache.logits, targets);
  grads.loss = xent.loss;

  Tensor grad = std::move(xent.grad_logits);
  for (std::int64_t i = static_cast<std::int64_t>(model.fc.size()) - 1; i >= 0;
       --i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& l = model.spec.fc_layers[idx];
    Tensor dz = l.relu ? relu_backward(cache.fc_pre[idx], grad) : grad;
    grads.fc[idx].weight = matmul_tn(cache.fc_in[idx], dz);
    grads.fc[idx].bias = column_sums(dz);
    grad = matmul_nt(dz, model.fc[idx].weight);
  }
  grads.conv = conv_backward_from_flat(model.spec, model.conv, cache, grad);
  return grads;
}

}  // namespace hpsim
