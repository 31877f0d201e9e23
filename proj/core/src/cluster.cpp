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
#include "hpsim/cluster.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace hpsim {

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::A: return "A";
    case Scheme::B: return "B";
    case Scheme::C: return "C";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "A" || s == "a") return Scheme::A;
  if (s == "B" || s == "b") return Scheme::B;
  if (s == "C" || s == "c") return Scheme::C;
  throw ConfigError("unknown scheme '" + s + "' (expected A|B|C)");
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kConvFwd: return "conv_fwd";
    case Phase::kFcFwd: return "fc_fwd";
    case Phase::kFcBwd: return "fc_bwd";
    case Phase::kConvBwd: return "conv_bwd";
    case Phase::kSync: return "sync";
  }
  return "?";
}

void ClusterConfig::validate() const {
  if (workers < 1) throw ConfigError("cluster.workers: must be >= 1");
  if (per_worker_batch < 1) {
    throw ConfigError("cluster.per_worker_batch: must be >= 1");
  }
  if (scheme == Scheme::C && per_worker_batch % workers != 0) {
    throw ConfigError(
        "cluster.per_worker_batch: scheme C scatters b/K examples per worker "
        "per turn; " +
        std::to_string(per_worker_batch) + " is not divisible by " +
        std::to_string(workers));
  }
  if (variable_batch && scheme == Scheme::A) {
    throw ConfigError(
        "cluster.variable_batch: scheme A has a single fc pass per step; "
        "per-sub-batch updates require scheme B or C");
  }
}

std::pair<std::int64_t, std::int64_t> shard_range(std::int64_t total,
                                                  int parts, int idx) {
  const std::int64_t base = total / parts;
  const std::int64_t begin = base * idx;
  const std::int64_t end = idx == parts - 1 ? total : begin + base;
  return {begin, end};
}

int StepTrace::count(Phase p) const {
  int n = 0;
  for (const auto& e : events) n += e.phase == p ? 1 : 0;
  return n;
}

int StepTrace::pass_count() const {
  int n = 0;
  for (const auto& e : events) n += e.phase != Phase::kSync ? 1 : 0;
  return n;
}

// --- exchange / return ----------------------------------------------------

namespace {

void check_worker_matrices(const std::vector<Tensor>& per_worker,
                           const char* op) {
  if (per_worker.empty()) {
    throw UsageError(std::string(op) + ": no workers");
  }
  const auto& first = per_worker.front();
  for (const auto& t : per_worker) {
    if (t.rank() != 2 || t.shape() != first.shape() ||
        t.precision() != first.precision()) {
      throw DimensionError(std::string(op) +
                           ": per-worker matrices must share shape and "
                           "precision, got " +
                           shape_string(t.shape()) + " vs " +
                           shape_string(first.shape()));
    }
  }
}

}  // namespace

std::vector<Tensor> assemble_rows(Scheme scheme,
                                  const std::vector<Tensor>& per_worker) {
  check_worker_matrices(per_worker, "assemble_rows");
  const int k = static_cast<int>(per_worker.size());
  const std::int64_t b = per_worker[0].dim(0);
  const std::int64_t cols = per_worker[0].dim(1);
  const Precision prec = per_worker[0].precision();

  std::vector<Tensor> out;
  switch (scheme) {
    case Scheme::A: {
      // One big batch, rows ordered by contributor worker id.
      Tensor big({b * k, cols}, prec);
      for (int i = 0; i < k; ++i) paste_rows(big, per_worker[i], i * b);
      out.push_back(std::move(big));
      break;
    }
    case Scheme::B: {
      // Turn j replicates worker j's batch.
      for (int i = 0; i < k; ++i) out.push_back(per_worker[i]);
      break;
    }
    case Scheme::C: {
      if (b % k != 0) {
        throw ConfigError("scheme C: batch of " + std::to_string(b) +
                          " rows is not divisible by " + std::to_string(k) +
                          " workers");
      }
      const std::int64_t slice = b / k;
      // Sub-batch j holds every worker's j-th slice, ascending contributor.
      for (int j = 0; j < k; ++j) {
        Tensor sub({b, cols}, prec);
        for (int i = 0; i < k; ++i) {
          Tensor part = slice_rows(per_worker[i], j * slice, (j + 1) * slice);
          paste_rows(sub, part, i * slice);
        }
        out.push_back(std::move(sub));
      }
      break;
    }
  }
  return out;
}

std::vector<SubBatchExchange> exchange_activations(
    Scheme scheme, const std::vector<Tensor>& conv_top) {
  check_worker_matrices(conv_top, "exchange_activations");
  const int k = static_cast<int>(conv_top.size());
  const std::int64_t b = conv_top[0].dim(0);
  const std::int64_t row_bytes =
      conv_top[0].dim(1) *
      static_cast<std::int64_t>(element_size(conv_top[0].precision()));

  std::vector<Tensor> assembled = assemble_rows(scheme, conv_top);
  std::vector<SubBatchExchange> out;
  out.reserve(assembled.size());
  for (std::size_t j = 0; j < assembled.size(); ++j) {
    SubBatchExchange ex;
    ex.assembled = std::move(assembled[j]);
    ex.sent.assign(k, 0);
    if (k > 1) {
      switch (scheme) {
        case Scheme::A:
          // All-to-all: everyone ships its whole batch to K-1 peers.
          for (int i = 0; i < k; ++i) ex.sent[i] = (k - 1) * b * row_bytes;
          break;
        case Scheme::B:
          // Turn j: owner j broadcasts its batch.
          ex.sent[j] = (k - 1) * b * row_bytes;
          break;
        case Scheme::C:
          // Turn j: everyone ships b/K rows to each of K-1 peers.
          for (int i = 0; i < k; ++i) {
            ex.sent[i] = (k - 1) * (b / k) * row_bytes;
          }
          break;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

ReturnedGradients return_gradients(Scheme scheme,
                                   const std::vector<Tensor>& fc_input_grads,
                                   int workers, std::int64_t per_worker_batch) {
  if (fc_input_grads.empty()) {
    throw UsageError("return_gradients: no sub-batch gradients");
  }
  const int k = workers;
  const std::int64_t b = per_worker_batch;
  const std::size_t want_subs =
      scheme == Scheme::A ? 1 : static_cast<std::size_t>(k);
  if (fc_input_grads.size() != want_subs) {
    throw UsageError("return_gradients: expected " +
                     std::to_string(want_subs) + " sub-batch gradients, got " +
                     std::to_string(fc_input_grads.size()));
  }
  const std::int64_t want_rows = scheme == Scheme::A ? k * b : b;
  for (const auto& g : fc_input_grads) {
    if (g.rank() != 2 || g.dim(0) != want_rows) {
      throw DimensionError("return_gradients: sub-batch gradient shape " +
                           shape_string(g.shape()) + ", expected " +
                           std::to_string(want_rows) + " rows");
    }
  }
  if (scheme == Scheme::C && b % k != 0) {
    throw ConfigError("scheme C: batch of " + std::to_string(b) +
                      " rows is not divisible by " + std::to_string(k) +
                      " workers");
  }

  const std::int64_t cols = fc_input_grads[0].dim(1);
  const Precision prec = fc_input_grads[0].precision();
  const std::int64_t row_bytes =
      cols * static_cast<std::int64_t>(element_size(prec));

  ReturnedGradients ret;
  ret.per_worker.reserve(k);
  for (int i = 0; i < k; ++i) {
    ret.per_worker.emplace_back(Tensor({b, cols}, prec));
  }
  ret.sent.assign(fc_input_grads.size(), std::vector<std::int64_t>(k, 0));

  switch (scheme) {
    case Scheme::A: {
      for (int i = 0; i < k; ++i) {
        Tensor own = slice_rows(fc_input_grads[0], i * b, (i + 1) * b);
        paste_rows(ret.per_worker[i], own, 0);
        if (k > 1) ret.sent[0][i] = (k - 1) * b * row_bytes;
      }
      break;
    }
    case Scheme::B: {
      for (int j = 0; j < k; ++j) {
        paste_rows(ret.per_worker[j], fc_input_grads[j], 0);
        for (int i = 0; i < k; ++i) {
          if (i != j) ret.sent[j][i] = b * row_bytes;
        }
      }
      break;
    }
    case Scheme::C: {
      const std::int64_t slice = b / k;
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) {
          Tensor part =
              slice_rows(fc_input_grads[j], i * slice, (i + 1) * slice);
          paste_rows(ret.per_worker[i], part, j * slice);
          if (k > 1) ret.sent[j][i] = (k - 1) * slice * row_bytes;
        }
      }
      break;
    }
  }
  return ret;
}

// --- sync ------------------------------------------------------------------

SyncResult sync_conv_gradients(std::vector<Tensor>& flat_grads,
                               bool skip_broadcast) {
  if (flat_grads.empty()) throw UsageError("sync_conv_gradients: no workers");
  const int k = static_cast<int>(flat_grads.size());
  const auto& first = flat_grads.front();
  for (const auto& g : flat_grads) {
    if (g.shape() != first.shape() || g.precision() != first.precision()) {
      throw DimensionError("sync_conv_gradients: gradient layouts differ");
    }
  }
  const std::int64_t total = first.size();
  const std::int64_t elt =
      static_cast<std::int64_t>(element_size(first.precision()));

  SyncResult res;
  res.sent.assign(k, 0);
  if (k == 1) return res;

  // Steps 1+2: each shard owner accumulates its shard from every worker in
  // ascending worker-id order, then divides by K.
  Tensor mean(first.shape(), first.precision());
  for (int w = 0; w < k; ++w) mean.add(flat_grads[w]);
  mean.scale(1.0 / static_cast<double>(k));

  for (int i = 0; i < k; ++i) {
    const auto [begin, end] = shard_range(total, k, i);
    const std::int64_t shard_bytes = (end - begin) * elt;
    // Worker i sends its local copy of every foreign shard (step 2) and its
    // accumulated own shard to every peer (step 3).
    res.sent[i] = (total * elt - shard_bytes) + (k - 1) * shard_bytes;
    res.bytes_total += res.sent[i];
  }

  if (skip_broadcast) {
    // Owners keep their accumulated shard; foreign shards stay local.
    for (int i = 0; i < k; ++i) {
      const auto [begin, end] = shard_range(total, k, i);
      for (std::int64_t idx = begin; idx < end; ++idx) {
        flat_grads[i].set_value(idx, mean.value_at(idx));
      }
    }
    return res;
  }

  for (int i = 0; i < k; ++i) flat_grads[i] = mean;
  return res;
}

Tensor flatten_conv_grads(const std::vector<ConvParams>& grads) {
  if (grads.empty()) {
    throw UsageError("flatten_conv_grads: empty gradient list");
  }
  const Precision prec = grads[0].kernels.precision();
  std::int64_t total = 0;
  for (const auto& g : grads) total += g.kernels.size() + g.bias.size();
  Tensor flat({total}, prec);
  std::int64_t at = 0;
  for (const auto& g : grads) {
    for (std::int64_t i = 0; i < g.kernels.size(); ++i) {
      flat.set_value(at++, g.kernels.value_at(i));
    }
    for (std::int64_t i = 0; i < g.bias.size(); ++i) {
      flat.set_value(at++, g.bias.value_at(i));
    }
  }
  return flat;
}

void unflatten_conv_grads(const Tensor& flat, std::vector<ConvParams>& grads) {
  std::int64_t at = 0;
  for (auto& g : grads) {
    for (std::int64_t i = 0; i < g.kernels.size(); ++i) {
      g.kernels.set_value(i, flat.value_at(at++));
    }
    for (std::int64_t i = 0; i < g.bias.size(); ++i) {
      g.bias.set_value(i, flat.value_at(at++));
    }
  }
  if (at != flat.size()) {
    throw DimensionError("unflatten_conv_grads: size mismatch");
  }
}

// --- Cluster ----------------------------------------------------------------

namespace {

Tensor slice_vec(const Tensor& v, std::int64_t c0, std::int64_t c1) {
  Tensor out({c1 - c0}, v.precision());
  for (std::int64_t i = c0; i < c1; ++i) out.set_value(i - c0, v.value_at(i));
  return out;
}

void paste_vec(Tensor& dst, const Tensor& src, std::int64_t c0) {
  for (std::int64_t i = 0; i < src.size(); ++i) {
    dst.set_value(c0 + i, src.value_at(i));
  }
}

std::vector<ConvParams> zero_like(const std::vector<ConvParams>& params) {
  std::vector<ConvParams> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({Tensor(p.kernels.shape(), p.kernels.precision()),
                   Tensor(p.bias.shape(), p.bias.precision())});
  }
  return out;
}

std::vector<FcParams> zero_like(const std::vector<FcParams>& params) {
  std::vector<FcParams> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({Tensor(p.weight.shape(), p.weight.precision()),
                   Tensor(p.bias.shape(), p.bias.precision())});
  }
  return out;
}

}  // namespace

Cluster::Cluster(const ModelSpec& spec, const ClusterConfig& config)
    : spec_(spec), config_(config) {
  spec_.validate();
  config_.validate();
  Model master = init_model(spec_, config_.seed, config_.precision);
  const int k = config_.workers;
  workers_.resize(k);
  for (int i = 0; i < k; ++i) {
    WorkerState& w = workers_[i];
    w.worker_id = i;
    w.conv_params = master.conv;
    w.conv_momentum = zero_like(master.conv);
    for (std::size_t l = 0; l < master.fc.size(); ++l) {
      const auto [c0, c1] = shard_range(spec_.fc_layers[l].out_dim, k, i);
      FcParams shard;
      shard.weight = slice_cols(master.fc[l].weight, c0, c1);
      shard.bias = slice_vec(master.fc[l].bias, c0, c1);
      w.fc_shard.push_back(std::move(shard));
    }
    w.fc_momentum = zero_like(w.fc_shard);
  }
}

Model Cluster::gathered_model() const {
  Model m;
  m.spec = spec_;
  m.precision = config_.precision;
  m.rng_seed = config_.seed;
  m.conv = workers_[0].conv_params;
  const int k = config_.workers;
  for (std::size_t l = 0; l < spec_.fc_layers.size(); ++l) {
    const auto& layer = spec_.fc_layers[l];
    FcParams full;
    full.weight = Tensor({layer.in_dim, layer.out_dim}, config_.precision);
    full.bias = Tensor({layer.out_dim}, config_.precision);
    for (int i = 0; i < k; ++i) {
      const auto [c0, c1] = shard_range(layer.out_dim, k, i);
      paste_cols(full.weight, workers_[i].fc_shard[l].weight, c0);
      paste_vec(full.bias, workers_[i].fc_shard[l].bias, c0);
    }
    m.fc.push_back(std::move(full));
  }
  return m;
}

Cluster::StepResult Cluster::run_step(std::span<const Tensor> batches,
                                      std::span<const Tensor> targets,
                                      const HyperParams& hp, double lr) {
  const int k = config_.workers;
  const std::int64_t b = config_.per_worker_batch;
  if (static_cast<int>(batches.size()) != k ||
      static_cast<int>(targets.size()) != k) {
    throw UsageError("run_step: expected " + std::to_string(k) +
                     " batches and targets, got " +
                     std::to_string(batches.size()) + " / " +
                     std::to_string(targets.size()));
  }
  for (int i = 0; i < k; ++i) {
    if (batches[i].dim(0) != b || targets[i].dim(0) != b) {
      throw UsageError("run_step: worker " + std::to_string(i) +
                       " batch must hold exactly " + std::to_string(b) +
                       " examples");
    }
  }
  const std::int64_t elt =
      static_cast<std::int64_t>(element_size(config_.precision));
  const std::int64_t row_bytes = spec_.flattened_conv_size() * elt;
  const bool variable = config_.variable_batch;
  const double fc_lr = variable ? hp.fc_partial_lr.value_or(lr) : lr;
  const std::size_t num_fc = spec_.fc_layers.size();

  StepResult result;
  auto charge = [&](int worker, MsgClass cls, std::int64_t sent,
                    std::int64_t received) {
    workers_[worker].bytes.sent[static_cast<int>(cls)] += sent;
    workers_[worker].bytes.received[static_cast<int>(cls)] += received;
    result.metrics.bytes_sent[static_cast<int>(cls)] += sent;
  };

  // Data-parallel conv forward on each worker's own batch.
  std::vector<ActivationCache> caches;
  caches.reserve(k);
  for (int i = 0; i < k; ++i) {
    caches.push_back(conv_forward(spec_, workers_[i].conv_params, batches[i]));
  }

  // Boundary exchange of flattened last-stage conv activations; targets are
  // routed with the same row assembly.
  std::vector<Tensor> conv_top;
  conv_top.reserve(k);
  for (int i = 0; i < k; ++i) conv_top.push_back(caches[i].flat);
  std::vector<SubBatchExchange> exchange =
      exchange_activations(config_.scheme, conv_top);
  std::vector<Tensor> sub_targets;
  {
    std::vector<Tensor> t(targets.begin(), targets.end());
    sub_targets = assemble_rows(config_.scheme, t);
  }

  const int num_sub = static_cast<int>(exchange.size());
  std::vector<std::vector<FcParams>> fc_accum;  // [worker][layer], uniform mode
  if (!variable) {
    fc_accum.reserve(k);
    for (int i = 0; i < k; ++i) {
      fc_accum.push_back(zero_like(workers_[i].fc_shard));
    }
  }

  std::vector<TraceEvent> fc_fwd_events;
  std::vector<Tensor> boundary_grads;  // one per sub-batch
  boundary_grads.reserve(num_sub);
  double loss_weighted = 0.0;

  for (int j = 0; j < num_sub; ++j) {
    const Tensor& assembled = exchange[j].assembled;
    const std::int64_t n = assembled.dim(0);

    // Byte accounting for the activation exchange of turn j.
    {
      std::int64_t total = 0, max_sender = 0;
      for (int i = 0; i < k; ++i) {
        std::int64_t inbound = 0;
        if (k > 1) {
          inbound = config_.scheme == Scheme::B
                        ? (i == j ? 0 : b * row_bytes)
                        : exchange[j].sent[i];  // symmetric schemes
        }
        charge(i, MsgClass::kFcActivations, exchange[j].sent[i], inbound);
        total += exchange[j].sent[i];
        max_sender = std::max(max_sender, exchange[j].sent[i]);
      }
      fc_fwd_events.push_back({Phase::kFcFwd, j,
                               config_.scheme == Scheme::B ? j : -1, total,
                               max_sender});
    }

    // Model-parallel fc forward: every worker computes its column shard of
    // each layer for the whole sub-batch; partial activations are
    // all-gathered before the next layer (and after the last, so the loss
    // and its gradient are known everywhere).
    std::vector<Tensor> layer_inputs;
    std::vector<std::vector<Tensor>> pre_shards(num_fc);  // [layer][worker]
    Tensor x = assembled;
    for (std::size_t l = 0; l < num_fc; ++l) {
      const auto& layer = spec_.fc_layers[l];
      layer_inputs.push_back(x);
      Tensor gathered({n, layer.out_dim}, config_.precision);
      for (int i = 0; i < k; ++i) {
        const auto [c0, c1] = shard_range(layer.out_dim, k, i);
        Tensor z = fc_affine(x, workers_[i].fc_shard[l].weight,
                             workers_[i].fc_shard[l].bias);
        Tensor act = layer.relu ? relu(z) : z;
        pre_shards[l].push_back(std::move(z));
        paste_cols(gathered, act, c0);
        const std::int64_t shard_bytes = n * (c1 - c0) * elt;
        charge(i, MsgClass::kFcInternal, (k - 1) * shard_bytes,
               n * (layer.out_dim - (c1 - c0)) * elt);
      }
      x = std::move(gathered);
    }

    XentResult xent = logistic_xent(x, sub_targets[j]);
    loss_weighted += xent.loss * static_cast<double>(n);

    // Backward through the fc stack. Each layer's input gradient is the sum
    // of per-shard partials, accumulated in ascending worker-id order; above
    // the first layer that reduction is internal traffic, at the first layer
    // the partials travel with the boundary gradient return below.
    Tensor grad = std::move(xent.grad_logits);
    std::vector<std::vector<FcParams>> pass_grads(k);
    for (int i = 0; i < k; ++i) pass_grads[i].resize(num_fc);
    for (std::size_t li = num_fc; li-- > 0;) {
      const auto& layer = spec_.fc_layers[li];
      Tensor dx({n, layer.in_dim}, config_.precision);
      for (int i = 0; i < k; ++i) {
        const auto [c0, c1] = shard_range(layer.out_dim, k, i);
        Tensor dz = slice_cols(grad, c0, c1);
        if (layer.relu) dz = relu_backward(pre_shards[li][i], dz);
        pass_grads[i][li].weight = matmul_tn(layer_inputs[li], dz);
        pass_grads[i][li].bias = column_sums(dz);
        Tensor partial = matmul_nt(dz, workers_[i].fc_shard[li].weight);
        dx.add(partial);
        if (li > 0) {
          const std::int64_t part_bytes = n * layer.in_dim * elt;
          charge(i, MsgClass::kFcInternal, (k - 1) * part_bytes,
                 (k - 1) * part_bytes);
        }
      }
      grad = std::move(dx);
    }
    boundary_grads.push_back(std::move(grad));

    if (variable) {
      // Per-sub-batch fc update: this pass's mean gradient, full momentum
      // and decay, at the configured partial-update rate.
      for (int i = 0; i < k; ++i) {
        for (std::size_t l = 0; l < num_fc; ++l) {
          momentum_update(workers_[i].fc_shard[l].weight,
                          workers_[i].fc_momentum[l].weight,
                          pass_grads[i][l].weight, fc_lr, hp.momentum,
                          hp.weight_decay);
          momentum_update(workers_[i].fc_shard[l].bias,
                          workers_[i].fc_momentum[l].bias,
                          pass_grads[i][l].bias, fc_lr, hp.momentum,
                          hp.weight_decay);
        }
      }
      result.metrics.fc_update_count += 1;
    } else {
      for (int i = 0; i < k; ++i) {
        for (std::size_t l = 0; l < num_fc; ++l) {
          fc_accum[i][l].weight.add(pass_grads[i][l].weight);
          fc_accum[i][l].bias.add(pass_grads[i][l].bias);
        }
      }
    }
  }

  // Boundary gradient return: inverse routing, byte mirror of the exchange.
  ReturnedGradients returned =
      return_gradients(config_.scheme, boundary_grads, k, b);
  std::vector<TraceEvent> fc_bwd_events;
  for (std::size_t j = 0; j < returned.sent.size(); ++j) {
    std::int64_t total = 0, max_sender = 0;
    for (int i = 0; i < k; ++i) {
      const std::int64_t sent = returned.sent[j][i];
      std::int64_t received = sent;
      if (config_.scheme == Scheme::B) {
        received = i == static_cast<int>(j) && k > 1 ? (k - 1) * b * row_bytes
                                                     : 0;
      }
      charge(i, MsgClass::kFcGradients, sent, received);
      total += sent;
      max_sender = std::max(max_sender, sent);
    }
    fc_bwd_events.push_back({Phase::kFcBwd, static_cast<int>(j),
                             config_.scheme == Scheme::B ? static_cast<int>(j)
                                                         : -1,
                             total, max_sender});
  }

  // Assemble the phase-ordered trace: conv_fwd, then fc_fwd/fc_bwd per
  // sub-batch, then conv_bwd and sync.
  result.trace.events.push_back({Phase::kConvFwd, -1, -1, 0, 0});
  for (int j = 0; j < num_sub; ++j) {
    result.trace.events.push_back(fc_fwd_events[j]);
    result.trace.events.push_back(fc_bwd_events[j]);
  }

  // Conv backward on each worker's own examples. Under scheme A the
  // boundary gradients carry the 1/(K*b) scale of the big assembled batch;
  // scale by K so each worker holds the mean over its own b examples before
  // the cross-worker mean in the sync.
  std::vector<std::vector<ConvParams>> conv_grads(k);
  for (int i = 0; i < k; ++i) {
    Tensor own = std::move(returned.per_worker[i]);
    if (config_.scheme == Scheme::A && k > 1) {
      own.scale(static_cast<double>(k));
    }
    conv_grads[i] = conv_backward_from_flat(spec_, workers_[i].conv_params,
                                            caches[i], own);
  }
  result.trace.events.push_back({Phase::kConvBwd, -1, -1, 0, 0});

  // Three-step gradient sync; every worker ends with the bit-identical mean
  // conv gradient (unless the testing hook skips the broadcast).
  std::vector<Tensor> flat;
  flat.reserve(k);
  for (int i = 0; i < k; ++i) {
    flat.push_back(flatten_conv_grads(conv_grads[i]));
  }
  SyncResult sync = sync_conv_gradients(flat, skip_sync_broadcast_);
  {
    std::int64_t max_sender = 0;
    for (int i = 0; i < k; ++i) {
      charge(i, MsgClass::kConvSync, sync.sent[i], sync.sent[i]);
      max_sender = std::max(max_sender, sync.sent[i]);
    }
    result.trace.events.push_back(
        {Phase::kSync, -1, -1, sync.bytes_total, max_sender});
  }
  for (int i = 0; i < k; ++i) unflatten_conv_grads(flat[i], conv_grads[i]);

  // Updates. Conv parameters update once per step on every worker; fc
  // shards either already updated per sub-batch (variable) or once with the
  // mean over all K*b examples (uniform).
  if (!variable) {
    const double inv_subs = 1.0 / static_cast<double>(num_sub);
    for (int i = 0; i < k; ++i) {
      for (std::size_t l = 0; l < num_fc; ++l) {
        fc_accum[i][l].weight.scale(inv_subs);
        fc_accum[i][l].bias.scale(inv_subs);
        momentum_update(workers_[i].fc_shard[l].weight,
                        workers_[i].fc_momentum[l].weight,
                        fc_accum[i][l].weight, lr, hp.momentum,
                        hp.weight_decay);
        momentum_update(workers_[i].fc_shard[l].bias,
                        workers_[i].fc_momentum[l].bias, fc_accum[i][l].bias,
                        lr, hp.momentum, hp.weight_decay);
      }
    }
    result.metrics.fc_update_count = 1;
  }
  for (int i = 0; i < k; ++i) {
    for (std::size_t l = 0; l < workers_[i].conv_params.size(); ++l) {
      momentum_update(workers_[i].conv_params[l].kernels,
                      workers_[i].conv_momentum[l].kernels,
                      conv_grads[i][l].kernels, lr, hp.momentum,
                      hp.weight_decay);
      momentum_update(workers_[i].conv_params[l].bias,
                      workers_[i].conv_momentum[l].bias,
                      conv_grads[i][l].bias, lr, hp.momentum,
                      hp.weight_decay);
    }
  }
  result.metrics.conv_update_count = 1;
  result.metrics.loss = loss_weighted / static_cast<double>(k * b);
  return result;
}

}  // namespace hpsim
