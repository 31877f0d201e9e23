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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hpsim/model.hpp"
#include "hpsim/optimizer.hpp"
#include "hpsim/tensor.hpp"

namespace hpsim {

/// How the last-stage conv activations move from the data-parallel conv
/// stack into the model-parallel fully-connected stack:
///   A - every worker sends its whole batch to every other worker; one big
///       assembled batch of K*b examples, one fc pass.
///   B - workers take turns broadcasting their batch; K fc passes of b
///       examples each.
///   C - every worker scatters b/K examples to each peer per turn; K fc
///       passes of b examples, each assembled from all workers.
enum class Scheme { A, B, C };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

enum class MsgClass : int {
  kFcActivations = 0,  // boundary exchange, conv -> fc
  kFcGradients = 1,    // boundary return, fc -> conv
  kFcInternal = 2,     // all-gather / partial-reduction inside the fc stack
  kConvSync = 3,       // conv gradient synchronization
};
inline constexpr int kNumMsgClasses = 4;

struct ByteCounters {
  std::array<std::int64_t, kNumMsgClasses> sent{};
  std::array<std::int64_t, kNumMsgClasses> received{};

  std::int64_t sent_for(MsgClass c) const { return sent[static_cast<int>(c)]; }
  std::int64_t received_for(MsgClass c) const {
    return received[static_cast<int>(c)];
  }
};

struct ClusterConfig {
  int workers = 1;                      // K
  std::int64_t per_worker_batch = 128;  // b
  Scheme scheme = Scheme::B;
  bool variable_batch = false;
  Precision precision = Precision::kDouble;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Contiguous partition of `total` into `parts` slices; the last slice
/// absorbs the remainder. Returns {begin, end} of slice `idx`.
std::pair<std::int64_t, std::int64_t> shard_range(std::int64_t total,
                                                  int parts, int idx);

/// One worker: a full replica of the conv parameters and a column shard of
/// every fc layer (worker i owns columns shard_range(out_dim, K, i)).
struct WorkerState {
  int worker_id = 0;
  std::vector<ConvParams> conv_params;
  std::vector<ConvParams> conv_momentum;
  std::vector<FcParams> fc_shard;
  std::vector<FcParams> fc_momentum;
  ByteCounters bytes;
};

enum class Phase { kConvFwd, kFcFwd, kFcBwd, kConvBwd, kSync };

const char* to_string(Phase p);

/// One schedule phase of a step. For fc phases, `bytes_total` /
/// `bytes_max_sender` account the boundary traffic (activation exchange on
/// fc_fwd, gradient return on fc_bwd) across the cluster; `worker` is the
/// broadcasting owner under scheme B, -1 when the phase involves all
/// workers symmetrically.
struct TraceEvent {
  Phase phase = Phase::kConvFwd;
  int sub_batch = -1;
  int worker = -1;
  std::int64_t bytes_total = 0;
  std::int64_t bytes_max_sender = 0;
};

struct StepTrace {
  std::vector<TraceEvent> events;

  int count(Phase p) const;
  /// conv_fwd + fc_fwd + fc_bwd + conv_bwd events (sync excluded).
  int pass_count() const;
};

struct StepMetrics {
  double loss = 0.0;
  int fc_update_count = 0;
  int conv_update_count = 0;
  /// Cluster-wide bytes sent during this step, per message class.
  std::array<std::int64_t, kNumMsgClasses> bytes_sent{};
};

// --- Standalone exchange/return/sync operations -------------------------

struct SubBatchExchange {
  Tensor assembled;                // n x A, rows ordered by contributor id
  std::vector<std::int64_t> sent;  // bytes sent by each worker
};

/// Assembles the fc input sub-batches from each worker's flattened
/// last-stage conv activations (one b x A matrix per worker). Scheme A
/// yields a single K*b-row sub-batch; schemes B and C yield K sub-batches
/// of b rows. Sub-batch j under scheme B is worker j's batch; under scheme
/// C it is slice j of every worker's batch, ordered by contributor id.
std::vector<SubBatchExchange> exchange_activations(
    Scheme scheme, const std::vector<Tensor>& conv_top);

/// Row assembly of exchange_activations without byte accounting; used to
/// route targets along with their examples.
std::vector<Tensor> assemble_rows(Scheme scheme,
                                  const std::vector<Tensor>& per_worker);

struct ReturnedGradients {
  /// K matrices of b x A: each worker's own examples' conv-top gradients,
  /// in that worker's original example order.
  std::vector<Tensor> per_worker;
  /// sent[j][i]: bytes worker i sends while sub-batch j's gradients return.
  std::vector<std::vector<std::int64_t>> sent;
};

/// Exact inverse routing of exchange_activations: slices each assembled
/// sub-batch's input gradient back to the workers whose examples they are.
/// Byte counters mirror the forward exchange.
ReturnedGradients return_gradients(Scheme scheme,
                                   const std::vector<Tensor>& fc_input_grads,
                                   int workers, std::int64_t per_worker_batch);

struct SyncResult {
  std::vector<std::int64_t> sent;  // per worker
  std::int64_t bytes_total = 0;
};

/// Three-step conv gradient synchronization over flattened gradients:
/// worker i owns shard_range(G, K, i); every worker sends each foreign
/// shard of its local gradient to that shard's owner, owners accumulate in
/// ascending worker-id order and divide by K, then broadcast the result.
/// On return every tensor holds the bit-identical mean over workers.
/// With equal shards each worker sends 2*(K-1)*G_bytes/K.
/// skip_broadcast drops step 3 (testing hook; leaves workers inconsistent).
SyncResult sync_conv_gradients(std::vector<Tensor>& flat_grads,
                               bool skip_broadcast = false);

// --- The cluster ---------------------------------------------------------

/// K simulated workers executing hybrid-parallel synchronous SGD steps:
/// data-parallel conv stack, model-parallel fc stack, scheme-driven
/// activation exchange and gradient return, conv gradient sync, and
/// momentum updates in uniform or variable batch mode. The executor is a
/// single-threaded reference schedule: every cross-worker reduction
/// accumulates in ascending worker-id order, so results are
/// bit-reproducible and conv replicas stay bit-identical.
class Cluster {
 public:
  Cluster(const ModelSpec& spec, const ClusterConfig& config);

  struct StepResult {
    StepMetrics metrics;
    StepTrace trace;
  };

  /// One training step over K disjoint batches of per_worker_batch examples
  /// (batches[i] and targets[i] belong to worker i). `lr` is the effective
  /// learning rate for this step (after any schedule).
  StepResult run_step(std::span<const Tensor> batches,
                      std::span<const Tensor> targets, const HyperParams& hp,
                      double lr);

  int workers() const { return config_.workers; }
  const ClusterConfig& config() const { return config_; }
  const ModelSpec& spec() const { return spec_; }
  const WorkerState& worker(int i) const { return workers_.at(i); }

  /// Single-model view: worker 0's conv replica plus the union of all fc
  /// shards pasted back into whole weight matrices.
  Model gathered_model() const;

  /// Testing hook: skip the broadcast step of the gradient sync, leaving
  /// conv replicas inconsistent.
  void set_skip_sync_broadcast(bool v) { skip_sync_broadcast_ = v; }

 private:
  ModelSpec spec_;
  ClusterConfig config_;
  std::vector<WorkerState> workers_;
  bool skip_sync_broadcast_ = false;
};

// --- Helpers shared with the reference path ------------------------------

/// Concatenate conv parameter gradients (kernels then bias, layer order)
/// into one flat vector, and scatter back.
Tensor flatten_conv_grads(const std::vector<ConvParams>& grads);
void unflatten_conv_grads(const Tensor& flat, std::vector<ConvParams>& grads);

}  // namespace hpsim
