#pragma once

// The five training policies: delayed synchronous SGD with adaptive batch
// size (abs) and the baselines bsp, dbs, asp, ssp. Policies are
// deterministic state machines driven by the simulated cluster clock; a
// whole run is a pure function of (config, seed).

#include "hetsgd/cluster.hpp"
#include "hetsgd/core.hpp"
#include "hetsgd/model.hpp"

#include <limits>
#include <vector>

namespace hetsgd {

struct HyperParams {
  Eigen::Index reference_batch = 32;  // M_r
  Real gamma = 0.01;                  // learning rate
  Real lambda = 0.5;                  // compensation coefficient
  long iterations = 1000;             // T
  long staleness = 10;                // s (ssp)
  int k_max = 64;                     // per-worker cap on reference batches

  void validate() const {
    require(reference_batch >= 1, "HyperParams: reference_batch must be >= 1");
    require(gamma > 0.0, "HyperParams: gamma must be > 0");
    require(lambda >= 0.0, "HyperParams: lambda must be >= 0");
    require(iterations >= 1, "HyperParams: iterations must be >= 1");
    require(staleness >= 0, "HyperParams: staleness must be >= 0");
    require(k_max >= 1, "HyperParams: k_max must be >= 1");
  }
};

// A worker's accumulated unnormalized gradient sum and batch size for one
// iteration, stamped with a checksum of the parameters it was evaluated
// at (the delay-one audit trail).
struct GradientBundle {
  ParamVector grad_sum;
  Eigen::Index batch_size = 0;
  std::uint64_t eval_checksum = 0;
};

// One global iteration's telemetry. Metrics are evaluated on the full
// dataset at the parameters produced by the iteration; this costs no
// simulated time. worker_batches holds per-worker reference-batch counts
// (dbs rounds its fractional allocations to the nearest count).
struct IterationRecord {
  long t = 0;
  Real sim_time = 0.0;
  Eigen::Index total_batch = 0;
  Real train_loss = 0.0;
  Real grad_norm_sq = 0.0;
  std::vector<long> worker_batches;
};

// Sum of bundle gradient sums divided by the total batch size.
ParamVector weighted_average(const std::vector<GradientBundle>& bundles);

// Taylor-style delayed-gradient correction:
// g + lambda * g .* g .* (x_t - x_prev).
ParamVector compensate(const ParamVector& g_prev, const ParamVector& x_t,
                       const ParamVector& x_prev, Real lambda);

// ----------------------------------------------------------------------
// abs: delayed synchronous SGD with adaptive batch size

struct AbsState {
  ParamVector params;       // current parameters
  ParamVector prev_params;  // previous iteration's parameters
  std::vector<GradientBundle> pending;  // computed last iteration, consumed now
  long t = 0;
  long observed_k = 0;       // max over iterations of total_batch / M_r
  bool delay_one_ok = true;  // every consumed bundle matched prev_params
};

AbsState abs_init(const ParamVector& x0, int workers, Eigen::Index dim);

// One global iteration: workers compute reference batches at the current
// parameters until the synchronization of last iteration's gradients
// finishes; the synchronized delayed average is compensated and applied.
IterationRecord abs_sgd_iteration(AbsState& state, ClusterState& cluster, const Model& model,
                                  const Dataset& data, const HyperParams& hp,
                                  std::vector<RngStream>& sampling);

// ----------------------------------------------------------------------
// bsp: bulk synchronous baseline

struct BspState {
  ParamVector params;
  long t = 0;
};

IterationRecord bsp_iteration(BspState& state, ClusterState& cluster, const Model& model,
                              const Dataset& data, const HyperParams& hp,
                              std::vector<RngStream>& sampling);

// ----------------------------------------------------------------------
// dbs: synchronous with throughput-proportional batch reallocation

struct DbsState {
  ParamVector params;
  long t = 0;
  long epoch_len = 10;
  std::vector<Eigen::Index> batches;  // current allocation, sums to N * M_r
  std::vector<Real> epoch_time;       // per-worker compute seconds this epoch
  std::vector<Eigen::Index> epoch_samples;
};

// Batch sizes proportional to throughput, each >= 1, summing exactly to
// total_batch (largest-remainder rounding, ties to lower worker id).
std::vector<Eigen::Index> dbs_reallocate(const std::vector<Real>& throughputs,
                                         Eigen::Index total_batch);

DbsState dbs_init(const ParamVector& x0, int workers, const HyperParams& hp, long epoch_len);

IterationRecord dbs_iteration(DbsState& state, ClusterState& cluster, const Model& model,
                              const Dataset& data, const HyperParams& hp,
                              std::vector<RngStream>& sampling);

// ----------------------------------------------------------------------
// asp / ssp: asynchronous updates on a shared event clock

struct AsyncWorker {
  ParamVector snapshot;   // parameters pulled when the cycle started
  Real next_time = 0.0;   // completion time of the running cycle
  long counter = 0;       // completed updates
  bool running = false;   // has a scheduled completion event
};

struct AsyncState {
  ParamVector params;
  std::vector<AsyncWorker> workers;
  long updates = 0;
  long max_lead_seen = 0;  // max counter lead over the minimum at any grant
};

// Schedules every worker's first compute cycle at the current clock.
AsyncState async_init(const ParamVector& x0, ClusterState& cluster);

// Worker whose completion event fires next (ties to lower id).
int next_async_worker(const AsyncState& state);

// Applies `worker`'s gradient (computed at its pull-time snapshot) to the
// current parameters, then reschedules. asp never blocks; ssp defers a
// worker whose counter lead over the minimum exceeds the threshold until
// the minimum advances.
IterationRecord asp_step(AsyncState& state, int worker, ClusterState& cluster, const Model& model,
                         const Dataset& data, const HyperParams& hp,
                         std::vector<RngStream>& sampling);

IterationRecord ssp_step(AsyncState& state, int worker, ClusterState& cluster, const Model& model,
                         const Dataset& data, const HyperParams& hp,
                         std::vector<RngStream>& sampling);

}  // namespace hetsgd
