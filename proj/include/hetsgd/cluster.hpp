#pragma once

// Deterministic discrete-event model of a heterogeneous N-worker cluster.
// Per-reference-batch compute times carry a static prolongation factor
// (hardware gap) and a per-batch uniform jitter (resource contention);
// synchronization cost is a latency + per-parameter bandwidth model.

#include "hetsgd/core.hpp"

#include <string>
#include <vector>

namespace hetsgd {

// Timing model of one worker. Effective per-reference-batch time is
// base_batch_time * (1 + static_factor) * (1 + U[0, dynamic_range)).
struct WorkerProfile {
  Real base_batch_time = 0.1;  // seconds per reference batch
  Real static_factor = 0.0;    // e.g. 3.0 = +300%
  Real dynamic_range = 0.0;    // upper bound of uniform fractional jitter

  void validate() const {
    require(base_batch_time > 0.0, "WorkerProfile: base_batch_time must be > 0");
    require(static_factor >= 0.0, "WorkerProfile: static_factor must be >= 0");
    require(dynamic_range >= 0.0, "WorkerProfile: dynamic_range must be >= 0");
  }
};

// Synchronization-duration model: D = alpha + beta * n.
struct CommModel {
  Real alpha = 0.0;  // seconds (latency)
  Real beta = 0.0;   // seconds per parameter

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0, "CommModel: alpha and beta must be >= 0");
    require(alpha > 0.0 || beta > 0.0, "CommModel: alpha and beta cannot both be 0");
  }
};

// One worker's compute record for one iteration.
struct BatchTrace {
  int worker = 0;
  long iteration = 0;
  std::vector<Real> completion_times;  // strictly increasing, absolute
  int batches() const { return static_cast<int>(completion_times.size()); }
};

// Cluster of N workers plus the global simulated clock (non-decreasing)
// and one timing stream per worker.
struct ClusterState {
  std::vector<WorkerProfile> profiles;
  CommModel comm;
  Real clock = 0.0;
  std::vector<RngStream> timing;

  ClusterState(std::vector<WorkerProfile> profs, CommModel comm_model, std::uint64_t seed)
      : profiles(std::move(profs)), comm(comm_model) {
    require(!profiles.empty(), "ClusterState: need at least one worker");
    comm.validate();
    for (const auto& p : profiles) p.validate();
    for (int i = 0; i < static_cast<int>(profiles.size()); ++i)
      timing.emplace_back(seed, stream_id::worker_timing(i));
  }

  int workers() const { return static_cast<int>(profiles.size()); }
};

// One jittered reference-batch duration. Always consumes exactly one
// uniform draw so stream positions do not depend on the jitter setting.
Real sample_batch_time(const WorkerProfile& profile, RngStream& rng);

// Synchronization duration for an n-parameter model.
Real sync_duration(const CommModel& comm, Eigen::Index n);

// Compute reference batches from `start` until the first completion at or
// after `sync_done_at` (a batch finishing exactly then counts as "sync
// finished" and is included). At least one batch is always computed;
// `max_batches` caps the count so an unluckily long sync cannot produce
// unbounded batches.
BatchTrace run_compute_until_sync(const WorkerProfile& profile, Real sync_done_at, Real start,
                                  RngStream& rng, int max_batches = 64);

// Instant the iteration ends: all workers done computing and the
// synchronization finished. Becomes the next iteration's start clock.
Real iteration_span(const std::vector<BatchTrace>& traces, Real sync_done_at);

// Named cluster presets: "static-1234" (factors 0,1,2,3), "dynamic-50"
// (jitter range 0.5), "both" (factors 0,1,2,3 with range 0.5).
std::vector<WorkerProfile> cluster_preset(const std::string& name, Real base_batch_time,
                                          int workers = 4);

}  // namespace hetsgd
