#include "hetsgd/cluster.hpp"

#include <algorithm>

namespace hetsgd {

Real sample_batch_time(const WorkerProfile& profile, RngStream& rng) {
  profile.validate();
  const Real jitter = rng.uniform(0.0, profile.dynamic_range);
  return profile.base_batch_time * (1.0 + profile.static_factor) * (1.0 + jitter);
}

Real sync_duration(const CommModel& comm, Eigen::Index n) {
  comm.validate();
  require(n >= 1, "sync_duration: n must be >= 1");
  return comm.alpha + comm.beta * static_cast<Real>(n);
}

BatchTrace run_compute_until_sync(const WorkerProfile& profile, Real sync_done_at, Real start,
                                  RngStream& rng, int max_batches) {
  require(sync_done_at >= start, "run_compute_until_sync: sync_done_at < start");
  require(max_batches >= 1, "run_compute_until_sync: max_batches must be >= 1");
  BatchTrace trace;
  Real t = start;
  do {
    t += sample_batch_time(profile, rng);
    trace.completion_times.push_back(t);
  } while (t < sync_done_at && trace.batches() < max_batches);
  return trace;
}

Real iteration_span(const std::vector<BatchTrace>& traces, Real sync_done_at) {
  require(!traces.empty(), "iteration_span: no traces");
  Real end = sync_done_at;
  for (const auto& tr : traces) {
    require(tr.batches() >= 1, "iteration_span: trace with no batches");
    end = std::max(end, tr.completion_times.back());
  }
  return end;
}

std::vector<WorkerProfile> cluster_preset(const std::string& name, Real base_batch_time,
                                          int workers) {
  require(workers >= 1, "cluster_preset: workers must be >= 1");
  std::vector<WorkerProfile> out;
  if (name == "static-1234") {
    require(workers == 4, "cluster_preset: static-1234 defines exactly 4 workers");
    for (int i = 0; i < 4; ++i)
      out.push_back({base_batch_time, static_cast<Real>(i), 0.0});
  } else if (name == "dynamic-50") {
    for (int i = 0; i < workers; ++i) out.push_back({base_batch_time, 0.0, 0.5});
  } else if (name == "both") {
    require(workers == 4, "cluster_preset: both defines exactly 4 workers");
    for (int i = 0; i < 4; ++i)
      out.push_back({base_batch_time, static_cast<Real>(i), 0.5});
  } else if (name == "homogeneous") {
    for (int i = 0; i < workers; ++i) out.push_back({base_batch_time, 0.0, 0.0});
  } else {
    throw std::invalid_argument("unknown cluster preset: " + name);
  }
  return out;
}

}  // namespace hetsgd
