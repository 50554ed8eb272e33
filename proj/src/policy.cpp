#include "hetsgd/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hetsgd {

namespace {

IterationRecord make_record(long t, Real sim_time, Eigen::Index total_batch,
                            std::vector<long> worker_batches, const Model& model,
                            const ParamVector& params, const Dataset& data) {
  IterationRecord rec;
  rec.t = t;
  rec.sim_time = sim_time;
  rec.total_batch = total_batch;
  rec.worker_batches = std::move(worker_batches);
  rec.train_loss = full_loss(model, params, data);
  rec.grad_norm_sq = full_gradient(model, params, data).squaredNorm();
  return rec;
}

}  // namespace

ParamVector weighted_average(const std::vector<GradientBundle>& bundles) {
  require(!bundles.empty(), "weighted_average: no bundles");
  Eigen::Index total = 0;
  for (const auto& b : bundles) total += b.batch_size;
  require(total >= 1, "weighted_average: zero total batch size");
  ParamVector sum = ParamVector::Zero(bundles.front().grad_sum.size());
  for (const auto& b : bundles) {
    require_same_dim(sum, b.grad_sum, "weighted_average");
    sum += b.grad_sum;
  }
  return sum / static_cast<Real>(total);
}

ParamVector compensate(const ParamVector& g_prev, const ParamVector& x_t,
                       const ParamVector& x_prev, Real lambda) {
  require_same_dim(g_prev, x_t, "compensate");
  require_same_dim(x_t, x_prev, "compensate");
  return g_prev + lambda * g_prev.cwiseProduct(g_prev).cwiseProduct(x_t - x_prev);
}

// ----------------------------------------------------------------------
// abs

AbsState abs_init(const ParamVector& x0, int workers, Eigen::Index dim) {
  require(workers >= 1, "abs_init: need at least one worker");
  AbsState st;
  st.params = x0;
  st.prev_params = x0;
  st.pending.resize(static_cast<std::size_t>(workers));
  for (auto& b : st.pending) {
    b.grad_sum = ParamVector::Zero(dim);
    b.batch_size = 0;  // nothing yet to synchronize
  }
  return st;
}

IterationRecord abs_sgd_iteration(AbsState& state, ClusterState& cluster, const Model& model,
                                  const Dataset& data, const HyperParams& hp,
                                  std::vector<RngStream>& sampling) {
  hp.validate();
  const int n_workers = cluster.workers();
  require(static_cast<int>(sampling.size()) == n_workers,
          "abs_sgd_iteration: one sampling stream per worker required");

  const Real start = cluster.clock;
  const Real sync_done = start + sync_duration(cluster.comm, model.param_count());

  // Compute phase: every worker accumulates reference batches at the
  // current parameters until the synchronization completes.
  const std::uint64_t here = param_checksum(state.params);
  std::vector<BatchTrace> traces;
  std::vector<GradientBundle> fresh(static_cast<std::size_t>(n_workers));
  std::vector<long> ks(static_cast<std::size_t>(n_workers));
  Eigen::Index total_batch = 0;
  for (int w = 0; w < n_workers; ++w) {
    BatchTrace tr = run_compute_until_sync(cluster.profiles[static_cast<std::size_t>(w)],
                                           sync_done, start, cluster.timing[static_cast<std::size_t>(w)],
                                           hp.k_max);
    tr.worker = w;
    tr.iteration = state.t;
    const Eigen::Index batch = static_cast<Eigen::Index>(tr.batches()) * hp.reference_batch;
    const SampleBatch samples = draw_batch(sampling[static_cast<std::size_t>(w)], batch, data.size());
    fresh[static_cast<std::size_t>(w)] = {grad_sum(model, state.params, samples, data), batch, here};
    ks[static_cast<std::size_t>(w)] = tr.batches();
    total_batch += batch;
    traces.push_back(std::move(tr));
  }

  // Synchronization phase: weighted average of the delayed bundles. The
  // very first iteration has nothing pending and performs a null update.
  Eigen::Index pending_total = 0;
  for (const auto& b : state.pending) pending_total += b.batch_size;
  ParamVector delayed_avg;
  if (pending_total == 0) {
    require(state.t == 0, "abs_sgd_iteration: empty bundles after the first iteration");
    delayed_avg = ParamVector::Zero(state.params.size());
  } else {
    const std::uint64_t expected = param_checksum(state.prev_params);
    for (const auto& b : state.pending)
      if (b.eval_checksum != expected) state.delay_one_ok = false;
    delayed_avg = weighted_average(state.pending);
  }

  const ParamVector corrected =
      compensate(delayed_avg, state.params, state.prev_params, hp.lambda);
  ParamVector next = axpy(-hp.gamma, corrected, state.params);

  state.prev_params = std::move(state.params);
  state.params = std::move(next);
  state.pending = std::move(fresh);
  state.observed_k = std::max(state.observed_k,
                              static_cast<long>(total_batch / hp.reference_batch));
  cluster.clock = iteration_span(traces, sync_done);
  const long t = state.t++;
  return make_record(t, cluster.clock, total_batch, std::move(ks), model, state.params, data);
}

// ----------------------------------------------------------------------
// bsp

IterationRecord bsp_iteration(BspState& state, ClusterState& cluster, const Model& model,
                              const Dataset& data, const HyperParams& hp,
                              std::vector<RngStream>& sampling) {
  hp.validate();
  const int n_workers = cluster.workers();
  require(static_cast<int>(sampling.size()) == n_workers,
          "bsp_iteration: one sampling stream per worker required");

  Real compute_end = 0.0;
  ParamVector sum = ParamVector::Zero(state.params.size());
  for (int w = 0; w < n_workers; ++w) {
    compute_end = std::max(compute_end,
                           sample_batch_time(cluster.profiles[static_cast<std::size_t>(w)],
                                             cluster.timing[static_cast<std::size_t>(w)]));
    const SampleBatch samples =
        draw_batch(sampling[static_cast<std::size_t>(w)], hp.reference_batch, data.size());
    sum += grad_sum(model, state.params, samples, data);
  }
  const Eigen::Index total_batch = static_cast<Eigen::Index>(n_workers) * hp.reference_batch;
  state.params -= hp.gamma / static_cast<Real>(total_batch) * sum;
  cluster.clock += compute_end + sync_duration(cluster.comm, model.param_count());

  const long t = state.t++;
  return make_record(t, cluster.clock, total_batch,
                     std::vector<long>(static_cast<std::size_t>(n_workers), 1), model,
                     state.params, data);
}

// ----------------------------------------------------------------------
// dbs

std::vector<Eigen::Index> dbs_reallocate(const std::vector<Real>& throughputs,
                                         Eigen::Index total_batch) {
  const auto n = static_cast<Eigen::Index>(throughputs.size());
  require(n >= 1, "dbs_reallocate: no workers");
  require(total_batch >= n, "dbs_reallocate: total batch smaller than worker count");
  Real sum_thr = 0.0;
  for (Real thr : throughputs) {
    require(thr > 0.0, "dbs_reallocate: throughputs must be positive");
    sum_thr += thr;
  }

  std::vector<Eigen::Index> alloc(static_cast<std::size_t>(n));
  std::vector<Real> frac(static_cast<std::size_t>(n));
  Eigen::Index assigned = 0;
  for (std::size_t i = 0; i < throughputs.size(); ++i) {
    const Real share = static_cast<Real>(total_batch) * throughputs[i] / sum_thr;
    alloc[i] = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(share)));
    frac[i] = share - std::floor(share);
    assigned += alloc[i];
  }
  // Largest-remainder rounding; ties and the floor>=1 correction both
  // resolve toward lower worker ids for determinism.
  while (assigned < total_batch) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < frac.size(); ++i)
      if (frac[i] > frac[best]) best = i;
    alloc[best] += 1;
    frac[best] = -1.0;
    ++assigned;
  }
  while (assigned > total_batch) {
    std::size_t biggest = 0;
    for (std::size_t i = 1; i < alloc.size(); ++i)
      if (alloc[i] > alloc[biggest]) biggest = i;
    require(alloc[biggest] > 1, "dbs_reallocate: cannot shrink below 1 per worker");
    alloc[biggest] -= 1;
    --assigned;
  }
  return alloc;
}

DbsState dbs_init(const ParamVector& x0, int workers, const HyperParams& hp, long epoch_len) {
  require(workers >= 1, "dbs_init: need at least one worker");
  require(epoch_len >= 1, "dbs_init: epoch_len must be >= 1");
  DbsState st;
  st.params = x0;
  st.epoch_len = epoch_len;
  st.batches.assign(static_cast<std::size_t>(workers), hp.reference_batch);
  st.epoch_time.assign(static_cast<std::size_t>(workers), 0.0);
  st.epoch_samples.assign(static_cast<std::size_t>(workers), 0);
  return st;
}

IterationRecord dbs_iteration(DbsState& state, ClusterState& cluster, const Model& model,
                              const Dataset& data, const HyperParams& hp,
                              std::vector<RngStream>& sampling) {
  hp.validate();
  const int n_workers = cluster.workers();
  require(static_cast<int>(sampling.size()) == n_workers,
          "dbs_iteration: one sampling stream per worker required");
  require(static_cast<int>(state.batches.size()) == n_workers,
          "dbs_iteration: allocation size mismatch");

  Real compute_end = 0.0;
  Eigen::Index total_batch = 0;
  ParamVector sum = ParamVector::Zero(state.params.size());
  std::vector<long> ks(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    const auto wi = static_cast<std::size_t>(w);
    const Eigen::Index batch = state.batches[wi];
    const Real unit = sample_batch_time(cluster.profiles[wi], cluster.timing[wi]);
    const Real compute = unit * static_cast<Real>(batch) / static_cast<Real>(hp.reference_batch);
    compute_end = std::max(compute_end, compute);
    const SampleBatch samples = draw_batch(sampling[wi], batch, data.size());
    sum += grad_sum(model, state.params, samples, data);
    state.epoch_time[wi] += compute;
    state.epoch_samples[wi] += batch;
    total_batch += batch;
    ks[wi] = std::lround(static_cast<Real>(batch) / static_cast<Real>(hp.reference_batch));
  }
  state.params -= hp.gamma / static_cast<Real>(total_batch) * sum;
  cluster.clock += compute_end + sync_duration(cluster.comm, model.param_count());

  const long t = state.t++;
  // Epoch boundary: measure samples-per-second and reallocate next epoch.
  if ((t + 1) % state.epoch_len == 0) {
    std::vector<Real> throughput(static_cast<std::size_t>(n_workers));
    for (std::size_t i = 0; i < throughput.size(); ++i)
      throughput[i] = static_cast<Real>(state.epoch_samples[i]) / state.epoch_time[i];
    state.batches = dbs_reallocate(throughput, static_cast<Eigen::Index>(n_workers) * hp.reference_batch);
    std::fill(state.epoch_time.begin(), state.epoch_time.end(), 0.0);
    std::fill(state.epoch_samples.begin(), state.epoch_samples.end(), 0);
  }
  return make_record(t, cluster.clock, total_batch, std::move(ks), model, state.params, data);
}

// ----------------------------------------------------------------------
// asp / ssp

namespace {

long min_counter(const AsyncState& state) {
  long m = state.workers.front().counter;
  for (const auto& w : state.workers) m = std::min(m, w.counter);
  return m;
}

// Starts a compute cycle for `worker` at time `now`: pull the current
// parameters and schedule the completion event.
void grant_cycle(AsyncState& state, int worker, Real now, ClusterState& cluster) {
  auto& w = state.workers[static_cast<std::size_t>(worker)];
  const long lead = w.counter - min_counter(state);
  state.max_lead_seen = std::max(state.max_lead_seen, lead);
  w.snapshot = state.params;
  w.next_time = now + sample_batch_time(cluster.profiles[static_cast<std::size_t>(worker)],
                                        cluster.timing[static_cast<std::size_t>(worker)]) +
                sync_duration(cluster.comm, state.params.size());
  w.running = true;
}

IterationRecord async_step(AsyncState& state, int worker, ClusterState& cluster,
                           const Model& model, const Dataset& data, const HyperParams& hp,
                           std::vector<RngStream>& sampling, bool bounded) {
  hp.validate();
  const int n_workers = cluster.workers();
  require(worker >= 0 && worker < n_workers, "async_step: bad worker id");
  auto& w = state.workers[static_cast<std::size_t>(worker)];
  require(w.running, "async_step: worker has no completed event");

  const Real now = w.next_time;
  require(now >= cluster.clock, "async_step: event in the past");
  cluster.clock = now;
  w.running = false;

  // Gradient computed at the pull-time snapshot, applied to the current
  // parameters; staleness is whatever the interleaving produced.
  const SampleBatch samples =
      draw_batch(sampling[static_cast<std::size_t>(worker)], hp.reference_batch, data.size());
  const ParamVector g = grad_sum(model, w.snapshot, samples, data);
  state.params -= hp.gamma / static_cast<Real>(hp.reference_batch) * g;
  w.counter += 1;
  state.updates += 1;

  // Scheduling decisions: every idle worker whose counter lead over the
  // minimum is within the threshold starts its next cycle now.
  const long min_c = min_counter(state);
  for (int j = 0; j < n_workers; ++j) {
    auto& cand = state.workers[static_cast<std::size_t>(j)];
    if (cand.running) continue;
    if (bounded && cand.counter - min_c > hp.staleness) continue;
    grant_cycle(state, j, now, cluster);
  }

  std::vector<long> ks(static_cast<std::size_t>(n_workers), 0);
  ks[static_cast<std::size_t>(worker)] = 1;
  return make_record(state.updates - 1, now, hp.reference_batch, std::move(ks), model,
                     state.params, data);
}

}  // namespace

AsyncState async_init(const ParamVector& x0, ClusterState& cluster) {
  AsyncState st;
  st.params = x0;
  st.workers.resize(static_cast<std::size_t>(cluster.workers()));
  for (int w = 0; w < cluster.workers(); ++w) grant_cycle(st, w, cluster.clock, cluster);
  return st;
}

int next_async_worker(const AsyncState& state) {
  int best = -1;
  for (int w = 0; w < static_cast<int>(state.workers.size()); ++w) {
    const auto& cand = state.workers[static_cast<std::size_t>(w)];
    if (!cand.running) continue;
    if (best < 0 || cand.next_time < state.workers[static_cast<std::size_t>(best)].next_time)
      best = w;
  }
  require(best >= 0, "next_async_worker: no runnable worker (deadlock)");
  return best;
}

IterationRecord asp_step(AsyncState& state, int worker, ClusterState& cluster, const Model& model,
                         const Dataset& data, const HyperParams& hp,
                         std::vector<RngStream>& sampling) {
  return async_step(state, worker, cluster, model, data, hp, sampling, /*bounded=*/false);
}

IterationRecord ssp_step(AsyncState& state, int worker, ClusterState& cluster, const Model& model,
                         const Dataset& data, const HyperParams& hp,
                         std::vector<RngStream>& sampling) {
  return async_step(state, worker, cluster, model, data, hp, sampling, /*bounded=*/true);
}

}  // namespace hetsgd
