#include "hetsgd/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

namespace hetsgd {

namespace {

std::string fmt_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_time(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Dataset select_rows(const Dataset& src, const std::vector<Eigen::Index>& rows, std::size_t begin,
                    std::size_t end) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(end - begin), src.dim());
  out.labels.resize(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.features.row(static_cast<Eigen::Index>(i - begin)) = src.features.row(rows[i]);
    out.labels(static_cast<Eigen::Index>(i - begin)) = src.labels(rows[i]);
  }
  return out;
}

// Train set plus optional held-out set, split by a seeded shuffle.
std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg) {
  Dataset full;
  if (!cfg.dataset_csv.empty()) {
    full = dataset_from_csv(cfg.dataset_csv);
  } else {
    RngStream rng(cfg.seed, stream_id::kDataset);
    full = generate_synthetic(cfg.dim, cfg.dataset_size, cfg.noise, rng, cfg.feature_scale).first;
  }
  if (cfg.holdout_fraction <= 0.0) return {std::move(full), Dataset{}};

  const Eigen::Index total = full.size();
  const auto held = static_cast<std::size_t>(
      std::floor(cfg.holdout_fraction * static_cast<Real>(total)));
  require(held >= 1 && static_cast<Eigen::Index>(held) < total,
          "config: holdout split leaves an empty train or holdout set");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(total));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  RngStream rng(cfg.seed, stream_id::kHoldout);
  for (std::size_t i = rows.size() - 1; i > 0; --i)
    std::swap(rows[i], rows[rng.uniform_index(i + 1)]);
  const std::size_t n_train = rows.size() - held;
  return {select_rows(full, rows, 0, n_train), select_rows(full, rows, n_train, rows.size())};
}

long observed_envelope(const std::vector<IterationRecord>& records, Eigen::Index reference_batch) {
  long k = 0;
  for (const auto& r : records)
    k = std::max(k, static_cast<long>((r.total_batch + reference_batch - 1) / reference_batch));
  return k;
}

// f(x*) via long-run full-batch descent from the run's final parameters,
// with the best value over the trajectory kept as the estimate.
Real fstar_oracle(const Model& model, const Dataset& data, const ParamVector& start,
                  Real lipschitz, long iterations) {
  const Real step = 1.0 / lipschitz;
  ParamVector x = start;
  Real best = full_loss(model, x, data);
  for (long i = 0; i < iterations; ++i) {
    x -= step * full_gradient(model, x, data);
    best = std::min(best, full_loss(model, x, data));
  }
  return best;
}

std::string build_theory_report(const ExperimentConfig& cfg, const Model& model,
                                const Dataset& train, const ParamVector& x0,
                                const ParamVector& final_params,
                                const std::vector<IterationRecord>& records, long observed_k) {
  RngStream est(cfg.seed, stream_id::kEstimators);
  const Real lipschitz =
      estimate_lipschitz(model, train, cfg.lipschitz_probes, cfg.lipschitz_radius, est);
  const Real sigma_sq =
      std::max(estimate_sigma_sq(model, x0, train, cfg.sigma_probes, est),
               estimate_sigma_sq(model, final_params, train, cfg.sigma_probes, est));
  const Real fstar = fstar_oracle(model, train, final_params, lipschitz, cfg.fstar_iters);
  // The first iteration performs a null update, so the analysis start
  // point f(x_1) equals the loss at the initial parameters.
  const Real delta = full_loss(model, x0, train) - fstar;

  TheoryParams p;
  p.lipschitz = lipschitz;
  p.sigma_sq = sigma_sq;
  p.f1_minus_fstar = delta;
  p.workers = static_cast<long>(cfg.build_profiles().size());
  p.k_envelope = observed_k;
  p.reference_batch = cfg.hyper.reference_batch;
  p.iterations = cfg.hyper.iterations;
  p.gamma = cfg.hyper.gamma;

  // Record t covers the batch computed during iteration t and the
  // parameters it produced; the update that consumes that batch departs
  // from exactly those parameters. The guarantee is stated for the raw
  // gradient-sum update, so record t contributes the analysis step
  // gamma / M_t (division happens inside verify_bound).
  TrajectoryStats stats;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    stats.gammas.push_back(cfg.hyper.gamma);
    stats.batch_sizes.push_back(records[i].total_batch);
    stats.grad_norm_sq.push_back(records[i].grad_norm_sq);
  }
  const BoundReport report = verify_bound(stats, p);
  return format_report(report, p);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  auto [train, holdout] = build_datasets(cfg);
  const Model model = cfg.build_model(static_cast<int>(train.dim()));
  RngStream init_rng(cfg.seed, stream_id::kParamInit);
  const ParamVector x0 = init_params(model, init_rng);
  ClusterState cluster(cfg.build_profiles(), cfg.build_comm(), cfg.seed);
  std::vector<RngStream> sampling;
  for (int w = 0; w < cluster.workers(); ++w)
    sampling.emplace_back(cfg.seed, stream_id::worker_sampling(w));

  const long total_iters = cfg.hyper.iterations;
  const bool by_accuracy = cfg.accuracy_threshold > 0.0;

  RunSummary summary;
  summary.policy = cfg.policy;
  summary.iterations = total_iters;

  std::vector<IterationRecord> all;
  all.reserve(static_cast<std::size_t>(total_iters));

  auto observe = [&](const IterationRecord& rec, const ParamVector& params) {
    all.push_back(rec);
    if (summary.converged) return;
    const bool hit = by_accuracy
                         ? accuracy(model, params, holdout) >= cfg.accuracy_threshold
                         : rec.train_loss <= cfg.loss_threshold;
    if (hit) {
      summary.converged = true;
      summary.convergence_time = rec.sim_time;
      summary.convergence_iteration = rec.t;
    }
  };

  ParamVector final_params;
  long abs_observed_k = 0;
  if (cfg.policy == "abs") {
    AbsState st = abs_init(x0, cluster.workers(), model.param_count());
    for (long t = 0; t < total_iters; ++t)
      observe(abs_sgd_iteration(st, cluster, model, train, cfg.hyper, sampling), st.params);
    final_params = std::move(st.params);
    abs_observed_k = st.observed_k;
  } else if (cfg.policy == "bsp") {
    BspState st{x0, 0};
    for (long t = 0; t < total_iters; ++t)
      observe(bsp_iteration(st, cluster, model, train, cfg.hyper, sampling), st.params);
    final_params = std::move(st.params);
  } else if (cfg.policy == "dbs") {
    DbsState st = dbs_init(x0, cluster.workers(), cfg.hyper, cfg.dbs_epoch_len);
    for (long t = 0; t < total_iters; ++t)
      observe(dbs_iteration(st, cluster, model, train, cfg.hyper, sampling), st.params);
    final_params = std::move(st.params);
  } else if (cfg.policy == "asp" || cfg.policy == "ssp") {
    AsyncState st = async_init(x0, cluster);
    const bool bounded = cfg.policy == "ssp";
    for (long t = 0; t < total_iters; ++t) {
      const int w = next_async_worker(st);
      observe(bounded ? ssp_step(st, w, cluster, model, train, cfg.hyper, sampling)
                      : asp_step(st, w, cluster, model, train, cfg.hyper, sampling),
              st.params);
    }
    final_params = std::move(st.params);
  } else {
    throw std::invalid_argument("run_experiment: unknown policy '" + cfg.policy + "'");
  }

  summary.final_loss = all.back().train_loss;
  summary.total_sim_time = all.back().sim_time;
  summary.observed_k = (cfg.policy == "abs")
                           ? abs_observed_k
                           : observed_envelope(all, cfg.hyper.reference_batch);
  if (holdout.size() > 0) summary.final_holdout_accuracy = accuracy(model, final_params, holdout);
  if (cfg.policy == "abs" && all.size() >= 2)
    summary.theory_report =
        build_theory_report(cfg, model, train, x0, final_params, all, summary.observed_k);

  RunResult result;
  result.workers = cluster.workers();
  result.summary = std::move(summary);
  for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(cfg.cadence))
    result.records.push_back(std::move(all[i]));
  return result;
}

ComparisonResult compare_policies(const std::vector<ExperimentConfig>& cfgs) {
  require(!cfgs.empty(), "compare: need at least one config");
  const std::string key = cfgs.front().comparison_key();
  for (std::size_t i = 1; i < cfgs.size(); ++i)
    require(cfgs[i].comparison_key() == key,
            "compare: config " + std::to_string(i + 1) +
                " disagrees with config 1 on model/dataset/seed/threshold");

  ComparisonResult out;
  for (const auto& cfg : cfgs) out.runs.push_back(run_experiment(cfg));

  const RunSummary& ref = out.runs.front().summary;
  std::ostringstream os;
  os << "policy,converged,time,speedup\n";
  for (const auto& run : out.runs) {
    const RunSummary& s = run.summary;
    os << s.policy << ',' << (s.converged ? "yes" : "no") << ',';
    if (s.converged) os << fmt_time(s.convergence_time);
    else os << "n/a";
    os << ',';
    if (s.converged && ref.converged) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2fx", s.convergence_time / ref.convergence_time);
      os << buf;
    } else {
      os << "n/a";
    }
    os << "\n";
  }
  out.table = os.str();
  return out;
}

void emit_csv(const std::vector<IterationRecord>& records, int workers, const std::string& path) {
  require(workers >= 1, "emit_csv: workers must be >= 1");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot open '" + path + "' for writing");
  out << "t,sim_time,total_batch,train_loss,grad_norm_sq";
  for (int w = 1; w <= workers; ++w) out << ",k_" << w;
  out << "\n";
  for (const auto& r : records) {
    require(static_cast<int>(r.worker_batches.size()) == workers,
            "emit_csv: record has wrong per-worker count");
    out << r.t << ',' << fmt_real(r.sim_time) << ',' << r.total_batch << ','
        << fmt_real(r.train_loss) << ',' << fmt_real(r.grad_norm_sq);
    for (const long k : r.worker_batches) out << ',' << k;
    out << "\n";
  }
  out.flush();
  if (!out.good()) throw std::runtime_error("csv: write failed for '" + path + "'");
}

std::vector<IterationRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: '" + path + "' is empty");
  const std::string prefix = "t,sim_time,total_batch,train_loss,grad_norm_sq";
  if (line.rfind(prefix, 0) != 0)
    throw std::runtime_error("csv: '" + path + "' has an unrecognized header");
  int workers = 0;
  for (std::size_t pos = prefix.size(); pos < line.size();) {
    const std::string expect = ",k_" + std::to_string(workers + 1);
    if (line.compare(pos, expect.size(), expect) != 0)
      throw std::runtime_error("csv: '" + path + "' has an unrecognized header");
    pos += expect.size();
    ++workers;
  }

  std::vector<IterationRecord> records;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != 5 + workers)
      throw std::runtime_error("csv: '" + path + "' line " + std::to_string(line_no) +
                               " has the wrong number of columns");
    IterationRecord r;
    r.t = std::strtol(cells[0].c_str(), nullptr, 10);
    r.sim_time = std::strtod(cells[1].c_str(), nullptr);
    r.total_batch = std::strtol(cells[2].c_str(), nullptr, 10);
    r.train_loss = std::strtod(cells[3].c_str(), nullptr);
    r.grad_norm_sq = std::strtod(cells[4].c_str(), nullptr);
    for (int w = 0; w < workers; ++w)
      r.worker_batches.push_back(std::strtol(cells[static_cast<std::size_t>(5 + w)].c_str(),
                                             nullptr, 10));
    records.push_back(std::move(r));
  }
  return records;
}

std::string format_summary(const RunSummary& s) {
  std::ostringstream os;
  os << "summary.policy = " << s.policy << "\n";
  os << "summary.iterations = " << s.iterations << "\n";
  os << "summary.converged = " << (s.converged ? "true" : "false") << "\n";
  os << "summary.convergence_time = "
     << (s.converged ? fmt_real(s.convergence_time) : std::string("not reached")) << "\n";
  if (s.converged)
    os << "summary.convergence_iteration = " << s.convergence_iteration << "\n";
  os << "summary.final_loss = " << fmt_real(s.final_loss) << "\n";
  if (s.final_holdout_accuracy >= 0.0)
    os << "summary.final_holdout_accuracy = " << fmt_real(s.final_holdout_accuracy) << "\n";
  os << "summary.observed_k = " << s.observed_k << "\n";
  os << "summary.total_sim_time = " << fmt_real(s.total_sim_time) << "\n";
  if (!s.theory_report.empty()) os << s.theory_report;
  return os.str();
}

GridReport theory_grid_report(const ExperimentConfig& cfg) {
  const auto grid =
      default_theory_grid(static_cast<long>(cfg.build_profiles().size()),
                          cfg.hyper.reference_batch);
  const auto checks = theory_grid_checks(grid);
  GridReport report;
  std::ostringstream os;
  os << "grid.points = " << checks.size() << "\n";
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const GridCheck& c = checks[i];
    const std::string tag = "grid.point" + std::to_string(i + 1);
    os << tag << ".L = " << fmt_real(c.params.lipschitz) << "\n";
    os << tag << ".sigma_sq = " << fmt_real(c.params.sigma_sq) << "\n";
    os << tag << ".delta = " << fmt_real(c.params.f1_minus_fstar) << "\n";
    os << tag << ".K = " << c.params.k_envelope << "\n";
    os << tag << ".mr = " << c.params.reference_batch << "\n";
    os << tag << ".T = " << c.params.iterations << "\n";
    os << tag << ".gamma = " << fmt_real(c.gamma) << "\n";
    os << tag << ".lr_feasible = " << (c.lr_feasible ? "true" : "false") << "\n";
    if (c.lr_feasible) {
      os << tag << ".bound = " << fmt_real(c.bound) << "\n";
      os << tag << ".closed_form = " << fmt_real(c.closed_form) << "\n";
      os << tag << ".within_closed_form = "
         << (c.bound_within_closed_form ? "true" : "false") << "\n";
    }
    if (!c.lr_feasible) ++report.feasibility_counterexamples;
    else if (!c.bound_within_closed_form) report.ok = false;
  }
  os << "grid.feasibility_counterexamples = " << report.feasibility_counterexamples << "\n";
  os << "grid.all_bounds_within_closed_form = " << (report.ok ? "true" : "false") << "\n";
  report.text = os.str();
  return report;
}

}  // namespace hetsgd
