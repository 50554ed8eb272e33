#pragma once

// Experiment harness: turns a config into a seeded policy run with
// per-iteration telemetry, convergence timing, CSV output, and — for the
// adaptive policy — the convergence-bound report.

#include "hetsgd/config.hpp"
#include "hetsgd/policy.hpp"
#include "hetsgd/theory.hpp"

#include <string>
#include <vector>

namespace hetsgd {

struct RunSummary {
  std::string policy;
  long iterations = 0;
  bool converged = false;
  Real convergence_time = 0.0;       // sim seconds; valid when converged
  long convergence_iteration = -1;
  Real final_loss = 0.0;
  Real final_holdout_accuracy = -1.0;  // -1 when no held-out split
  long observed_k = 0;                 // max total_batch / M_r over the run
  Real total_sim_time = 0.0;
  std::string theory_report;  // flat key-value block; nonempty for abs
};

struct RunResult {
  std::vector<IterationRecord> records;  // cadence-filtered
  RunSummary summary;
  int workers = 0;
};

RunResult run_experiment(const ExperimentConfig& cfg);

struct ComparisonResult {
  std::string table;  // csv text: policy,converged,time,speedup
  std::vector<RunResult> runs;
};

// Runs each config and tabulates convergence times and speedups relative
// to the first config (row time / first time; "n/a" when either side did
// not converge). Configs must agree on model, dataset, seed, and
// convergence criterion.
ComparisonResult compare_policies(const std::vector<ExperimentConfig>& cfgs);

// Header `t,sim_time,total_batch,train_loss,grad_norm_sq,k_1..k_N`, one
// row per record, %.17g reals (round-trip exact), '.' decimal point.
void emit_csv(const std::vector<IterationRecord>& records, int workers, const std::string& path);

std::vector<IterationRecord> read_csv(const std::string& path);

std::string format_summary(const RunSummary& summary);

// Pure-formula consistency checks over the canonical parameter grid; no
// simulation. `ok` is false iff some feasible grid point violates the
// closed-form bound.
struct GridReport {
  std::string text;
  bool ok = true;
  int feasibility_counterexamples = 0;
};

GridReport theory_grid_report(const ExperimentConfig& cfg);

}  // namespace hetsgd
