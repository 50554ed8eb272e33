#pragma once

// Flat key-value experiment configuration: one `key = value` pair per
// line, `#` comments, unknown keys rejected. No nesting, so any language
// can parse it with a dozen lines of string handling.

#include "hetsgd/cluster.hpp"
#include "hetsgd/core.hpp"
#include "hetsgd/model.hpp"
#include "hetsgd/policy.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace hetsgd {

struct ExperimentConfig {
  std::string policy;  // abs | bsp | dbs | asp | ssp

  // Cluster: either a named preset or explicit static factors.
  std::string preset;                // static-1234 | dynamic-50 | both | homogeneous
  int workers = 4;
  Real base_batch_time = 0.1;        // seconds per reference batch
  std::vector<Real> static_factors;  // explicit alternative to preset
  Real dynamic_range = 0.0;          // jitter range when no preset is given
  Real comm_alpha = 0.05;            // sync latency (s)
  Real comm_beta = 0.0;              // sync seconds per parameter

  // Objective and data.
  std::string model = "logistic";  // logistic | mlp
  int mlp_hidden = 8;
  int dim = 10;
  long dataset_size = 2000;
  Real noise = 0.05;          // label flip probability
  Real feature_scale = 1.0;
  std::string dataset_csv;    // load instead of generating when nonempty

  std::uint64_t seed = 0;

  HyperParams hyper;  // mr, gamma, lambda, iterations, staleness, k_max

  // Convergence measurement. By default convergence means
  // train_loss <= loss_threshold; when accuracy_threshold > 0 it means
  // held-out accuracy >= accuracy_threshold instead.
  Real loss_threshold = std::numeric_limits<Real>::infinity();
  Real holdout_fraction = 0.0;
  Real accuracy_threshold = 0.0;  // 0 disables the accuracy criterion
  long cadence = 1;               // record every cadence-th iteration

  long dbs_epoch_len = 10;

  // Estimator budgets for the theory report.
  long fstar_iters = 100000;
  long sigma_probes = 2000;
  long lipschitz_probes = 200;
  Real lipschitz_radius = 2.0;

  // Keys present in the source text; drives conflict detection.
  std::set<std::string> explicit_keys;

  bool has(const std::string& key) const { return explicit_keys.count(key) != 0; }

  void validate() const;
  std::vector<WorkerProfile> build_profiles() const;
  CommModel build_comm() const { return CommModel{comm_alpha, comm_beta}; }
  Model build_model(int data_dim) const;

  // Fingerprint of the fields that must match across a comparison:
  // objective, data source, seed, and convergence criterion.
  std::string comparison_key() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace hetsgd
