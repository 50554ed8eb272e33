#pragma once

// Analysis-side formulas for the delayed synchronous algorithm:
// learning-rate feasibility, the ergodic convergence criterion and its
// bound, the constant-rate closed form, and the iteration threshold.
// verify_bound evaluates them against an empirical trajectory.

#include "hetsgd/core.hpp"

#include <string>
#include <vector>

namespace hetsgd {

// Constants of the analysis. K bounds the per-iteration total batch in
// units of the reference batch (operationally: the max observed).
struct TheoryParams {
  Real lipschitz = 1.0;        // L
  Real sigma_sq = 1.0;         // gradient variance bound
  Real f1_minus_fstar = 1.0;   // initial suboptimality
  long workers = 1;            // N
  long k_envelope = 1;         // K
  Eigen::Index reference_batch = 32;  // M_r
  long iterations = 1;         // T
  Real gamma = 0.01;

  void validate() const {
    require(lipschitz > 0.0 && sigma_sq > 0.0 && f1_minus_fstar > 0.0,
            "TheoryParams: L, sigma_sq, f1_minus_fstar must be > 0");
    require(workers >= 1 && reference_batch >= 1 && iterations >= 1,
            "TheoryParams: N, M_r, T must be >= 1");
    require(k_envelope >= workers, "TheoryParams: K must be >= N");
    require(gamma > 0.0, "TheoryParams: gamma must be > 0");
  }
};

// Per-iteration (step size, batch size, squared gradient norm) triples.
struct TrajectoryStats {
  std::vector<Real> gammas;
  std::vector<Eigen::Index> batch_sizes;
  std::vector<Real> grad_norm_sq;

  void validate() const;
  std::size_t length() const { return gammas.size(); }
};

// gamma^2 L M^2 + L gamma M <= 1.
bool check_lr_condition(Real gamma, Real lipschitz, Eigen::Index batch);

// Constant step size sqrt((f(x1)-f*) / (K M_r L T sigma^2)).
Real recommended_gamma(const TheoryParams& p);

// Iteration threshold ceil((f(x1)-f*) K M_r / (9 sigma^2 L)), at least 1.
long min_iterations(const TheoryParams& p);

// Step-weighted average of squared gradient norms.
Real ergodic_criterion(const TrajectoryStats& stats);

// Right side of the convergence guarantee:
// (sum_t [K M_r gamma_t^3 L sigma^2 + L gamma_t^2 sigma^2]
//   + 2 (f(x1)-f*) / (K M_r)) / sum_t gamma_t.
// Every gamma_t must satisfy the feasibility condition at batch K * M_r.
Real convergence_bound(const TheoryParams& p, const std::vector<Real>& gammas);

struct BoundReport {
  Real criterion = 0.0;
  Real bound = 0.0;
  bool satisfied = false;
  long k_envelope = 0;  // echoes the K used
};

// Compares the empirical criterion of a run against the bound. The
// Lipschitz input is estimated from below, so a violation is reported
// rather than asserted fatally.
BoundReport verify_bound(const TrajectoryStats& run, const TheoryParams& p);

// One grid point of the pure-formula consistency sweep.
struct GridCheck {
  TheoryParams params;
  Real gamma = 0.0;          // recommended_gamma at this point
  Real bound = 0.0;          // convergence_bound with the constant rate
  Real closed_form = 0.0;    // 6 sigma sqrt(delta L / (T K M_r))
  bool meets_min_iterations = false;
  bool bound_within_closed_form = false;  // bound <= closed_form + 1e-9
  bool lr_feasible = false;  // check_lr_condition(gamma, L, K M_r)
};

// Evaluates the closed-form consistency and feasibility-closure checks on
// a parameter grid. Feasibility counterexamples are reported in the
// result, not failed.
std::vector<GridCheck> theory_grid_checks(const std::vector<TheoryParams>& grid);

// Canonical 10-point grid: a base point (L=1, sigma^2=1, delta=1, K=N)
// with one-factor-at-a-time variations of L, sigma^2, delta, K, M_r, and
// T. Every point's T is raised to its own min_iterations when needed.
std::vector<TheoryParams> default_theory_grid(long workers, Eigen::Index reference_batch);

// Flat key-value block for appending to a run's metrics output.
std::string format_report(const BoundReport& report, const TheoryParams& p);

}  // namespace hetsgd
