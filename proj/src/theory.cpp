#include "hetsgd/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace hetsgd {

void TrajectoryStats::validate() const {
  require(!gammas.empty(), "TrajectoryStats: empty trajectory");
  require(gammas.size() == batch_sizes.size() &&
              gammas.size() == grad_norm_sq.size(),
          "TrajectoryStats: field lengths disagree");
  for (std::size_t t = 0; t < gammas.size(); ++t) {
    require(gammas[t] > 0.0, "TrajectoryStats: nonpositive step size");
    require(batch_sizes[t] >= 1, "TrajectoryStats: batch size < 1");
    require(grad_norm_sq[t] >= 0.0, "TrajectoryStats: negative squared norm");
  }
}

bool check_lr_condition(Real gamma, Real lipschitz, Eigen::Index batch) {
  require(gamma >= 0.0 && lipschitz > 0.0 && batch >= 1,
          "check_lr_condition: gamma >= 0, L > 0, batch >= 1 required");
  const Real m = static_cast<Real>(batch);
  return gamma * gamma * lipschitz * m * m + lipschitz * gamma * m <= 1.0;
}

Real recommended_gamma(const TheoryParams& p) {
  p.validate();
  const Real kmr = static_cast<Real>(p.k_envelope) *
                   static_cast<Real>(p.reference_batch);
  return std::sqrt(p.f1_minus_fstar /
                   (kmr * p.lipschitz * static_cast<Real>(p.iterations) *
                    p.sigma_sq));
}

long min_iterations(const TheoryParams& p) {
  p.validate();
  const Real kmr = static_cast<Real>(p.k_envelope) *
                   static_cast<Real>(p.reference_batch);
  const Real raw = p.f1_minus_fstar * kmr / (9.0 * p.sigma_sq * p.lipschitz);
  return std::max(1L, static_cast<long>(std::ceil(raw)));
}

Real ergodic_criterion(const TrajectoryStats& stats) {
  stats.validate();
  Real num = 0.0;
  Real den = 0.0;
  for (std::size_t t = 0; t < stats.length(); ++t) {
    num += stats.gammas[t] * stats.grad_norm_sq[t];
    den += stats.gammas[t];
  }
  return num / den;
}

Real convergence_bound(const TheoryParams& p, const std::vector<Real>& gammas) {
  p.validate();
  require(!gammas.empty(), "convergence_bound: empty step-size sequence");
  const Real kmr = static_cast<Real>(p.k_envelope) *
                   static_cast<Real>(p.reference_batch);
  Real num = 0.0;
  Real den = 0.0;
  for (const Real g : gammas) {
    require(g > 0.0, "convergence_bound: nonpositive step size");
    require(check_lr_condition(g, p.lipschitz, p.k_envelope * p.reference_batch),
            "convergence_bound: step size violates the feasibility condition");
    num += kmr * g * g * g * p.lipschitz * p.sigma_sq +
           p.lipschitz * g * g * p.sigma_sq;
    den += g;
  }
  num += 2.0 * p.f1_minus_fstar / kmr;
  return num / den;
}

BoundReport verify_bound(const TrajectoryStats& run, const TheoryParams& p) {
  run.validate();
  p.validate();
  // The guarantee is stated for the raw gradient-sum update; the
  // implemented update normalizes by the consumed batch, so the
  // analysis-side step of iteration t is gamma_t / M_t.
  std::vector<Real> effective(run.length());
  TrajectoryStats eff = run;
  for (std::size_t t = 0; t < run.length(); ++t) {
    effective[t] = run.gammas[t] / static_cast<Real>(run.batch_sizes[t]);
    eff.gammas[t] = effective[t];
  }
  BoundReport report;
  report.k_envelope = p.k_envelope;
  report.criterion = ergodic_criterion(eff);
  report.bound = convergence_bound(p, effective);
  report.satisfied = report.criterion <= report.bound;
  return report;
}

std::vector<GridCheck> theory_grid_checks(const std::vector<TheoryParams>& grid) {
  std::vector<GridCheck> out;
  out.reserve(grid.size());
  for (const TheoryParams& base : grid) {
    base.validate();
    GridCheck check;
    check.params = base;
    check.gamma = recommended_gamma(base);
    const Real kmr = static_cast<Real>(base.k_envelope) *
                     static_cast<Real>(base.reference_batch);
    check.closed_form =
        6.0 * std::sqrt(base.sigma_sq) *
        std::sqrt(base.f1_minus_fstar * base.lipschitz /
                  (static_cast<Real>(base.iterations) * kmr));
    check.meets_min_iterations = base.iterations >= min_iterations(base);
    check.lr_feasible = check_lr_condition(
        check.gamma, base.lipschitz, base.k_envelope * base.reference_batch);
    if (check.lr_feasible) {
      const std::vector<Real> gammas(static_cast<std::size_t>(base.iterations),
                                     check.gamma);
      check.bound = convergence_bound(base, gammas);
      check.bound_within_closed_form =
          check.meets_min_iterations &&
          check.bound <= check.closed_form + 1e-9;
    }
    out.push_back(check);
  }
  return out;
}

std::vector<TheoryParams> default_theory_grid(long workers, Eigen::Index reference_batch) {
  require(workers >= 1 && reference_batch >= 1,
          "default_theory_grid: workers and reference_batch must be >= 1");
  TheoryParams base;
  base.lipschitz = 1.0;
  base.sigma_sq = 1.0;
  base.f1_minus_fstar = 1.0;
  base.workers = workers;
  base.k_envelope = workers;
  base.reference_batch = reference_batch;
  base.gamma = 0.01;  // placeholder; grid checks use recommended_gamma

  std::vector<TheoryParams> grid(10, base);
  grid[1].lipschitz = 0.25;
  grid[2].lipschitz = 4.0;
  grid[3].sigma_sq = 0.5;
  grid[4].sigma_sq = 2.0;
  grid[5].f1_minus_fstar = 0.5;
  grid[6].f1_minus_fstar = 9.0;
  grid[7].k_envelope = 2 * workers;
  grid[8].reference_batch = 2 * reference_batch;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const long floor_T = (i == 9) ? 4000 : 1000;
    grid[i].iterations = std::max(floor_T, min_iterations(grid[i]));
  }
  return grid;
}

namespace {

std::string fmt_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string format_report(const BoundReport& report, const TheoryParams& p) {
  std::ostringstream os;
  os << "theory.lipschitz = " << fmt_real(p.lipschitz) << "\n";
  os << "theory.sigma_sq = " << fmt_real(p.sigma_sq) << "\n";
  os << "theory.f1_minus_fstar = " << fmt_real(p.f1_minus_fstar) << "\n";
  os << "theory.k_envelope = " << report.k_envelope << "\n";
  os << "theory.reference_batch = " << p.reference_batch << "\n";
  os << "theory.iterations = " << p.iterations << "\n";
  os << "theory.recommended_gamma = " << fmt_real(recommended_gamma(p)) << "\n";
  os << "theory.min_iterations = " << min_iterations(p) << "\n";
  os << "theory.criterion = " << fmt_real(report.criterion) << "\n";
  os << "theory.bound = " << fmt_real(report.bound) << "\n";
  os << "theory.satisfied = " << (report.satisfied ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace hetsgd
