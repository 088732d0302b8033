#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lineagelab/banded.hpp"
#include "lineagelab/equilibrium.hpp"
#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/operators.hpp"
#include "lineagelab/parallel.hpp"

namespace lineagelab {

// ---------------------------------------------------------------------------
// Dual eigenfunction.
// ---------------------------------------------------------------------------

struct DualSolution {
  Field phi;               // normalized so int F phi = 1
  double residual = 0.0;   // sup |L* phi| / sup phi
  double normalization = 1.0;
  double lambda = 0.0;     // eigenvalue of the transposed problem
};

inline DualSolution solve_dual_phi(const EquilibriumSolution& eq, double tol = 1e-10,
                                   std::size_t max_iter = 20000) {
  const OperatorContext ctx = context_for(eq);
  const BandedMatrix Mt = generator_matrix(ctx, eq.mode, -eq.params.c);
  std::vector<double> guess(eq.F.size());
  for (std::size_t i = 0; i < guess.size(); ++i) guess[i] = eq.F[eq.F.size() - 1 - i];
  Eigenpair ep = principal_eigenpair(Mt, guess, std::min(tol, 1e-11), max_iter);

  DualSolution d;
  d.lambda = ep.lambda;
  d.phi = Field(eq.F.grid, std::move(ep.vector));
  d.phi *= 1.0 / integrate(pointwise_product(eq.F, d.phi));
  d.normalization = integrate(pointwise_product(eq.F, d.phi));
  d.residual = apply_L_star(ctx, d.phi, eq.mode).max_abs() / d.phi.max_abs();
  if (!d.phi.all_finite() || d.residual > tol) {
    throw Error(ErrorKind::NoConvergence, "dual eigenfunction did not converge");
  }
  return d;
}

/// p[v0] = int v0 phi (with int F phi = 1).
inline double asymptotic_proportion(const DualSolution& dual, const Field& v0) {
  return integrate(pointwise_product(v0, dual.phi));
}

// ---------------------------------------------------------------------------
// Fractions: explicit RK4 under L.
// ---------------------------------------------------------------------------

struct FractionState {
  double t = 0.0;
  Field v;
  std::string label;
};

/// Matrix of L (or L*) for repeated application.
inline BandedMatrix fraction_operator(const EquilibriumSolution& eq, bool dual = false) {
  const OperatorContext ctx = context_for(eq);
  BandedMatrix m = generator_matrix(ctx, eq.mode, dual ? -eq.params.c : eq.params.c);
  m.add_diagonal(-(eq.params.beta - eq.mu_bar));
  return m;
}

/// Largest dt for which 1 + dt * diag(L) >= 0 on every row; explicit steps
/// within it are monotone and stay inside the RK4 stability region.
inline double stability_bound(const BandedMatrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) worst = std::max(worst, -m.at(i, i));
  return worst > 0.0 ? 1.0 / worst : INFINITY;
}

inline double fraction_stability_bound(const EquilibriumSolution& eq) {
  return stability_bound(fraction_operator(eq));
}

/// Classical RK4 stepping of dv/dt = A v.
class Rk4Stepper {
 public:
  explicit Rk4Stepper(const BandedMatrix& a) : a_(a), k1_(a.size()), k2_(a.size()), k3_(a.size()),
                                               k4_(a.size()), tmp_(a.size()) {}

  void step(std::vector<double>& v, double dt) {
    const std::size_t n = v.size();
    a_.multiply(v, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + 0.5 * dt * k1_[i];
    a_.multiply(tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + 0.5 * dt * k2_[i];
    a_.multiply(tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + dt * k3_[i];
    a_.multiply(tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
  }

  /// Advance by `span` in equal steps no longer than dt.
  void advance(std::vector<double>& v, double span, double dt) {
    if (span <= 0.0) return;
    const auto steps = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
    const double h = span / static_cast<double>(std::max<std::size_t>(steps, 1));
    for (std::size_t k = 0; k < std::max<std::size_t>(steps, 1); ++k) step(v, h);
  }

 private:
  const BandedMatrix& a_;
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

namespace detail {

inline std::vector<double> snapshot_times(double t_end, const std::vector<double>& requested) {
  std::vector<double> ts{0.0};
  for (double t : requested) {
    if (t > 0.0 && t < t_end) ts.push_back(t);
  }
  ts.push_back(t_end);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

inline double checked_dt(const BandedMatrix& op, double dt) {
  const double bound = stability_bound(op);
  if (dt <= 0.0) return 0.9 * bound;
  if (dt > bound * (1.0 + 1e-12)) {
    throw Error(ErrorKind::StabilityViolation,
                "time step " + std::to_string(dt) + " exceeds the stability bound " + std::to_string(bound));
  }
  return dt;
}

}  // namespace detail

/// Snapshots at t = 0, every requested time inside (0, t_end), and t_end.
/// dt <= 0 selects 0.9 of the stability bound.
inline std::vector<FractionState> evolve_fraction(const EquilibriumSolution& eq, const Field& v0, double t_end,
                                                  double dt = 0.0, const std::vector<double>& snapshots = {},
                                                  const std::string& label = "") {
  const BandedMatrix op = fraction_operator(eq);
  dt = detail::checked_dt(op, dt);
  Rk4Stepper rk(op);
  std::vector<double> v = v0.values;
  std::vector<FractionState> out;
  double t = 0.0;
  for (double ts : detail::snapshot_times(t_end, snapshots)) {
    rk.advance(v, ts - t, dt);
    t = ts;
    out.push_back({t, Field(v0.grid, v), label});
  }
  return out;
}

/// The dynasty of trait y: mass F(y) in the single column at y (height F(y)/dz).
inline Field dirac_fraction(const EquilibriumSolution& eq, double y, double floor = kDefaultPositivityFloor) {
  const std::size_t i = eq.F.grid.index_of(y);
  if (!(eq.F[i] >= floor * eq.F.max_abs()) || !(eq.F[i] > 0.0)) {
    throw Error(ErrorKind::DegenerateWeight, "F(y) is below the positivity floor");
  }
  Field v(eq.F.grid);
  v[i] = eq.F[i] / eq.F.grid.dz();
  return v;
}

inline std::vector<FractionState> evolve_dirac_fraction(const EquilibriumSolution& eq, double y, double t_end,
                                                        double dt = 0.0,
                                                        const std::vector<double>& snapshots = {}) {
  return evolve_fraction(eq, dirac_fraction(eq, y), t_end, dt, snapshots, "y=" + std::to_string(y));
}

/// Evolves several fractions side by side; each gets its own worker.
inline std::vector<std::vector<FractionState>> evolve_fractions(const EquilibriumSolution& eq,
                                                                const std::vector<Field>& v0s, double t_end,
                                                                double dt = 0.0,
                                                                const std::vector<double>& snapshots = {},
                                                                const std::vector<std::string>& labels = {}) {
  std::vector<std::vector<FractionState>> out(v0s.size());
  parallel_for(v0s.size(), [&](std::size_t k) {
    out[k] = evolve_fraction(eq, v0s[k], t_end, dt, snapshots, k < labels.size() ? labels[k] : std::to_string(k));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Long-time behaviour.
// ---------------------------------------------------------------------------

struct AsymptoticRun {
  double t_end = 0.0;
  double proportion = 0.0;
  Field v;                        // fraction at t_end
  double relative_defect = 0.0;   // ||v/p - F||_1 / ||F||_1
  std::vector<double> times;      // unit-spaced monitor times
  std::vector<double> defects;    // ||v - p F||_1 at those times
  double fitted_rate = 0.0;       // log-linear decay rate over the monitored run
};

/// Marches in unit-time blocks until the L1 defect ||v - p F||_1 decreases by
/// less than 1% over one unit of time, drops below floor * p ||F||_1, or
/// t_max is reached.
inline AsymptoticRun run_to_asymptote(const EquilibriumSolution& eq, const DualSolution& dual, const Field& v0,
                                      double t_max = 500.0, double dt = 0.0, double floor = 1e-9) {
  const BandedMatrix op = fraction_operator(eq);
  dt = detail::checked_dt(op, dt);
  Rk4Stepper rk(op);
  AsymptoticRun run;
  run.proportion = asymptotic_proportion(dual, v0);
  const double p = run.proportion;
  const double norm_F = l1_norm(eq.F);
  std::vector<double> v = v0.values;
  auto defect = [&] {
    double acc = 0.0;
    Field d(eq.F.grid);
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = std::abs(v[i] - p * eq.F[i]);
    acc = integrate(d);
    return acc;
  };
  double t = 0.0;
  double prev = defect();
  run.times.push_back(0.0);
  run.defects.push_back(prev);
  while (t < t_max) {
    rk.advance(v, 1.0, dt);
    t += 1.0;
    const double d = defect();
    run.times.push_back(t);
    run.defects.push_back(d);
    const bool small = d <= floor * std::abs(p) * norm_F;
    const bool stalled = d > (1.0 - 0.01) * prev;
    prev = d;
    if (small || stalled) break;
  }
  run.t_end = t;
  run.v = Field(eq.F.grid, v);
  run.relative_defect = p != 0.0 ? prev / (std::abs(p) * norm_F) : INFINITY;
  if (run.defects.size() >= 3) {
    const std::size_t a = run.defects.size() / 2;
    const std::size_t b = run.defects.size() - 1;
    if (run.defects[a] > 0.0 && run.defects[b] > 0.0) {
      run.fitted_rate = std::log(run.defects[a] / run.defects[b]) / (run.times[b] - run.times[a]);
    }
  }
  return run;
}

}  // namespace lineagelab
