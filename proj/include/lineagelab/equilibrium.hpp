#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <vector>

#include "lineagelab/banded.hpp"
#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/model.hpp"
#include "lineagelab/operators.hpp"

namespace lineagelab {

// ---------------------------------------------------------------------------
// Closed forms for quadratic selection m = alpha z^2 / 2 under the diffusive
// approximation.
// ---------------------------------------------------------------------------

struct GaussianOracle {
  double lambda = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

inline GaussianOracle gaussian_quadratic_oracle(double beta, double sigma, double c, double alpha = 1.0,
                                                double mu0 = 0.0) {
  const double root = std::sqrt(alpha * beta);
  GaussianOracle o;
  o.lambda = beta - mu0 - c * c / (2.0 * beta * sigma * sigma) - 0.5 * sigma * root;
  o.mean = -c / (sigma * root);
  o.variance = sigma * std::sqrt(beta / alpha);
  return o;
}

/// Speed at which the oracle growth rate vanishes; zero when mutation load
/// alone already drives the population extinct.
inline double critical_speed_quadratic(double beta, double sigma, double alpha = 1.0, double mu0 = 0.0) {
  const double inside = 1.0 - mu0 / beta - sigma * std::sqrt(alpha) / (2.0 * std::sqrt(beta));
  if (inside <= 0.0) return 0.0;
  return sigma * beta * std::numbers::sqrt2 * std::sqrt(inside);
}

/// The oracle profile scaled to mass lambda / (beta - mu0).
inline Field gaussian_oracle_field(const Grid& grid, const ModelParams& p) {
  const auto o = gaussian_quadratic_oracle(p.beta, p.sigma, p.c, p.selection.alpha, p.mu0);
  const double mass = o.lambda > 0.0 ? o.lambda / (p.beta - p.mu0) : 1.0;
  const double norm = mass / std::sqrt(2.0 * std::numbers::pi * o.variance);
  return Field::from_function(grid, [&](double z) {
    const double d = z - o.mean;
    return norm * std::exp(-0.5 * d * d / o.variance);
  });
}

// ---------------------------------------------------------------------------
// Matrix form of the linear flow  dg/dt = M g,
//   M g = beta B g + a dg/dz - mu g        (nonlocal)
//   M g = d g'' + a g' + (beta - mu) g     (diffusive)
// with a = c for the primal problem and a = -c for the dual.
// ---------------------------------------------------------------------------

inline BandedMatrix generator_matrix(const OperatorContext& ctx, MutationMode mode, double transport) {
  const std::size_t n = ctx.grid.size();
  const double dz = ctx.grid.dz();
  const double beta = ctx.params.beta;
  if (mode == MutationMode::Nonlocal) {
    const std::size_t r = ctx.stencil.radius;
    const std::size_t band = std::max<std::size_t>(r, 1);
    BandedMatrix m(n, band, band);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = m.col_begin(i); k < m.col_end(i); ++k) {
        const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(i);
        m.at(i, k) = beta * ctx.stencil(off);
      }
      m.at(i, i) -= ctx.mu[i];
      if (transport > 0.0) {
        m.at(i, i) -= transport / dz;
        if (i + 1 < n) m.at(i, i + 1) += transport / dz;
      } else if (transport < 0.0) {
        m.at(i, i) += transport / dz;
        if (i > 0) m.at(i, i - 1) -= transport / dz;
      }
    }
    return m;
  }
  const auto k = detail::diffusive_coefficients(ctx, transport);
  BandedMatrix m(n, 1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    m.at(i, i) = beta - ctx.mu[i] - k.up - k.down;
    if (i + 1 < n) m.at(i, i + 1) = k.up;
    if (i > 0) m.at(i, i - 1) = k.down;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Principal eigenpair of a Metzler band matrix by shifted inverse iteration.
// ---------------------------------------------------------------------------

struct Eigenpair {
  double lambda = 0.0;
  std::vector<double> vector;  // positive, max-normalized
  std::size_t iterations = 0;
};

namespace detail {

inline double normalize_max(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  if (m > 0.0) {
    for (double& x : v) x /= m;
  }
  return m;
}

}  // namespace detail

/// The shift starts above the Gershgorin bound, where (sI - M) is an M-matrix
/// and the iteration converges to the Perron vector. Once the eigenvalue
/// estimate settles, the shift moves close to it to sharpen the contraction.
inline Eigenpair principal_eigenpair(const BandedMatrix& M, std::vector<double> guess, double tol,
                                     std::size_t max_iter) {
  const std::size_t n = M.size();
  const double bound = M.max_row_sum();
  const double scale = 1.0 + std::abs(bound);
  const double safe_shift = bound + 1e-2 * scale;

  for (double& x : guess) x = std::max(std::abs(x), 1e-300);
  detail::normalize_max(guess);

  Eigenpair out;
  double shift = safe_shift;
  bool refined = false;
  double margin_boost = 1.0;
  std::unique_ptr<BandedLU> lu;
  auto refactor = [&](double s) {
    BandedMatrix a = M;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = a.col_begin(i); j < a.col_end(i); ++j) a.at(i, j) = -a.at(i, j);
    }
    a.add_diagonal(s);
    lu = std::make_unique<BandedLU>(std::move(a));
    shift = s;
  };
  refactor(safe_shift);

  std::vector<double> g = guess;
  std::vector<double> next(n);
  double lambda = NAN;
  double prev_lambda = NAN;
  std::size_t settled = 0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    next = g;
    lu->solve_in_place(next);
    double s_old = 0.0, s_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s_old += g[i];
      s_new += next[i];
    }
    const double tau = s_new / s_old;
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      // The shift fell below the principal eigenvalue: restart from safety.
      if (!refined) throw Error(ErrorKind::NoConvergence, "inverse iteration lost positivity");
      refined = false;
      margin_boost *= 100.0;
      refactor(safe_shift);
      g = guess;
      prev_lambda = NAN;
      settled = 0;
      continue;
    }
    lambda = shift - 1.0 / tau;
    detail::normalize_max(next);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - g[i]));
    g.swap(next);
    const double dl = std::abs(lambda - prev_lambda);
    prev_lambda = lambda;
    out.iterations = it;

    if (!refined && dl <= 1e-7 * scale) {
      const double margin = margin_boost * std::max(1e-7 * scale, 100.0 * dl);
      if (lambda + margin < shift) refactor(lambda + margin);
      refined = true;
      continue;
    }
    if (refined && dl <= tol * scale && change <= tol) {
      if (++settled >= 2) break;
    } else {
      settled = 0;
    }
    if (it == max_iter) {
      throw Error(ErrorKind::NoConvergence, "principal eigenpair did not converge within max_iter");
    }
  }
  for (double& x : g) x = std::max(x, 0.0);
  out.lambda = lambda;
  out.vector = std::move(g);
  return out;
}

// ---------------------------------------------------------------------------
// Equilibrium.
// ---------------------------------------------------------------------------

struct EquilibriumSolution {
  double lambda = 0.0;              // principal eigenvalue
  Field F;                          // normalized so (beta - mu0) int F = lambda
  double residual = 0.0;            // sup |L F| / sup F
  double lambda_mass = 0.0;         // (beta - mu0) int F
  double lambda_mean_fitness = 0.0; // beta - int mu F / int F
  double lambda_consistency = 0.0;  // |lambda_mass - lambda_mean_fitness|
  double mu_bar = 0.0;              // beta - lambda
  bool extinct = false;
  MutationMode mode = MutationMode::Nonlocal;
  std::size_t iterations = 0;
  ModelParams params;
};

struct SolverOptions {
  double tol = 1e-10;
  std::size_t max_iter = 20000;
};

namespace detail {

inline std::vector<double> oracle_guess(const ModelParams& p, const Grid& grid) {
  double alpha = p.selection.curvature_at_optimum();
  if (!(alpha > 0.0)) alpha = 1.0;
  const double root = std::sqrt(alpha * p.beta);
  const double mean = -p.c / (p.sigma * root);
  const double var = p.sigma * std::sqrt(p.beta / alpha);
  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = grid.z(i) - mean;
    g[i] = std::exp(-0.5 * d * d / var);
  }
  return g;
}

inline EquilibriumSolution solve_equilibrium_mode(const ModelParams& params, const Grid& grid,
                                                  MutationMode mode, const SolverOptions& opt) {
  const auto report = validate(params);
  if (!report.ok()) throw ConfigError("model", report.failures().front());

  const OperatorContext base = make_context(params, grid, 0.0);
  const BandedMatrix M = generator_matrix(base, mode, params.c);
  const double inner_tol = std::min(opt.tol, 1e-11);
  Eigenpair ep = principal_eigenpair(M, oracle_guess(params, grid), inner_tol, opt.max_iter);

  EquilibriumSolution sol;
  sol.params = params;
  sol.mode = mode;
  sol.lambda = ep.lambda;
  sol.iterations = ep.iterations;
  sol.mu_bar = params.beta - ep.lambda;
  sol.F = Field(grid, std::move(ep.vector));

  const double mass = integrate(sol.F);
  sol.extinct = !(ep.lambda > 0.0);
  const double target = sol.extinct ? 1.0 : ep.lambda / (params.beta - params.mu0);
  sol.F *= target / mass;

  const OperatorContext ctx = make_context(params, grid, sol.mu_bar);
  sol.residual = apply_L(ctx, sol.F, mode).max_abs() / sol.F.max_abs();
  sol.lambda_mass = sol.extinct ? ep.lambda : (params.beta - params.mu0) * integrate(sol.F);
  Field muF(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) muF[i] = ctx.mu[i] * sol.F[i];
  sol.lambda_mean_fitness = params.beta - integrate(muF) / integrate(sol.F);
  sol.lambda_consistency = std::abs(sol.lambda_mass - sol.lambda_mean_fitness);
  if (!sol.F.all_finite()) throw Error(ErrorKind::NoConvergence, "equilibrium profile is not finite");
  if (sol.residual > opt.tol) {
    throw Error(ErrorKind::NoConvergence, "equilibrium residual above tolerance");
  }
  return sol;
}

}  // namespace detail

inline EquilibriumSolution solve_equilibrium(const ModelParams& params, const Grid& grid,
                                             const SolverOptions& opt = {}) {
  return detail::solve_equilibrium_mode(params, grid, MutationMode::Nonlocal, opt);
}

inline EquilibriumSolution solve_equilibrium_diffusive(const ModelParams& params, const Grid& grid,
                                                       const SolverOptions& opt = {}) {
  return detail::solve_equilibrium_mode(params, grid, MutationMode::Diffusive, opt);
}

inline EquilibriumSolution solve_equilibrium(const ModelParams& params, const Grid& grid, MutationMode mode,
                                             const SolverOptions& opt = {}) {
  return detail::solve_equilibrium_mode(params, grid, mode, opt);
}

/// Operator context centred on a solved equilibrium (mu_bar = beta - lambda).
inline OperatorContext context_for(const EquilibriumSolution& sol) {
  return make_context(sol.params, sol.F.grid, sol.mu_bar);
}

/// Dominant trait: argmax of F refined by a parabola through the three nodes.
inline double dominant_trait(const Field& F) {
  const std::size_t i = F.argmax();
  if (i == 0 || i + 1 >= F.size()) return F.z(i);
  const double a = F[i - 1], b = F[i], c = F[i + 1];
  const double denom = a - 2.0 * b + c;
  const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
  return F.z(i) + shift * F.grid.dz();
}

}  // namespace lineagelab
