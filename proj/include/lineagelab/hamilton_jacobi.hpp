#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/model.hpp"

namespace lineagelab {

// ---------------------------------------------------------------------------
// Hamiltonian H(p) = int K(y) e^{yp} dy - 1 and its Legendre transform.
// ---------------------------------------------------------------------------

struct HamiltonianModel {
  enum class Kind { Gaussian, Uniform, Diffusive };

  Kind kind = Kind::Gaussian;

  static HamiltonianModel from_kernel(const KernelSpec& k) {
    return {k.kind == KernelSpec::Kind::Gaussian ? Kind::Gaussian : Kind::Uniform};
  }
  static HamiltonianModel diffusive() { return {Kind::Diffusive}; }

  bool analytic() const { return kind != Kind::Uniform; }

  double H(double p) const {
    switch (kind) {
      case Kind::Gaussian: return std::expm1(0.5 * p * p);
      case Kind::Diffusive: return 0.5 * p * p;
      case Kind::Uniform: return uniform_moment(p, 0) - 1.0;
    }
    return 0.0;
  }

  double dH(double p) const {
    switch (kind) {
      case Kind::Gaussian: return p * std::exp(0.5 * p * p);
      case Kind::Diffusive: return p;
      case Kind::Uniform: return uniform_moment(p, 1);
    }
    return 0.0;
  }

  double d2H(double p) const {
    switch (kind) {
      case Kind::Gaussian: return (1.0 + p * p) * std::exp(0.5 * p * p);
      case Kind::Diffusive: return 1.0;
      case Kind::Uniform: return uniform_moment(p, 2);
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Gaussian: return "gaussian";
      case Kind::Uniform: return "uniform";
      case Kind::Diffusive: return "diffusive";
    }
    return "?";
  }

 private:
  // int_{-sqrt3}^{sqrt3} y^k e^{yp} / (2 sqrt3) dy by composite Simpson.
  static double uniform_moment(double p, int k) {
    constexpr int intervals = 2000;
    const double a = -kSqrt3;
    const double h = 2.0 * kSqrt3 / intervals;
    double acc = 0.0;
    for (int i = 0; i <= intervals; ++i) {
      const double y = a + h * i;
      const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      acc += w * std::pow(y, k) * std::exp(y * p);
    }
    return acc * h / 3.0 / (2.0 * kSqrt3);
  }
};

inline double hamiltonian(const HamiltonianModel& m, double p) { return m.H(p); }
inline double d_hamiltonian(const HamiltonianModel& m, double p) { return m.dH(p); }

struct LagrangianValue {
  double value = 0.0;
  double argmax_p = 0.0;
};

namespace detail {

// Solves f(p) = target for increasing f by Newton steps kept inside an
// expanding bracket, falling back to bisection.
template <class F, class DF>
double monotone_root(F&& f, DF&& df, double target, double guess, double tol, const char* what) {
  double lo = guess - 1.0, hi = guess + 1.0;
  for (int k = 0; f(lo) > target; ++k) {
    lo = guess - (hi - guess) * std::pow(2.0, k + 1);
    if (k > 200) throw Error(ErrorKind::NoConvergence, what);
  }
  for (int k = 0; f(hi) < target; ++k) {
    hi = guess + (guess - lo) * std::pow(2.0, k + 1);
    if (k > 200) throw Error(ErrorKind::NoConvergence, what);
  }
  double p = std::clamp(guess, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double r = f(p) - target;
    if (std::abs(r) <= tol * std::max(1.0, std::abs(target))) return p;
    if (r > 0.0) hi = p; else lo = p;
    const double d = df(p);
    double next = d > 0.0 ? p - r / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= 1e-300 || next == p) return p;
    p = next;
  }
  throw Error(ErrorKind::NoConvergence, what);
}

}  // namespace detail

/// L(v) = sup_p (p v - H(p)), attained where dH(p) = v.
inline LagrangianValue lagrangian(const HamiltonianModel& m, double v) {
  const double p = detail::monotone_root([&](double x) { return m.dH(x); }, [&](double x) { return m.d2H(x); }, v,
                                         0.0, 1e-15, "Legendre transform did not converge");
  return {p * v - m.H(p), p};
}

/// beta - mu0 - beta L(c'/beta).
inline double lambda_hj(const HamiltonianModel& m, double beta, double mu0, double c_prime) {
  return beta - mu0 - beta * lagrangian(m, c_prime / beta).value;
}

/// Root of m(z) = beta L(c'/beta) on the side opposite to c'.
inline double dominant_trait_zstar(const HamiltonianModel& h, const SelectionSpec& sel, double beta, double c_prime) {
  if (c_prime == 0.0) return 0.0;
  const double target = beta * lagrangian(h, c_prime / beta).value;
  const double sign = c_prime > 0.0 ? -1.0 : 1.0;
  // g(x) = m(sign * x) is increasing in x >= 0.
  double hi = 1.0;
  while (sel.m(sign * hi) < target) {
    hi *= 2.0;
    if (hi > 1e12) throw Error(ErrorKind::NoConvergence, "dominant trait root not bracketed");
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (sel.m(sign * mid) < target ? lo : hi) = mid;
  }
  return sign * 0.5 * (lo + hi);
}

/// Small-sigma variance of F: -c' sigma / m'(z*), or sigma / U''(0) when c' = 0.
inline double variance_approx(const HamiltonianModel& h, const SelectionSpec& sel, double beta, double sigma,
                              double c_prime) {
  if (c_prime == 0.0) {
    // beta H(U') = m near 0 gives U''(0) = sqrt(m''(0) / beta).
    const double u2 = std::sqrt(sel.curvature_at_optimum() / (beta * h.d2H(0.0)));
    return u2 > 0.0 ? sigma / u2 : INFINITY;
  }
  const double zs = dominant_trait_zstar(h, sel, beta, c_prime);
  return -c_prime * sigma / sel.dm(zs);
}

/// Closed form for quadratic selection m = alpha z^2 / 2.
inline double variance_quadratic(const HamiltonianModel& h, double alpha, double beta, double sigma, double c_prime) {
  if (c_prime == 0.0) return sigma * std::sqrt(beta * h.d2H(0.0) / alpha);
  const double L = lagrangian(h, c_prime / beta).value;
  return std::abs(c_prime) * sigma / std::sqrt(2.0 * alpha * beta * L);
}

/// Relaxation rate of Gamma under quadratic selection: alpha Var(F) / sigma.
inline double gamma_quadratic_rate(const HamiltonianModel& h, double alpha, double beta, double c_prime) {
  return alpha * variance_quadratic(h, alpha, beta, 1.0, c_prime);
}

inline double gamma_quadratic_approx(const HamiltonianModel& h, double alpha, double beta, double c_prime, double z0,
                                     double s) {
  return z0 * std::exp(-gamma_quadratic_rate(h, alpha, beta, c_prime) * s);
}

// ---------------------------------------------------------------------------
// U profiles.
// ---------------------------------------------------------------------------

struct HJProfile {
  std::string source;     // "hj" or "F"
  double c_prime = 0.0;
  double lambda_hj = 0.0;
  Field U;                // NaN where not computed
  Field dU;
  double z_star = 0.0;
  double variance_approx = 0.0;
  double epsilon_scale = 0.0;

  /// Linear interpolation of dU; NaN outside the computed range.
  double dU_at(double z) const {
    const Grid& g = dU.grid;
    const double x = (z - g.z(0)) / g.dz();
    if (!(x >= 0.0) || x > static_cast<double>(g.size() - 1)) return NAN;
    const auto i = std::min(static_cast<std::size_t>(x), g.size() - 2);
    const double t = x - static_cast<double>(i);
    return (1.0 - t) * dU[i] + t * dU[i + 1];
  }
};

inline double epsilon_scale(double sigma, double beta, double alpha) {
  return alpha > 0.0 ? std::sqrt(sigma * sigma * beta / alpha) : INFINITY;
}

/// -sigma log F on the positivity window, shifted to min 0; NaN elsewhere.
inline Field u_from_F(const Field& F, double sigma, double floor = kDefaultPositivityFloor) {
  const Window w = positivity_window(F, floor);
  Field U(F.grid, kNotComputed);
  double lo = INFINITY;
  for (std::size_t i = w.lo; i <= w.hi; ++i) {
    U[i] = -sigma * std::log(F[i]);
    lo = std::min(lo, U[i]);
  }
  for (std::size_t i = w.lo; i <= w.hi; ++i) U[i] -= lo;
  return U;
}

/// Centred differences (one-sided at the ends of the finite run).
inline Field derivative(const Field& f) {
  Field d(f.grid, kNotComputed);
  const double dz = f.grid.dz();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) continue;
    const bool left = i > 0 && std::isfinite(f[i - 1]);
    const bool right = i + 1 < f.size() && std::isfinite(f[i + 1]);
    if (left && right) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * dz);
    else if (right) d[i] = (f[i + 1] - f[i]) / dz;
    else if (left) d[i] = (f[i] - f[i - 1]) / dz;
  }
  return d;
}

/// Largest violation of convexity, max(-(U[i+1] - 2U[i] + U[i-1])) / dz^2,
/// over nodes where U is finite. Non-positive means convex.
inline double convexity_defect(const Field& U) {
  double worst = -INFINITY;
  const double dz2 = U.grid.dz() * U.grid.dz();
  for (std::size_t i = 1; i + 1 < U.size(); ++i) {
    if (!std::isfinite(U[i - 1]) || !std::isfinite(U[i]) || !std::isfinite(U[i + 1])) continue;
    worst = std::max(worst, -(U[i + 1] - 2.0 * U[i] + U[i - 1]) / dz2);
  }
  return worst;
}

inline HJProfile profile_from_F(const Field& F, const HamiltonianModel& h, const SelectionSpec& sel, double beta,
                                double mu0, double sigma, double c) {
  HJProfile p;
  p.source = "F";
  p.c_prime = c / sigma;
  p.lambda_hj = lambda_hj(h, beta, mu0, p.c_prime);
  p.U = u_from_F(F, sigma);
  p.dU = derivative(p.U);
  const std::size_t i = F.argmax();
  p.z_star = F.z(i);
  p.variance_approx = variance_approx(h, sel, beta, sigma, p.c_prime);
  p.epsilon_scale = epsilon_scale(sigma, beta, sel.curvature_at_optimum());
  return p;
}

/// Solves beta H(U') - c' U' = m(z) - beta L(c'/beta) node by node. The left
/// side is convex in p with minimum -beta L(c'/beta) at p0 (beta dH(p0) = c'),
/// reached at z = 0; U' runs along p <= p0 for z < 0 and p >= p0 for z > 0,
/// which makes U convex with U'(z*) = 0. U is anchored at U(z*) = 0.
inline HJProfile solve_U_hj(const HamiltonianModel& h, const SelectionSpec& sel, double beta, double mu0,
                            double c_prime, const Grid& grid, double sigma = NAN, double tol = 1e-9) {
  HJProfile prof;
  prof.source = "hj";
  prof.c_prime = c_prime;
  prof.lambda_hj = lambda_hj(h, beta, mu0, c_prime);
  const auto lv = lagrangian(h, c_prime / beta);
  const double p0 = lv.argmax_p;
  const double floor_value = -beta * lv.value;
  prof.z_star = dominant_trait_zstar(h, sel, beta, c_prime);

  auto g = [&](double p) { return beta * h.H(p) - c_prime * p; };
  auto dg = [&](double p) { return beta * h.dH(p) - c_prime; };
  prof.dU = Field(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double z = grid.z(i);
    const double rhs = sel.m(z) + floor_value;
    if (rhs < floor_value - tol * std::max(1.0, std::abs(floor_value))) {
      throw Error(ErrorKind::BranchInversionFailure, "right-hand side below the Hamiltonian minimum");
    }
    if (rhs <= floor_value || z == 0.0) {
      prof.dU[i] = p0;
      continue;
    }
    if (z > 0.0) {
      // increasing branch p >= p0
      prof.dU[i] = detail::monotone_root(g, dg, rhs, p0 + 1.0, 1e-14, "Hamilton-Jacobi branch inversion failed");
      if (prof.dU[i] < p0) prof.dU[i] = p0;
    } else {
      // decreasing branch p <= p0: solve in q = p0 - p, increasing in q
      const double q = detail::monotone_root([&](double x) { return g(p0 - x); },
                                             [&](double x) { return -dg(p0 - x); }, rhs, 1.0, 1e-14,
                                             "Hamilton-Jacobi branch inversion failed");
      prof.dU[i] = p0 - std::max(q, 0.0);
    }
  }
  // integrate U' by the trapezoid rule, then anchor U(z*) = 0
  prof.U = Field(grid);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    prof.U[i] = prof.U[i - 1] + 0.5 * grid.dz() * (prof.dU[i - 1] + prof.dU[i]);
  }
  const double anchor = prof.U.interpolate(prof.z_star);
  for (double& u : prof.U.values) u -= anchor;
  if (std::isfinite(sigma)) {
    prof.variance_approx = variance_approx(h, sel, beta, sigma, c_prime);
    prof.epsilon_scale = epsilon_scale(sigma, beta, sel.curvature_at_optimum());
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Typical lineage.
// ---------------------------------------------------------------------------

struct GammaTrajectory {
  std::string source;
  std::vector<double> s;
  std::vector<double> gamma;

  /// Linear interpolation in s.
  double at(double t) const {
    if (s.empty()) return NAN;
    if (t <= s.front()) return gamma.front();
    if (t >= s.back()) return gamma.back();
    const auto it = std::upper_bound(s.begin(), s.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - s.begin());
    const double w = (t - s[k - 1]) / (s[k] - s[k - 1]);
    return (1.0 - w) * gamma[k - 1] + w * gamma[k];
  }
};

/// RK4 for dGamma/ds = c' - beta dH(U'(Gamma)). ds <= 0 picks
/// min(0.01, dz / (2 max |dGamma/ds|)) with the maximum taken over the nodes
/// between z0 and 0.
inline GammaTrajectory gamma_ode(const HJProfile& hj, const HamiltonianModel& h, double beta, double z0, double s_end,
                                 double ds = 0.0) {
  auto rhs = [&](double z) {
    const double du = hj.dU_at(z);
    if (!std::isfinite(du)) throw Error(ErrorKind::WindowExit, "typical lineage left the range where U' is known");
    return hj.c_prime - beta * h.dH(du);
  };
  const Grid& grid = hj.dU.grid;
  if (ds <= 0.0) {
    double vmax = 0.0;
    const std::size_t a = grid.index_of(std::min(z0, 0.0)), b = grid.index_of(std::max(z0, 0.0));
    for (std::size_t i = a; i <= b; ++i) {
      if (std::isfinite(hj.dU[i])) vmax = std::max(vmax, std::abs(hj.c_prime - beta * h.dH(hj.dU[i])));
    }
    ds = vmax > 0.0 ? std::min(0.01, grid.dz() / (2.0 * vmax)) : 0.01;
  }
  const auto steps = static_cast<std::size_t>(std::ceil(s_end / ds - 1e-9));
  const double hstep = steps ? s_end / static_cast<double>(steps) : 0.0;
  GammaTrajectory tr;
  tr.source = "ode";
  double z = z0;
  tr.s.push_back(0.0);
  tr.gamma.push_back(z);
  for (std::size_t k = 0; k < steps; ++k) {
    const double k1 = rhs(z);
    const double k2 = rhs(z + 0.5 * hstep * k1);
    const double k3 = rhs(z + 0.5 * hstep * k2);
    const double k4 = rhs(z + hstep * k3);
    z += hstep / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    tr.s.push_back(hstep * static_cast<double>(k + 1));
    tr.gamma.push_back(z);
  }
  return tr;
}

inline GammaTrajectory gamma_quadratic_trajectory(const HamiltonianModel& h, double alpha, double beta,
                                                  double c_prime, double z0, const std::vector<double>& s_grid) {
  GammaTrajectory tr;
  tr.source = "quad_approx";
  for (double s : s_grid) {
    tr.s.push_back(s);
    tr.gamma.push_back(gamma_quadratic_approx(h, alpha, beta, c_prime, z0, s));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Coalescence heuristics.
// ---------------------------------------------------------------------------

struct CoalescenceScales {
  double T_c_general = 0.0;    // 1 / Var(F)
  double T_c_diffusive = 0.0;  // 1 / (sigma sqrt(beta))
  double kingman_rate = 0.0;   // int p psi^2 / n_pop, p = F / int F, psi = phi int F
};

inline CoalescenceScales coalescence_scales(const Field& F, const Field& phi, double sigma, double beta,
                                            double population, double floor = kDefaultPositivityFloor) {
  if (!(population > 0.0)) throw ConfigError("ibm.N", "population size must be positive");
  CoalescenceScales c;
  const auto m = moments(F);
  c.T_c_general = 1.0 / m.variance;
  c.T_c_diffusive = 1.0 / (sigma * std::sqrt(beta));
  const Window w = positivity_window(F, floor);
  Field integrand(F.grid);
  for (std::size_t i = w.lo; i <= w.hi; ++i) {
    const double psi = phi[i] * m.mass;
    integrand[i] = F[i] / m.mass * psi * psi / population;
  }
  c.kingman_rate = integrate(integrand);
  return c;
}

}  // namespace lineagelab
