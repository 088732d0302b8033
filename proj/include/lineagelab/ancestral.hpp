#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lineagelab/banded.hpp"
#include "lineagelab/duality.hpp"
#include "lineagelab/equilibrium.hpp"
#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/operators.hpp"
#include "lineagelab/parallel.hpp"
#include "lineagelab/stats.hpp"

namespace lineagelab {

/// Time-indexed statistics of the ancestral trait. s runs backwards in time.
struct AncestralSeries {
  std::string source;
  double start = 0.0;
  std::vector<double> s;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> q05;
  std::vector<double> q95;
};

struct AncestralDensity {
  double s = 0.0;
  Field rho;  // unit-mass density, zero outside the positivity window
};

// ---------------------------------------------------------------------------
// The ancestral chain on the positivity window.
//
// From node i the lineage jumps to node k at rate beta w(k-i) F_k / F_i and,
// for c > 0, to i+1 at rate (c/dz) F_{i+1} / F_i (i-1 and |c| for c < 0).
// The diffusive variant has nearest-neighbour rates. Targets outside the
// window are clipped to its edge.
// ---------------------------------------------------------------------------

class AncestralGenerator {
 public:
  struct Target {
    std::uint32_t state = 0;
    bool clipped = false;
  };

  explicit AncestralGenerator(const EquilibriumSolution& eq, double floor = kDefaultPositivityFloor)
      : grid_(eq.F.grid), window_(positivity_window(eq.F, floor)), mode_(eq.mode) {
    const OperatorContext ctx = context_for(eq);
    const Field& F = eq.F;
    const std::size_t n = grid_.size();
    const std::size_t w = window_.size();
    const std::size_t band =
        mode_ == MutationMode::Nonlocal ? std::max<std::size_t>(ctx.stencil.radius, 1) : 1;
    matrix_ = BandedMatrix(w, band, band);
    targets_.resize(w);
    tables_.resize(w);
    total_.assign(w, 0.0);
    clipped_rate_.assign(w, 0.0);

    std::vector<double> rates;
    for (std::size_t i = window_.lo; i <= window_.hi; ++i) {
      const std::size_t si = i - window_.lo;
      rates.clear();
      auto add = [&](std::size_t k, double rate) {
        if (!(rate > 0.0)) return;
        const std::size_t kk = std::clamp(k, window_.lo, window_.hi);
        const bool clipped = kk != k;
        if (clipped) clipped_rate_[si] += rate;
        if (kk == i) return;
        const std::size_t sk = kk - window_.lo;
        matrix_.at(si, sk) += rate;
        matrix_.at(si, si) -= rate;
        total_[si] += rate;
        targets_[si].push_back({static_cast<std::uint32_t>(sk), clipped});
        rates.push_back(rate);
      };
      if (mode_ == MutationMode::Nonlocal) {
        const std::size_t r = ctx.stencil.radius;
        const std::size_t k0 = i >= r ? i - r : 0;
        const std::size_t k1 = std::min(n - 1, i + r);
        for (std::size_t k = k0; k <= k1; ++k) {
          if (k == i) continue;
          const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(i);
          add(k, eq.params.beta * ctx.stencil(off) * F[k] / F[i]);
        }
        const double c = eq.params.c;
        if (c > 0.0 && i + 1 < n) add(i + 1, c / grid_.dz() * F[i + 1] / F[i]);
        if (c < 0.0 && i > 0) add(i - 1, -c / grid_.dz() * F[i - 1] / F[i]);
      } else {
        const auto k = detail::diffusive_coefficients(ctx, eq.params.c);
        if (i + 1 < n) add(i + 1, k.up * F[i + 1] / F[i]);
        if (i > 0) add(i - 1, k.down * F[i - 1] / F[i]);
      }
      tables_[si].build(rates);
    }
  }

  const Grid& grid() const { return grid_; }
  const Window& window() const { return window_; }
  MutationMode mode() const { return mode_; }
  std::size_t size() const { return window_.size(); }
  const BandedMatrix& matrix() const { return matrix_; }

  double z_of_state(std::size_t s) const { return grid_.z(s + window_.lo); }

  std::size_t state_of(double z) const {
    const std::size_t i = grid_.index_of(z);
    if (!window_.contains(i)) {
      throw Error(ErrorKind::DegenerateWeight, "start trait lies outside the positivity window");
    }
    return i - window_.lo;
  }

  double total_rate(std::size_t s) const { return total_[s]; }
  double clipped_rate(std::size_t s) const { return clipped_rate_[s]; }
  const std::vector<Target>& targets(std::size_t s) const { return targets_[s]; }
  const AliasTable& table(std::size_t s) const { return tables_[s]; }

  double stability_bound() const {
    const double m = *std::max_element(total_.begin(), total_.end());
    return m > 0.0 ? 1.0 / m : INFINITY;
  }

  /// Restriction of a grid field to window states.
  std::vector<double> restrict(const Field& f) const {
    return {f.values.begin() + static_cast<std::ptrdiff_t>(window_.lo),
            f.values.begin() + static_cast<std::ptrdiff_t>(window_.hi + 1)};
  }

  /// Extension of window values to the grid, `fill` elsewhere.
  Field extend(const std::vector<double>& v, double fill) const {
    Field out(grid_, fill);
    std::copy(v.begin(), v.end(), out.values.begin() + static_cast<std::ptrdiff_t>(window_.lo));
    return out;
  }

 private:
  Grid grid_;
  Window window_;
  MutationMode mode_;
  BandedMatrix matrix_;
  std::vector<std::vector<Target>> targets_;
  std::vector<AliasTable> tables_;
  std::vector<double> total_;
  std::vector<double> clipped_rate_;
};

namespace detail {

inline double checked_generator_dt(const AncestralGenerator& gen, double dt) {
  const double bound = gen.stability_bound();
  if (dt <= 0.0) return std::min(0.9 * bound, 0.05);
  if (dt > bound * (1.0 + 1e-12)) {
    throw Error(ErrorKind::StabilityViolation,
                "time step " + std::to_string(dt) + " exceeds the stability bound " + std::to_string(bound));
  }
  return dt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Semigroup and forward density.
// ---------------------------------------------------------------------------

/// M_s psi by RK4 on d theta/ds = A theta. NaN outside the window.
inline Field semigroup_apply(const AncestralGenerator& gen, const Field& psi, double s, double dt = 0.0) {
  dt = detail::checked_generator_dt(gen, dt);
  std::vector<double> theta = gen.restrict(psi);
  Rk4Stepper rk(gen.matrix());
  rk.advance(theta, s, dt);
  return gen.extend(theta, kNotComputed);
}

/// M_s psi at several times from one integration.
inline std::vector<Field> semigroup_series(const AncestralGenerator& gen, const Field& psi,
                                           const std::vector<double>& s_grid, double dt = 0.0) {
  dt = detail::checked_generator_dt(gen, dt);
  std::vector<double> theta = gen.restrict(psi);
  Rk4Stepper rk(gen.matrix());
  std::vector<Field> out;
  double s = 0.0;
  for (double target : s_grid) {
    rk.advance(theta, target - s, dt);
    s = std::max(s, target);
    out.push_back(gen.extend(theta, kNotComputed));
  }
  return out;
}

/// Law of Y_s started from the node nearest z0. Snapshots at each s in s_grid
/// (ascending).
inline std::vector<AncestralDensity> evolve_forward_density(const AncestralGenerator& gen, double z0,
                                                            const std::vector<double>& s_grid, double dt = 0.0) {
  dt = detail::checked_generator_dt(gen, dt);
  const BandedMatrix at = gen.matrix().transposed();
  Rk4Stepper rk(at);
  std::vector<double> p(gen.size(), 0.0);
  p[gen.state_of(z0)] = 1.0;
  const double dz = gen.grid().dz();
  std::vector<AncestralDensity> out;
  double s = 0.0;
  for (double target : s_grid) {
    rk.advance(p, target - s, dt);
    s = std::max(s, target);
    std::vector<double> rho(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) rho[k] = p[k] / dz;
    out.push_back({target, gen.extend(rho, 0.0)});
  }
  return out;
}

/// Quantile of a node-mass distribution, each node's mass spread uniformly
/// over its cell.
inline double density_quantile(const Field& rho, double q) {
  const double dz = rho.grid.dz();
  double total = 0.0;
  for (double v : rho.values) total += std::max(v, 0.0) * dz;
  const double target = q * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double m = std::max(rho[i], 0.0) * dz;
    if (m > 0.0 && acc + m >= target) {
      return rho.z(i) - 0.5 * dz + dz * (target - acc) / m;
    }
    acc += m;
  }
  return rho.z(rho.size() - 1);
}

struct DensityStats {
  double mass = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
};

inline DensityStats density_stats(const Field& rho) {
  DensityStats d;
  const double dz = rho.grid.dz();
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    m0 += rho[i] * dz;
    m1 += rho.z(i) * rho[i] * dz;
  }
  d.mass = m0;
  d.mean = m1 / m0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double e = rho.z(i) - d.mean;
    m2 += e * e * rho[i] * dz;
  }
  d.variance = m2 / m0;
  d.q05 = density_quantile(rho, 0.05);
  d.q95 = density_quantile(rho, 0.95);
  return d;
}

inline AncestralSeries ancestral_stats(const AncestralGenerator& gen, double z0, const std::vector<double>& s_grid,
                                       double dt = 0.0) {
  AncestralSeries out;
  out.source = "pde";
  out.start = gen.grid().z(gen.grid().index_of(z0));
  for (const auto& d : evolve_forward_density(gen, z0, s_grid, dt)) {
    const auto st = density_stats(d.rho);
    out.s.push_back(d.s);
    out.mean.push_back(st.mean);
    out.variance.push_back(st.variance);
    out.q05.push_back(st.q05);
    out.q95.push_back(st.q95);
  }
  return out;
}

/// Mean and variance of Y_s from the semigroup applied to z and z^2.
inline AncestralSeries ancestral_moments_semigroup(const AncestralGenerator& gen, double z0,
                                                   const std::vector<double>& s_grid, double dt = 0.0) {
  const Grid& g = gen.grid();
  const auto first = semigroup_series(gen, Field::from_function(g, [](double z) { return z; }), s_grid, dt);
  const auto second = semigroup_series(gen, Field::from_function(g, [](double z) { return z * z; }), s_grid, dt);
  const std::size_t i = g.index_of(z0);
  AncestralSeries out;
  out.source = "semigroup";
  out.start = g.z(i);
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    out.s.push_back(s_grid[k]);
    out.mean.push_back(first[k][i]);
    out.variance.push_back(second[k][i] - first[k][i] * first[k][i]);
    out.q05.push_back(NAN);
    out.q95.push_back(NAN);
  }
  return out;
}

/// Density of Y_infinity: F phi / int F phi.
inline Field y_infinity_density(const Field& F, const Field& phi) {
  Field out = pointwise_product(F, phi);
  out *= 1.0 / integrate(out);
  return out;
}

// ---------------------------------------------------------------------------
// Closed forms in the diffusive quadratic case: Y is an Ornstein-Uhlenbeck
// process with rate sigma sqrt(alpha beta) and stationary variance
// sigma sqrt(beta/alpha) / 2.
// ---------------------------------------------------------------------------

inline double ou_rate(double beta, double sigma, double alpha = 1.0) { return sigma * std::sqrt(alpha * beta); }

inline double ou_mean(double beta, double sigma, double z0, double s, double alpha = 1.0) {
  return z0 * std::exp(-ou_rate(beta, sigma, alpha) * s);
}

inline double ou_variance(double beta, double sigma, double s, double alpha = 1.0) {
  const double k = ou_rate(beta, sigma, alpha);
  return 0.5 * sigma * std::sqrt(beta / alpha) * (1.0 - std::exp(-2.0 * k * s));
}

inline AncestralSeries ou_oracle_series(double beta, double sigma, double z0, const std::vector<double>& s_grid,
                                        double alpha = 1.0) {
  constexpr double z95 = 1.6448536269514722;
  AncestralSeries out;
  out.source = "ou_oracle";
  out.start = z0;
  for (double s : s_grid) {
    const double m = ou_mean(beta, sigma, z0, s, alpha);
    const double v = ou_variance(beta, sigma, s, alpha);
    out.s.push_back(s);
    out.mean.push_back(m);
    out.variance.push_back(v);
    out.q05.push_back(m - z95 * std::sqrt(v));
    out.q95.push_back(m + z95 * std::sqrt(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo.
// ---------------------------------------------------------------------------

struct MonteCarloResult {
  AncestralSeries series;           // source "mc"
  std::vector<double> se_mean;
  std::vector<double> se_variance;
  std::vector<std::vector<double>> samples;  // samples[k][path] = Y at s_grid[k]
  double clipped_fraction = 0.0;    // share of simulated time spent after a clipped jump
  std::size_t clipped_jumps = 0;
};

namespace detail {

inline void fill_series(MonteCarloResult& r, const std::vector<double>& s_grid) {
  r.series.source = "mc";
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    const auto sum = summarize(r.samples[k]);
    r.series.s.push_back(s_grid[k]);
    r.series.mean.push_back(sum.mean);
    r.series.variance.push_back(sum.variance);
    r.series.q05.push_back(sum.q05);
    r.series.q95.push_back(sum.q95);
    r.se_mean.push_back(sum.se_mean);
    r.se_variance.push_back(sum.se_variance);
  }
}

}  // namespace detail

/// Exact simulation of the window chain. Each path draws from its own
/// (seed, path) stream, so results do not depend on the worker count.
inline MonteCarloResult monte_carlo_Y(const AncestralGenerator& gen, double z0, const std::vector<double>& s_grid,
                                      std::size_t n_paths, std::uint64_t seed, double max_clipped = 1e-3) {
  const std::size_t start = gen.state_of(z0);
  const std::size_t ns = s_grid.size();
  const double s_end = ns ? s_grid.back() : 0.0;
  MonteCarloResult r;
  r.series.start = gen.z_of_state(start);
  std::vector<std::vector<std::uint32_t>> states(ns, std::vector<std::uint32_t>(n_paths));
  std::vector<double> clipped_time(n_paths, 0.0);
  std::vector<std::size_t> clipped_jumps(n_paths, 0);

  parallel_for(n_paths, [&](std::size_t p) {
    Rng rng(stream_seed(seed, p));
    std::exponential_distribution<double> expo(1.0);
    std::size_t state = start;
    bool clipped = false;
    double s = 0.0;
    std::size_t j = 0;
    while (j < ns) {
      const double rate = gen.total_rate(state);
      const double wait = rate > 0.0 ? expo(rng) / rate : INFINITY;
      while (j < ns && s_grid[j] < s + wait) states[j++][p] = static_cast<std::uint32_t>(state);
      if (clipped) clipped_time[p] += std::min(wait, s_end - s);
      if (j >= ns) break;
      s += wait;
      const auto& t = gen.targets(state)[gen.table(state).sample(rng)];
      state = t.state;
      clipped = t.clipped;
      if (clipped) ++clipped_jumps[p];
    }
  });

  r.samples.assign(ns, std::vector<double>(n_paths));
  for (std::size_t k = 0; k < ns; ++k) {
    for (std::size_t p = 0; p < n_paths; ++p) r.samples[k][p] = gen.z_of_state(states[k][p]);
  }
  double total_clipped = 0.0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    total_clipped += clipped_time[p];
    r.clipped_jumps += clipped_jumps[p];
  }
  r.clipped_fraction = s_end > 0.0 ? total_clipped / (s_end * static_cast<double>(n_paths)) : 0.0;
  if (r.clipped_fraction > max_clipped) {
    throw Error(ErrorKind::WindowExit, "lineages spent more than the allowed share of time clipped at the window edge");
  }
  detail::fill_series(r, s_grid);
  return r;
}

/// Euler-Maruyama for the diffusive ancestral SDE
///   dY = (beta sigma^2 F'/F + c) ds + sigma sqrt(beta) dB,
/// with F'/F from centred differences of log F, interpolated linearly.
inline MonteCarloResult monte_carlo_Y_sde(const EquilibriumSolution& eq, double z0, const std::vector<double>& s_grid,
                                          std::size_t n_paths, std::uint64_t seed, double ds = 1e-2,
                                          double floor = kDefaultPositivityFloor, double max_clipped = 1e-3) {
  const Field& F = eq.F;
  const Window win = positivity_window(F, floor);
  const Grid& g = F.grid;
  const double beta = eq.params.beta;
  const double sigma = eq.params.sigma;
  const double dz = g.dz();
  Field score(g);
  for (std::size_t i = win.lo; i <= win.hi; ++i) {
    const std::size_t a = i > win.lo ? i - 1 : i;
    const std::size_t b = i < win.hi ? i + 1 : i;
    score[i] = (std::log(F[b]) - std::log(F[a])) / (static_cast<double>(b - a) * dz);
  }
  const double lo = g.z(win.lo), hi = g.z(win.hi);
  auto drift = [&](double y) {
    const double x = (y - g.z(0)) / dz;
    auto i = static_cast<std::size_t>(std::floor(x));
    i = std::clamp(i, win.lo, win.hi - 1);
    const double t = x - static_cast<double>(i);
    return beta * sigma * sigma * ((1.0 - t) * score[i] + t * score[i + 1]) + eq.params.c;
  };
  const double vol = sigma * std::sqrt(beta);
  const std::size_t ns = s_grid.size();
  MonteCarloResult r;
  r.series.start = z0;
  r.samples.assign(ns, std::vector<double>(n_paths));
  std::vector<double> clipped_time(n_paths, 0.0);
  parallel_for(n_paths, [&](std::size_t p) {
    Rng rng(stream_seed(seed, p));
    std::normal_distribution<double> normal(0.0, 1.0);
    double y = z0;
    double s = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      const double span = s_grid[k] - s;
      if (span > 0.0) {
        const auto steps = static_cast<std::size_t>(std::ceil(span / ds - 1e-9));
        const double h = span / static_cast<double>(steps);
        const double sh = std::sqrt(h);
        for (std::size_t m = 0; m < steps; ++m) {
          y += drift(y) * h + vol * sh * normal(rng);
          if (y < lo || y > hi) {
            y = std::clamp(y, lo, hi);
            clipped_time[p] += h;
          }
        }
        s = s_grid[k];
      }
      r.samples[k][p] = y;
    }
  });
  double total = 0.0;
  for (double c : clipped_time) total += c;
  const double s_end = ns ? s_grid.back() : 0.0;
  r.clipped_fraction = s_end > 0.0 ? total / (s_end * static_cast<double>(n_paths)) : 0.0;
  if (r.clipped_fraction > max_clipped) {
    throw Error(ErrorKind::WindowExit, "lineages spent more than the allowed share of time clipped at the window edge");
  }
  detail::fill_series(r, s_grid);
  return r;
}

/// Mean and standard error of psi(Y_s) over simulated endpoints.
inline std::pair<double, double> mc_expectation(const std::vector<double>& endpoints, const Field& psi) {
  std::vector<double> v;
  v.reserve(endpoints.size());
  for (double y : endpoints) v.push_back(psi[psi.grid.index_of(y)]);
  const auto s = summarize(std::move(v));
  return {s.mean, s.se_mean};
}

/// Histogram of samples on the grid cells, normalized to unit mass.
inline Field empirical_density(const Grid& grid, const std::vector<double>& samples) {
  Field h(grid);
  for (double y : samples) h[grid.index_of(y)] += 1.0;
  h *= 1.0 / (static_cast<double>(samples.size()) * grid.dz());
  return h;
}

}  // namespace lineagelab
