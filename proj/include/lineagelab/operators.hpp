#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lineagelab/error.hpp"
#include "lineagelab/field.hpp"
#include "lineagelab/model.hpp"

namespace lineagelab {

/// Which form of the mutation operator is in use: the kernel convolution or
/// its second-order (Laplacian) approximation.
enum class MutationMode { Nonlocal, Diffusive };

inline const char* to_string(MutationMode m) {
  return m == MutationMode::Nonlocal ? "nonlocal" : "diffusive";
}

// ---------------------------------------------------------------------------
// Mutation stencil: cell masses of the sigma-scaled kernel at grid offsets.
// ---------------------------------------------------------------------------

struct MutationStencil {
  std::size_t radius = 0;
  std::vector<double> weights;  // size 2*radius+1, index radius is offset 0
  double raw_mass = 1.0;        // mass before renormalization

  double operator()(std::ptrdiff_t offset) const {
    const auto r = static_cast<std::ptrdiff_t>(radius);
    if (offset < -r || offset > r) return 0.0;
    return weights[static_cast<std::size_t>(offset + r)];
  }

  double sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

/// Weight j is the kernel mass of the cell [(j-1/2)dz, (j+1/2)dz] after the
/// change of variables h = z/sigma. Truncated at |h| <= 8 (gaussian) or the
/// full support (uniform), then renormalized to unit mass.
inline MutationStencil make_stencil(const KernelSpec& kernel, double sigma, double dz) {
  MutationStencil s;
  const double reach = kernel.support_radius() * sigma;
  s.radius = static_cast<std::size_t>(std::ceil(reach / dz - 0.5));
  if (kernel.kind == KernelSpec::Kind::Gaussian) {
    s.radius = static_cast<std::size_t>(std::floor(reach / dz));
  }
  const std::size_t n = 2 * s.radius + 1;
  s.weights.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double j = static_cast<double>(k) - static_cast<double>(s.radius);
    double a = (j - 0.5) * dz / sigma;
    double b = (j + 0.5) * dz / sigma;
    if (kernel.kind == KernelSpec::Kind::Gaussian) {
      a = std::max(a, -kernel.support_radius());
      b = std::min(b, kernel.support_radius());
    }
    s.weights[k] = kernel.mass(a, b);
  }
  s.raw_mass = s.sum();
  for (double& w : s.weights) w /= s.raw_mass;
  return s;
}

// ---------------------------------------------------------------------------
// Operator context.
// ---------------------------------------------------------------------------

struct OperatorContext {
  ModelParams params;
  Grid grid;
  double mu_bar = 0.0;
  MutationStencil stencil;
  std::vector<double> mu;  // mu(z_i)

  double diffusion() const { return 0.5 * params.beta * params.sigma * params.sigma; }

  /// Cell Peclet number of the diffusive operator; centered transport keeps a
  /// positive stencil only while this stays below 1.
  double peclet() const { return std::abs(params.c) * grid.dz() / (2.0 * diffusion()); }
};

/// Kernel scale used by the discrete stencil. Upwind transport behaves like
/// c d/dz + (|c| dz / 2) d^2/dz^2, so with the correction on the stencil
/// variance drops by |c| dz / beta to keep the total diffusion at
/// beta sigma^2 / 2. Falls back to sigma when the reduction would not leave a
/// positive variance.
inline double stencil_scale(const ModelParams& p, double dz) {
  if (!p.upwind_correction || p.c == 0.0) return p.sigma;
  const double v = p.sigma * p.sigma - std::abs(p.c) * dz / p.beta;
  return v > 0.25 * p.sigma * p.sigma ? std::sqrt(v) : p.sigma;
}

inline OperatorContext make_context(const ModelParams& params, const Grid& grid, double mu_bar) {
  if (!std::isfinite(mu_bar)) throw Error(ErrorKind::InvalidConfig, "mean mortality is not finite");
  OperatorContext ctx;
  ctx.params = params;
  ctx.grid = grid;
  ctx.mu_bar = mu_bar;
  ctx.stencil = make_stencil(params.kernel, stencil_scale(params, grid.dz()), grid.dz());
  ctx.mu.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) ctx.mu[i] = params.mu(grid.z(i));
  return ctx;
}

// ---------------------------------------------------------------------------
// Building blocks.
// ---------------------------------------------------------------------------

/// (1/sigma) int K((z - z')/sigma) g(z') dz' with zero extension past the grid.
inline void convolve_into(const MutationStencil& st, std::span<const double> g, std::span<double> out) {
  const std::size_t n = g.size();
  const std::size_t r = st.radius;
  const double* w = st.weights.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k0 = i >= r ? i - r : 0;
    const std::size_t k1 = std::min(n - 1, i + r);
    const double* wi = w + (k0 + r - i);
    double acc = 0.0;
    for (std::size_t k = k0; k <= k1; ++k) acc += wi[k - k0] * g[k];
    out[i] = acc;
  }
}

inline Field convolve_B(const OperatorContext& ctx, const Field& g) {
  Field out(g.grid);
  convolve_into(ctx.stencil, g.values, out.values);
  return out;
}

enum class UpwindSide { FromRight, FromLeft };

/// First-order one-sided difference. FromRight uses (g[i+1]-g[i])/dz, the
/// upwind choice for a term +c dg/dz with c > 0; FromLeft the mirror. The end
/// node without a neighbour on the preferred side uses the other side.
inline Field upwind_dz(const Field& g, UpwindSide side) {
  const std::size_t n = g.size();
  if (n < 3) throw Error(ErrorKind::InvalidConfig, "upwind difference needs at least 3 nodes");
  const double dz = g.grid.dz();
  Field out(g.grid);
  for (std::size_t i = 0; i < n; ++i) {
    const bool forward = side == UpwindSide::FromRight ? i + 1 < n : i == 0;
    out[i] = forward ? (g[i + 1] - g[i]) / dz : (g[i] - g[i - 1]) / dz;
  }
  return out;
}

namespace detail {

// out += a * dv/dz, upwinded for the sign of a, with a zero ghost node on the
// inflow side so that the discrete operator stays a Metzler matrix.
inline void add_transport(double a, std::span<const double> v, double dz, std::span<double> out) {
  const std::size_t n = v.size();
  if (a == 0.0) return;
  const double k = a / dz;
  if (a > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double next = i + 1 < n ? v[i + 1] : 0.0;
      out[i] += k * (next - v[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double prev = i > 0 ? v[i - 1] : 0.0;
      out[i] += k * (v[i] - prev);
    }
  }
}

// Neighbour rates of the diffusive operator: out[i] gets
// up*v[i+1] + down*v[i-1] - (up+down)*v[i] with zero ghosts.
struct DiffusiveCoefficients {
  double up = 0.0;    // weight of v[i+1]
  double down = 0.0;  // weight of v[i-1]
};

// coefficient `a` multiplies d/dz in the operator (a = c for L, -c for L*).
inline DiffusiveCoefficients diffusive_coefficients(const OperatorContext& ctx, double a) {
  const double dz = ctx.grid.dz();
  const double d = ctx.diffusion() / (dz * dz);
  DiffusiveCoefficients k{d, d};
  if (ctx.peclet() < 1.0) {
    k.up += a / (2.0 * dz);
    k.down -= a / (2.0 * dz);
  } else if (a > 0.0) {
    k.up += a / dz;
  } else {
    k.down -= a / dz;
  }
  return k;
}

inline void add_diffusive_transport(const DiffusiveCoefficients& k, std::span<const double> v,
                                    std::span<double> out) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double next = i + 1 < n ? v[i + 1] : 0.0;
    const double prev = i > 0 ? v[i - 1] : 0.0;
    out[i] += k.up * next + k.down * prev - (k.up + k.down) * v[i];
  }
}

inline Field apply_nonlocal(const OperatorContext& ctx, const Field& v, double transport) {
  const double beta = ctx.params.beta;
  Field out(v.grid);
  convolve_into(ctx.stencil, v.values, out.values);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = beta * (out[i] - v[i]) - (ctx.mu[i] - ctx.mu_bar) * v[i];
  }
  add_transport(transport, v.values, ctx.grid.dz(), out.values);
  return out;
}

inline Field apply_diffusive(const OperatorContext& ctx, const Field& v, double transport) {
  Field out(v.grid);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = -(ctx.mu[i] - ctx.mu_bar) * v[i];
  add_diffusive_transport(diffusive_coefficients(ctx, transport), v.values, out.values);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The fraction operator L, its dual L*, and the ancestral generator A.
// ---------------------------------------------------------------------------

/// beta (B v - v) + c dv/dz - (mu - mu_bar) v
inline Field apply_L(const OperatorContext& ctx, const Field& v) {
  return detail::apply_nonlocal(ctx, v, ctx.params.c);
}

/// beta (B v - v) - c dv/dz - (mu - mu_bar) v
inline Field apply_L_star(const OperatorContext& ctx, const Field& v) {
  return detail::apply_nonlocal(ctx, v, -ctx.params.c);
}

/// (beta sigma^2 / 2) v'' + c v' - (mu - mu_bar) v
inline Field apply_L_diffusive(const OperatorContext& ctx, const Field& v) {
  return detail::apply_diffusive(ctx, v, ctx.params.c);
}

inline Field apply_L_star_diffusive(const OperatorContext& ctx, const Field& v) {
  return detail::apply_diffusive(ctx, v, -ctx.params.c);
}

inline Field apply_L(const OperatorContext& ctx, const Field& v, MutationMode mode) {
  return mode == MutationMode::Nonlocal ? apply_L(ctx, v) : apply_L_diffusive(ctx, v);
}

inline Field apply_L_star(const OperatorContext& ctx, const Field& v, MutationMode mode) {
  return mode == MutationMode::Nonlocal ? apply_L_star(ctx, v) : apply_L_star_diffusive(ctx, v);
}

/// Ancestral generator on the positivity window of F:
///   (beta/F) [B(F psi) - (B F) psi] + transport,
/// where the transport term is the upwind jump to the neighbour weighted by
/// F(neighbour)/F, so that A psi = L(F psi)/F - psi L(F)/F holds node by node.
/// Values outside the window are NaN.
inline Field apply_A(const OperatorContext& ctx, const Field& F, const Field& psi,
                     double floor = kDefaultPositivityFloor) {
  const Window win = positivity_window(F, floor);
  const std::size_t n = F.size();
  const double beta = ctx.params.beta;
  const double c = ctx.params.c;
  const double dz = ctx.grid.dz();
  const auto& st = ctx.stencil;
  const std::size_t r = st.radius;
  Field out(F.grid, kNotComputed);
  for (std::size_t i = win.lo; i <= win.hi; ++i) {
    const std::size_t k0 = i >= r ? i - r : 0;
    const std::size_t k1 = std::min(n - 1, i + r);
    double acc = 0.0;
    for (std::size_t k = k0; k <= k1; ++k) {
      acc += st.weights[k + r - i] * F[k] * (psi[k] - psi[i]);
    }
    double value = beta * acc / F[i];
    if (c > 0.0 && i + 1 < n) value += (c / dz) * (F[i + 1] / F[i]) * (psi[i + 1] - psi[i]);
    if (c < 0.0 && i > 0) value += (-c / dz) * (F[i - 1] / F[i]) * (psi[i - 1] - psi[i]);
    out[i] = value;
  }
  return out;
}

/// Diffusive ancestral generator
///   (beta sigma^2/2) psi'' + (beta sigma^2 F'/F + c) psi'
/// in its nearest-neighbour jump form, consistent with apply_L_diffusive.
inline Field apply_A_diffusive(const OperatorContext& ctx, const Field& F, const Field& psi,
                               double floor = kDefaultPositivityFloor) {
  const Window win = positivity_window(F, floor);
  const std::size_t n = F.size();
  const auto k = detail::diffusive_coefficients(ctx, ctx.params.c);
  Field out(F.grid, kNotComputed);
  for (std::size_t i = win.lo; i <= win.hi; ++i) {
    double value = 0.0;
    if (i + 1 < n) value += k.up * F[i + 1] * (psi[i + 1] - psi[i]);
    if (i > 0) value += k.down * F[i - 1] * (psi[i - 1] - psi[i]);
    out[i] = value / F[i];
  }
  return out;
}

inline Field apply_A(const OperatorContext& ctx, const Field& F, const Field& psi, MutationMode mode,
                     double floor = kDefaultPositivityFloor) {
  return mode == MutationMode::Nonlocal ? apply_A(ctx, F, psi, floor)
                                        : apply_A_diffusive(ctx, F, psi, floor);
}

/// Jump-form generator straight from its integral definition,
///   beta sum_h K(h) F(z+sigma h)/F(z) (psi(z+sigma h) - psi(z)) dh + c psi'(z),
/// with F and psi interpolated linearly and the derivative supplied by the
/// caller. Used as an independent cross-check of apply_A.
inline double jump_generator_at(const ModelParams& p, const Field& F, const Field& psi, double z,
                                double dpsi, std::size_t nodes = 4001) {
  const double r = p.kernel.support_radius();
  const double dh = 2.0 * r / static_cast<double>(nodes - 1);
  const double Fz = F.interpolate(z);
  const double pz = psi.interpolate(z);
  double acc = 0.0;
  for (std::size_t j = 0; j < nodes; ++j) {
    const double h = -r + dh * static_cast<double>(j);
    const double w = (j == 0 || j + 1 == nodes) ? 0.5 : 1.0;
    const double y = z + p.sigma * h;
    acc += w * p.kernel.density(h) * F.interpolate(y) * (psi.interpolate(y) - pz);
  }
  return p.beta * acc * dh / Fz + p.c * dpsi;
}

}  // namespace lineagelab
