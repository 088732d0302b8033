#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lineagelab/error.hpp"

namespace lineagelab {

inline constexpr double kSqrt3 = 1.7320508075688772;

// ---------------------------------------------------------------------------
// Selection: even, convex, m(0) = 0, confining.
// ---------------------------------------------------------------------------

struct SelectionSpec {
  enum class Kind { Quadratic, Power, CoshMinusOne };

  Kind kind = Kind::Quadratic;
  double alpha = 1.0;  // quadratic curvature
  int q = 2;           // even exponent for Power
  double scale = 1.0;  // CoshMinusOne rate

  static SelectionSpec quadratic(double alpha) { return {Kind::Quadratic, alpha, 2, 1.0}; }
  static SelectionSpec power(int q) { return {Kind::Power, 1.0, q, 1.0}; }
  static SelectionSpec cosh_minus_one(double scale) { return {Kind::CoshMinusOne, 1.0, 2, scale}; }

  /// Mortality increment m(z).
  double m(double z) const {
    switch (kind) {
      case Kind::Quadratic: return 0.5 * alpha * z * z;
      case Kind::Power: return std::pow(std::abs(z), q) / q;
      case Kind::CoshMinusOne: return std::cosh(scale * z) - 1.0;
    }
    return 0.0;
  }

  double dm(double z) const {
    switch (kind) {
      case Kind::Quadratic: return alpha * z;
      case Kind::Power: return std::pow(std::abs(z), q - 1) * (z < 0 ? -1.0 : 1.0);
      case Kind::CoshMinusOne: return scale * std::sinh(scale * z);
    }
    return 0.0;
  }

  /// Curvature at the optimum, m''(0). Zero for Power with q > 2.
  double curvature_at_optimum() const {
    switch (kind) {
      case Kind::Quadratic: return alpha;
      case Kind::Power: return q == 2 ? 1.0 : 0.0;
      case Kind::CoshMinusOne: return scale * scale;
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Quadratic: return "quadratic";
      case Kind::Power: return "power";
      case Kind::CoshMinusOne: return "cosh_minus_one";
    }
    return "?";
  }
};

// ---------------------------------------------------------------------------
// Mutation kernel, standardized to unit mass and unit variance.
// ---------------------------------------------------------------------------

struct KernelSpec {
  enum class Kind { Gaussian, Uniform };

  Kind kind = Kind::Gaussian;

  static KernelSpec gaussian() { return {Kind::Gaussian}; }
  static KernelSpec uniform() { return {Kind::Uniform}; }

  double density(double h) const {
    if (kind == Kind::Gaussian) {
      return std::exp(-0.5 * h * h) / std::sqrt(2.0 * std::numbers::pi);
    }
    return std::abs(h) <= kSqrt3 ? 1.0 / (2.0 * kSqrt3) : 0.0;
  }

  /// P(H > h), computed without cancellation in the upper tail.
  double upper_tail(double h) const {
    if (kind == Kind::Gaussian) return 0.5 * std::erfc(h / std::numbers::sqrt2);
    if (h <= -kSqrt3) return 1.0;
    if (h >= kSqrt3) return 0.0;
    return (kSqrt3 - h) / (2.0 * kSqrt3);
  }

  /// Probability mass of [a, b].
  double mass(double a, double b) const {
    if (b <= a) return 0.0;
    if (a >= 0.0) return upper_tail(a) - upper_tail(b);
    if (b <= 0.0) return upper_tail(-b) - upper_tail(-a);
    return 1.0 - upper_tail(b) - upper_tail(-a);
  }

  /// Radius beyond which the kernel is treated as zero.
  double support_radius() const { return kind == Kind::Gaussian ? 8.0 : kSqrt3; }

  template <class Rng>
  double sample(Rng& rng) const {
    if (kind == Kind::Gaussian) return std::normal_distribution<double>(0.0, 1.0)(rng);
    return std::uniform_real_distribution<double>(-kSqrt3, kSqrt3)(rng);
  }

  std::string name() const { return kind == Kind::Gaussian ? "gaussian" : "uniform"; }
};

// ---------------------------------------------------------------------------
// Uniform trait grid that always contains z = 0 as a node.
// ---------------------------------------------------------------------------

class Grid {
 public:
  Grid() = default;

  Grid(double z_min, double z_max, std::size_t n) : z_min_(z_min), z_max_(z_max), n_(n) {
    if (!(z_min < 0.0 && 0.0 < z_max)) {
      throw ConfigError("grid", "grid bounds must satisfy z_min < 0 < z_max");
    }
    if (n < 3) throw ConfigError("grid.n", "grid needs at least 3 points");
    dz_ = (z_max - z_min) / static_cast<double>(n - 1);
    const double k = -z_min / dz_;
    zero_ = static_cast<std::size_t>(std::llround(k));
    if (std::abs(k - static_cast<double>(zero_)) > 1e-6) {
      throw ConfigError("grid", "grid spacing does not place a node at z = 0");
    }
  }

  /// Mirror image [-z_max, -z_min] with the same spacing.
  Grid reflected() const { return Grid(-z_max_, -z_min_, n_); }

  double z(std::size_t i) const {
    return (static_cast<double>(i) - static_cast<double>(zero_)) * dz_;
  }
  std::size_t size() const { return n_; }
  double dz() const { return dz_; }
  double z_min() const { return z_min_; }
  double z_max() const { return z_max_; }
  double width() const { return z_max_ - z_min_; }
  std::size_t zero_index() const { return zero_; }

  /// Nearest node index, clamped to the grid.
  std::size_t index_of(double z) const {
    const double k = std::round(z / dz_) + static_cast<double>(zero_);
    if (k <= 0.0) return 0;
    if (k >= static_cast<double>(n_ - 1)) return n_ - 1;
    return static_cast<std::size_t>(k);
  }

  bool symmetric() const { return 2 * zero_ + 1 == n_; }

  std::vector<double> nodes() const {
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = z(i);
    return out;
  }

 private:
  double z_min_ = -3.0;
  double z_max_ = 3.0;
  std::size_t n_ = 0;
  double dz_ = 0.0;
  std::size_t zero_ = 0;
};

// ---------------------------------------------------------------------------
// Biological constants.
// ---------------------------------------------------------------------------

struct ModelParams {
  double beta = 2.0;   // birth rate
  double mu0 = 1.0;    // baseline mortality
  SelectionSpec selection = SelectionSpec::quadratic(1.0);
  KernelSpec kernel = KernelSpec::gaussian();
  double sigma = 0.1;  // mutation scale
  double c = 0.0;      // speed of the optimum
  // Narrow the discrete mutation stencil so that it absorbs the numerical
  // diffusion |c| dz / 2 of upwind transport.
  bool upwind_correction = true;

  double mu(double z) const { return mu0 + selection.m(z); }
};

inline double eval_mu(const ModelParams& params, double z) { return params.mu(z); }

inline double kernel_density(const KernelSpec& spec, double h) { return spec.density(h); }

// ---------------------------------------------------------------------------
// Validation.
// ---------------------------------------------------------------------------

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }

  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks) {
      if (!c.passed) out.push_back(c.detail.empty() ? c.name : c.detail);
    }
    return out;
  }
};

namespace detail {

// Composite Simpson rule of h^power * K(h) over the kernel support.
inline double kernel_moment(const KernelSpec& k, int power, std::size_t intervals = 8000) {
  const double r = k.support_radius();
  const double h = 2.0 * r / static_cast<double>(intervals);
  double acc = 0.0;
  for (std::size_t i = 0; i <= intervals; ++i) {
    const double y = -r + h * static_cast<double>(i);
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * std::pow(y, power) * k.density(y);
  }
  return acc * h / 3.0;
}

}  // namespace detail

inline ValidationReport validate(const ModelParams& p) {
  ValidationReport r;
  auto add = [&](std::string name, bool ok, double measured, std::string detail) {
    r.checks.push_back({std::move(name), ok, measured, ok ? std::string() : std::move(detail)});
  };

  add("beta > mu0", p.beta > p.mu0, p.beta - p.mu0, "beta > mu0 violated");
  add("sigma > 0", p.sigma > 0.0 && std::isfinite(p.sigma), p.sigma, "sigma > 0 violated");
  add("c finite", std::isfinite(p.c), p.c, "c must be finite");

  const auto& s = p.selection;
  switch (s.kind) {
    case SelectionSpec::Kind::Quadratic:
      add("alpha > 0", s.alpha > 0.0, s.alpha, "quadratic selection needs alpha > 0");
      break;
    case SelectionSpec::Kind::Power:
      add("q even >= 2", s.q >= 2 && s.q % 2 == 0, s.q, "power selection needs an even q >= 2");
      break;
    case SelectionSpec::Kind::CoshMinusOne:
      add("scale > 0", s.scale > 0.0, s.scale, "cosh_minus_one selection needs scale > 0");
      break;
  }
  add("m(0) = 0", s.m(0.0) == 0.0, s.m(0.0), "selection must vanish at the optimum");

  const double mass = detail::kernel_moment(p.kernel, 0);
  const double second = detail::kernel_moment(p.kernel, 2);
  add("kernel mass", std::abs(mass - 1.0) <= 1e-8, mass, "kernel mass differs from 1 by more than 1e-8");
  add("kernel second moment", std::abs(second - 1.0) <= 1e-8, second,
      "kernel second moment differs from 1 by more than 1e-8");
  return r;
}

}  // namespace lineagelab
