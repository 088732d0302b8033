#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "lineagelab/error.hpp"
#include "lineagelab/model.hpp"

namespace lineagelab {

/// A real function sampled on every node of a trait grid.
struct Field {
  Grid grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  Field(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) {
      throw Error(ErrorKind::InvalidConfig, "field length does not match grid size");
    }
  }

  static Field from_function(const Grid& g, const std::function<double(double)>& f) {
    Field out(g);
    for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = f(g.z(i));
    return out;
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double z(std::size_t i) const { return grid.z(i); }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  }

  Field& operator*=(double a) {
    for (double& v : values) v *= a;
    return *this;
  }
  Field& operator+=(const Field& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }

  /// Linear interpolation, zero outside the grid.
  double interpolate(double z) const {
    const double x = z / grid.dz() + static_cast<double>(grid.zero_index());
    if (x < 0.0 || x > static_cast<double>(size() - 1)) return 0.0;
    const auto i = std::min(static_cast<std::size_t>(x), size() - 2);
    const double t = x - static_cast<double>(i);
    return (1.0 - t) * values[i] + t * values[i + 1];
  }

  /// Mirror image v(-z) on the reflected grid.
  Field reflected() const {
    Field out(grid.reflected());
    std::reverse_copy(values.begin(), values.end(), out.values.begin());
    return out;
  }
};

inline Field operator*(double a, Field f) { return f *= a; }
inline Field operator+(Field a, const Field& b) { return a += b; }
inline Field operator-(Field a, const Field& b) { return a -= b; }

inline Field pointwise_product(const Field& a, const Field& b) {
  Field out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// Trapezoid rule over the whole grid.
inline double integrate(std::span<const double> v, double dz) {
  if (v.empty()) return 0.0;
  double acc = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) acc += v[i];
  return acc * dz;
}

inline double integrate(const Field& f) { return integrate(f.values, f.grid.dz()); }

inline double l1_distance(const Field& a, const Field& b) {
  Field d(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i] - b[i]);
  return integrate(d);
}

inline double l1_norm(const Field& a) {
  Field d(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i]);
  return integrate(d);
}

struct Moments {
  double mass = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

inline Moments moments(const Field& f) {
  Moments m;
  m.mass = integrate(f);
  if (m.mass == 0.0) return m;
  Field w(f.grid);
  for (std::size_t i = 0; i < f.size(); ++i) w[i] = f.z(i) * f[i];
  m.mean = integrate(w) / m.mass;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = f.z(i) - m.mean;
    w[i] = d * d * f[i];
  }
  m.variance = integrate(w) / m.mass;
  return m;
}

// ---------------------------------------------------------------------------
// Positivity window: the contiguous run of nodes around argmax F on which
// F >= floor * max F. Divisions by F are only performed there.
// ---------------------------------------------------------------------------

inline constexpr double kDefaultPositivityFloor = 1e-12;

struct Window {
  std::size_t lo = 0;
  std::size_t hi = 0;  // inclusive

  bool contains(std::size_t i) const { return i >= lo && i <= hi; }
  std::size_t size() const { return hi - lo + 1; }
};

inline Window positivity_window(const Field& F, double floor = kDefaultPositivityFloor) {
  if (F.size() == 0) throw Error(ErrorKind::DegenerateWeight, "empty weight field");
  const std::size_t peak = F.argmax();
  const double top = F[peak];
  if (!(top > 0.0) || !std::isfinite(top)) {
    throw Error(ErrorKind::DegenerateWeight, "weight field has no positive maximum");
  }
  const double cut = floor * top;
  Window w{peak, peak};
  while (w.lo > 0 && F[w.lo - 1] >= cut && F[w.lo - 1] > 0.0) --w.lo;
  while (w.hi + 1 < F.size() && F[w.hi + 1] >= cut && F[w.hi + 1] > 0.0) ++w.hi;
  if (w.size() < 3) throw Error(ErrorKind::DegenerateWeight, "positivity window has fewer than 3 nodes");
  return w;
}

inline constexpr double kNotComputed = std::numeric_limits<double>::quiet_NaN();

}  // namespace lineagelab
