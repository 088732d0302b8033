#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lineagelab/error.hpp"

namespace lineagelab {

/// Square band matrix with kl sub- and ku super-diagonals, row-major band storage.
class BandedMatrix {
 public:
  BandedMatrix() = default;
  BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku)
      : n_(n), kl_(kl), ku_(ku), width_(kl + ku + 1), data_(n * (kl + ku + 1), 0.0) {}

  std::size_t size() const { return n_; }
  std::size_t lower() const { return kl_; }
  std::size_t upper() const { return ku_; }

  bool in_band(std::size_t i, std::size_t j) const { return j + kl_ >= i && j <= i + ku_; }

  double& at(std::size_t i, std::size_t j) { return data_[i * width_ + (j + kl_ - i)]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * width_ + (j + kl_ - i)]; }
  double get(std::size_t i, std::size_t j) const { return in_band(i, j) ? at(i, j) : 0.0; }

  std::size_t col_begin(std::size_t i) const { return i >= kl_ ? i - kl_ : 0; }
  std::size_t col_end(std::size_t i) const { return std::min(n_, i + ku_ + 1); }

  void add_diagonal(double s) {
    for (std::size_t i = 0; i < n_; ++i) at(i, i) += s;
  }

  BandedMatrix transposed() const {
    BandedMatrix t(n_, ku_, kl_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = col_begin(i); j < col_end(i); ++j) t.at(j, i) = at(i, j);
    }
    return t;
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t j = col_begin(i); j < col_end(i); ++j) acc += at(i, j) * x[j];
      y[i] = acc;
    }
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(n_);
    multiply(x, y);
    return y;
  }

  /// Row sums; for a Metzler matrix their maximum bounds the principal eigenvalue.
  double max_row_sum() const {
    double m = -INFINITY;
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t j = col_begin(i); j < col_end(i); ++j) acc += at(i, j);
      m = std::max(m, acc);
    }
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::size_t kl_ = 0;
  std::size_t ku_ = 0;
  std::size_t width_ = 1;
  std::vector<double> data_;
};

/// In-place LU factorization without pivoting. Adequate for the nonsingular
/// M-matrices produced by shifting a Metzler generator past its spectrum.
class BandedLU {
 public:
  explicit BandedLU(BandedMatrix a) : lu_(std::move(a)) {
    const std::size_t n = lu_.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double pivot = lu_.at(k, k);
      if (pivot == 0.0 || !std::isfinite(pivot)) {
        throw Error(ErrorKind::NoConvergence, "zero pivot in banded factorization");
      }
      const std::size_t i_end = std::min(n, k + lu_.lower() + 1);
      const std::size_t j_end = lu_.col_end(k);
      for (std::size_t i = k + 1; i < i_end; ++i) {
        const double l = lu_.at(i, k) / pivot;
        lu_.at(i, k) = l;
        if (l == 0.0) continue;
        for (std::size_t j = k + 1; j < j_end; ++j) lu_.at(i, j) -= l * lu_.at(k, j);
      }
    }
  }

  void solve_in_place(std::span<double> x) const {
    const std::size_t n = lu_.size();
    for (std::size_t i = 0; i < n; ++i) {
      double acc = x[i];
      for (std::size_t j = lu_.col_begin(i); j < i; ++j) acc -= lu_.at(i, j) * x[j];
      x[i] = acc;
    }
    for (std::size_t i = n; i-- > 0;) {
      double acc = x[i];
      for (std::size_t j = i + 1; j < lu_.col_end(i); ++j) acc -= lu_.at(i, j) * x[j];
      x[i] = acc / lu_.at(i, i);
    }
  }

 private:
  BandedMatrix lu_;
};

}  // namespace lineagelab
