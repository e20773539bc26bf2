#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "evd/matrix.hpp"

namespace evd {

/// Symmetric band matrix, lower compact storage: entry (j + d, j) for
/// d in [0, b] lives at bands[d + j * (b + 1)].
class BandMatrix {
 public:
  BandMatrix() = default;
  BandMatrix(index_t n, index_t b) : n_(n), b_(b), bands_(static_cast<std::size_t>(n * (b + 1)), 0.0) {
    if (n < 1 || b < 0) throw ShapeError("band matrix needs n >= 1 and b >= 0");
  }

  /// Copies the band of a dense symmetric matrix after checking that
  /// nothing outside it exceeds tol; off-band entries are dropped.
  static BandMatrix from_dense(ConstMatrixView a, index_t b, double tol) {
    require_shape(a.rows == a.cols, "BandMatrix::from_dense");
    BandMatrix out(a.rows, std::min<index_t>(b, std::max<index_t>(a.rows - 1, 0)));
    for (index_t j = 0; j < a.cols; ++j)
      for (index_t i = j; i < a.rows; ++i) {
        if (i - j <= b)
          out.lower(i, j) = a(i, j);
        else if (std::abs(a(i, j)) > tol)
          throw Error("BandMatrix::from_dense: off-band entry exceeds tolerance");
      }
    return out;
  }

  index_t n() const { return n_; }
  index_t bandwidth() const { return b_; }

  /// Requires i >= j and i - j <= b.
  double& lower(index_t i, index_t j) { return bands_[(i - j) + j * (b_ + 1)]; }
  double lower(index_t i, index_t j) const { return bands_[(i - j) + j * (b_ + 1)]; }

  double operator()(index_t i, index_t j) const {
    if (i < j) std::swap(i, j);
    return i - j > b_ ? 0.0 : lower(i, j);
  }

  Matrix to_dense() const {
    Matrix a(n_, n_);
    for (index_t j = 0; j < n_; ++j)
      for (index_t i = j; i < std::min(n_, j + b_ + 1); ++i) a(i, j) = a(j, i) = lower(i, j);
    return a;
  }

  double frobenius() const { return frobenius_norm(to_dense()); }

 private:
  index_t n_ = 0;
  index_t b_ = 0;
  std::vector<double> bands_;
};

struct TridiagonalMatrix {
  std::vector<double> d;  // n
  std::vector<double> e;  // n - 1

  index_t n() const { return static_cast<index_t>(d.size()); }

  bool valid() const { return !d.empty() && e.size() + 1 == d.size(); }

  Matrix to_dense() const {
    const index_t n = this->n();
    Matrix a(n, n);
    for (index_t i = 0; i < n; ++i) a(i, i) = d[i];
    for (index_t i = 0; i + 1 < n; ++i) a(i + 1, i) = a(i, i + 1) = e[i];
    return a;
  }

  /// Upper bound on ||T||_2 (max absolute row sum).
  double norm_bound() const {
    double m = 0.0;
    const index_t n = this->n();
    for (index_t i = 0; i < n; ++i) {
      double s = std::abs(d[i]);
      if (i > 0) s += std::abs(e[i - 1]);
      if (i + 1 < n) s += std::abs(e[i]);
      m = std::max(m, s);
    }
    return m;
  }
};

}  // namespace evd
