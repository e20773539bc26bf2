#pragma once

// Symmetric tridiagonal eigensolver: implicit QL with Wilkinson-style
// shifts, the tql2 scheme from EISPACK. Eigenvectors are accumulated as
// Givens rotations into an identity start, so they are the eigenvectors of
// T itself (Q_d).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "evd/band.hpp"
#include "evd/matrix.hpp"

namespace evd {

class NumericalError : public Error {
 public:
  using Error::Error;
};

struct EigenResult {
  std::vector<double> lambda;  // ascending
  std::optional<Matrix> q;     // columns match lambda
  bool vectors_computed = false;
};

/// Flips each column so its largest-magnitude entry is positive (first one
/// wins a tie).
inline void normalize_signs(Matrix& q) {
  for (index_t j = 0; j < q.cols(); ++j) {
    double* c = q.col(j);
    index_t arg = 0;
    for (index_t i = 1; i < q.rows(); ++i)
      if (std::abs(c[i]) > std::abs(c[arg])) arg = i;
    if (c[arg] < 0.0)
      for (index_t i = 0; i < q.rows(); ++i) c[i] = -c[i];
  }
}

/// Eigen-decomposition of T. Throws NumericalError on non-finite input or
/// after 30 n QL iterations without convergence. No n x n storage is touched
/// when vectors are not wanted.
inline EigenResult tridiag_eig(const TridiagonalMatrix& t, bool want_vectors) {
  if (!t.valid()) throw ShapeError("tridiag_eig: need d of size n >= 1 and e of size n - 1");
  const index_t n = t.n();
  for (double x : t.d)
    if (!std::isfinite(x)) throw NumericalError("tridiag_eig: non-finite diagonal");
  for (double x : t.e)
    if (!std::isfinite(x)) throw NumericalError("tridiag_eig: non-finite off-diagonal");

  std::vector<double> d = t.d;
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  std::copy(t.e.begin(), t.e.end(), e.begin());
  Matrix v = want_vectors ? Matrix::identity(n) : Matrix();

  const index_t max_iter = 30 * n;
  index_t iters = 0;
  double f = 0.0, tst1 = 0.0;
  for (index_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    index_t m = l;
    while (m < n - 1 && std::abs(e[m]) > kEps * tst1) ++m;
    if (m > l) {
      do {
        if (++iters > max_iter) throw NumericalError("tridiag_eig: no convergence within 30n iterations");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (index_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0, s = 0.0, s2 = 0.0;
        const double el1 = e[l + 1];
        for (index_t i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          if (want_vectors) {
            double* vi = v.col(i);
            double* vi1 = v.col(i + 1);
            for (index_t k = 0; k < n; ++k) {
              const double hk = vi1[k];
              vi1[k] = s * vi[k] + c * hk;
              vi[k] = c * vi[k] - s * hk;
            }
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > kEps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
  for (double x : d)
    if (!std::isfinite(x)) throw NumericalError("tridiag_eig: eigenvalue overflow");

  std::vector<index_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](index_t a, index_t b) { return d[a] < d[b]; });
  EigenResult out;
  out.lambda.resize(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) out.lambda[i] = d[order[i]];
  if (want_vectors) {
    Matrix q(n, n);
    for (index_t j = 0; j < n; ++j) std::copy_n(v.col(order[j]), n, q.col(j));
    normalize_signs(q);
    out.q = std::move(q);
    out.vectors_computed = true;
  }
  return out;
}

}  // namespace evd
