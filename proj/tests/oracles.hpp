#pragma once

// Test-side reference computations. Deliberately naive: triple loops and
// explicit dense matrices, sharing no kernels with the library.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "evd/matrix.hpp"

namespace oracle {

using evd::index_t;
using evd::Matrix;

inline Matrix random_matrix(index_t r, index_t c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (index_t j = 0; j < c; ++j)
    for (index_t i = 0; i < r; ++i) m(i, j) = u(gen);
  return m;
}

inline Matrix random_symmetric(index_t n, std::uint64_t seed) {
  Matrix m = random_matrix(n, n, seed);
  for (index_t j = 0; j < n; ++j)
    for (index_t i = 0; i < j; ++i) m(i, j) = m(j, i);
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (index_t i = 0; i < a.rows(); ++i)
    for (index_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (index_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (index_t j = 0; j < a.cols(); ++j)
    for (index_t i = 0; i < a.rows(); ++i) t(j, i) = a(i, j);
  return t;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  for (index_t j = 0; j < a.cols(); ++j)
    for (index_t i = 0; i < a.rows(); ++i) c(i, j) -= b(i, j);
  return c;
}

/// I - tau v v^T as an explicit n x n matrix.
inline Matrix reflector(const std::vector<double>& v, double tau) {
  const auto n = static_cast<index_t>(v.size());
  Matrix h = Matrix::identity(n);
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j < n; ++j) h(i, j) -= tau * v[i] * v[j];
  return h;
}

/// Reflector acting on rows [row0, row0 + len) of an n-dimensional space.
inline Matrix embedded_reflector(index_t n, index_t row0, const std::vector<double>& v, double tau) {
  Matrix h = Matrix::identity(n);
  Matrix small = reflector(v, tau);
  for (index_t i = 0; i < small.rows(); ++i)
    for (index_t j = 0; j < small.cols(); ++j) h(row0 + i, row0 + j) = small(i, j);
  return h;
}

inline double frob(const Matrix& a) {
  long double s = 0;
  for (double x : a.values()) s += static_cast<long double>(x) * x;
  return std::sqrt(static_cast<double>(s));
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0;
  for (index_t j = 0; j < a.cols(); ++j)
    for (index_t i = 0; i < a.rows(); ++i) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

/// ||Q^T Q - I||_F
inline double ortho_residual(const Matrix& q) {
  Matrix r = matmul(transpose(q), q);
  for (index_t i = 0; i < r.rows(); ++i) r(i, i) -= 1.0;
  return frob(r);
}

/// Largest singular value bound used as ||A||_2 in tolerances: ||A||_F.
inline double norm2_bound(const Matrix& a) { return frob(a); }

}  // namespace oracle
