#pragma once

// Accuracy metrics and a brute-force Jacobi eigensolver. Nothing here
// depends on the reduction code, so it can serve as an independent oracle.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "evd/blas.hpp"
#include "evd/matrix.hpp"

namespace evd {

struct AccuracyReport {
  double backward = 0.0;
  double ortho = 0.0;
  double eps = kEps;
  double slack = 16.0;
  bool bound_ok = false;
};

inline void to_json(nlohmann::json& j, const AccuracyReport& r) {
  j = nlohmann::json{{"backward", r.backward}, {"ortho", r.ortho}, {"eps", r.eps},
                     {"slack", r.slack},       {"bound_ok", r.bound_ok}};
}

/// ||A - Q diag(lambda) Q^T||_F / (n ||A||_F)
inline double backward_error(ConstMatrixView a, ConstMatrixView q, std::span<const double> lambda) {
  const index_t n = a.rows;
  require_shape(a.cols == n && q.rows == n && q.cols == static_cast<index_t>(lambda.size()),
                "backward_error");
  Matrix ql = to_matrix(q);
  for (index_t j = 0; j < ql.cols(); ++j) {
    double* c = ql.col(j);
    for (index_t i = 0; i < n; ++i) c[i] *= lambda[j];
  }
  Matrix r = to_matrix(a);
  gemm(Op::N, Op::T, -1.0, ql.view(), q, 1.0, r.view());
  const double anorm = frobenius_norm(a);
  if (anorm == 0.0) return frobenius_norm(r.view());
  return frobenius_norm(r.view()) / (static_cast<double>(n) * anorm);
}

/// ||I - Q Q^T||_F / n
inline double orthogonality(ConstMatrixView q) {
  require_shape(q.rows == q.cols, "orthogonality");
  const index_t n = q.rows;
  Matrix r = Matrix::identity(n);
  gemm(Op::N, Op::T, -1.0, q, q, 1.0, r.view());
  return frobenius_norm(r.view()) / static_cast<double>(n);
}

inline AccuracyReport accuracy_report(ConstMatrixView a, ConstMatrixView q, std::span<const double> lambda,
                                      double slack = 16.0) {
  AccuracyReport r;
  r.backward = backward_error(a, q, lambda);
  r.ortho = orthogonality(q);
  r.slack = slack;
  r.bound_ok = r.ortho <= 2.0 * r.eps * slack;
  return r;
}

struct JacobiResult {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns match values; empty unless requested
  int sweeps = 0;
};

/// Cyclic Jacobi. Stops once the off-diagonal Frobenius mass is at most
/// 1e-15 * ||A||_F; throws after 100 sweeps.
inline JacobiResult jacobi_eig(ConstMatrixView a_in, bool want_vectors) {
  require_shape(a_in.rows == a_in.cols, "jacobi_eig");
  const index_t n = a_in.rows;
  Matrix a = to_matrix(a_in);
  Matrix v = want_vectors ? Matrix::identity(n) : Matrix();
  const double target = 1e-15 * frobenius_norm(a);
  auto off_norm = [&] {
    double s = 0.0;
    for (index_t j = 0; j < n; ++j)
      for (index_t i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  JacobiResult out;
  int sweep = 0;
  while (off_norm() > target) {
    if (++sweep > 100) throw Error("jacobi_eig: no convergence after 100 sweeps");
    for (index_t p = 0; p < n - 1; ++p) {
      for (index_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (index_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (index_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        if (want_vectors) {
          for (index_t k = 0; k < n; ++k) {
            const double vkp = v(k, p), vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
        }
      }
    }
  }
  out.sweeps = sweep;
  std::vector<index_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](index_t x, index_t y) { return a(x, x) < a(y, y); });
  out.values.resize(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) out.values[i] = a(order[i], order[i]);
  if (want_vectors) {
    out.vectors = Matrix(n, n);
    for (index_t j = 0; j < n; ++j) std::copy_n(v.col(order[j]), n, out.vectors.col(j));
  }
  return out;
}

/// Sorted eigenvalues by cyclic Jacobi; intended for n <= 256.
inline std::vector<double> jacobi_eig_oracle(ConstMatrixView a) { return jacobi_eig(a, false).values; }

struct GemmBoundCheck {
  bool ok = false;
  double metric = 0.0;  // orthogonality of fl(Q1 Q2)
  explicit operator bool() const { return ok; }
};

/// Checks that the product of two orthogonal factors stays orthogonal to
/// 2 * eps * slack (relative, Frobenius bound on the 2-norm). Inputs that are
/// not themselves within the bound fail the check.
inline GemmBoundCheck check_gemm_bounds(ConstMatrixView q1, ConstMatrixView q2, double slack = 16.0) {
  require_shape(q1.rows == q1.cols && q2.rows == q2.cols && q1.cols == q2.rows, "check_gemm_bounds");
  const double limit = 2.0 * kEps * slack;
  GemmBoundCheck r;
  Matrix p = multiply(Op::N, Op::N, q1, q2);
  r.metric = orthogonality(p.view());
  r.ok = orthogonality(q1) <= limit && orthogonality(q2) <= limit && r.metric <= limit;
  return r;
}

}  // namespace evd
