#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "evd/matrix.hpp"

namespace evd {

enum class Op { N, T };
enum class Side { Left, Right };

/// Cache tile used by the blocked kernels.
inline constexpr index_t kTile = 64;

namespace detail {

inline Matrix transpose_of(ConstMatrixView a) {
  Matrix t(a.cols, a.rows);
  for (index_t j = 0; j < a.cols; ++j) {
    const double* src = a.col(j);
    for (index_t i = 0; i < a.rows; ++i) t(j, i) = src[i];
  }
  return t;
}

// C += A * op(B) with A untransposed. B is read as B(p, j) or B(j, p).
template <bool TransB>
inline void gemm_acc(double alpha, ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  const index_t m = c.rows, n = c.cols, k = a.cols;
  constexpr index_t kRowTile = 4 * kTile;
  constexpr index_t kDepthTile = 2 * kTile;
  auto bval = [&](index_t p, index_t j) { return TransB ? b(j, p) : b(p, j); };
  for (index_t ib = 0; ib < m; ib += kRowTile) {
    const index_t ie = std::min(m, ib + kRowTile);
    const index_t len = ie - ib;
    for (index_t pb = 0; pb < k; pb += kDepthTile) {
      const index_t pe = std::min(k, pb + kDepthTile);
      index_t j = 0;
      for (; j + 4 <= n; j += 4) {
        double* c0 = c.col(j) + ib;
        double* c1 = c.col(j + 1) + ib;
        double* c2 = c.col(j + 2) + ib;
        double* c3 = c.col(j + 3) + ib;
        for (index_t p = pb; p < pe; ++p) {
          const double* ap = a.col(p) + ib;
          const double b0 = alpha * bval(p, j), b1 = alpha * bval(p, j + 1);
          const double b2 = alpha * bval(p, j + 2), b3 = alpha * bval(p, j + 3);
          for (index_t i = 0; i < len; ++i) {
            const double av = ap[i];
            c0[i] += av * b0;
            c1[i] += av * b1;
            c2[i] += av * b2;
            c3[i] += av * b3;
          }
        }
      }
      for (; j < n; ++j) {
        double* cj = c.col(j) + ib;
        for (index_t p = pb; p < pe; ++p) {
          const double* ap = a.col(p) + ib;
          const double bv = alpha * bval(p, j);
          for (index_t i = 0; i < len; ++i) cj[i] += ap[i] * bv;
        }
      }
    }
  }
}

}  // namespace detail

/// C <- alpha * op(A) * op(B) + beta * C. Multiply-adds charged as m*n*k.
inline void gemm(Op ta, Op tb, double alpha, ConstMatrixView a, ConstMatrixView b, double beta,
                 MatrixView c, const Charge& charge = {}) {
  const index_t am = ta == Op::N ? a.rows : a.cols;
  const index_t ak = ta == Op::N ? a.cols : a.rows;
  const index_t bk = tb == Op::N ? b.rows : b.cols;
  const index_t bn = tb == Op::N ? b.cols : b.rows;
  require_shape(am == c.rows && bn == c.cols && ak == bk, "gemm");
  if (beta != 1.0) {
    for (index_t j = 0; j < c.cols; ++j) {
      double* cj = c.col(j);
      if (beta == 0.0)
        std::fill_n(cj, c.rows, 0.0);
      else
        for (index_t i = 0; i < c.rows; ++i) cj[i] *= beta;
    }
  }
  if (am == 0 || bn == 0 || ak == 0 || alpha == 0.0) return;
  if (ta == Op::N) {
    if (tb == Op::N)
      detail::gemm_acc<false>(alpha, a, b, c);
    else
      detail::gemm_acc<true>(alpha, a, b, c);
  } else {
    // Pack op(A) once; its cost is lower order against m*n*k.
    Matrix at = detail::transpose_of(a);
    if (tb == Op::N)
      detail::gemm_acc<false>(alpha, at.view(), b, c);
    else
      detail::gemm_acc<true>(alpha, at.view(), b, c);
  }
  charge(static_cast<std::uint64_t>(am) * bn * ak);
}

inline Matrix multiply(Op ta, Op tb, ConstMatrixView a, ConstMatrixView b, const Charge& charge = {}) {
  const index_t m = ta == Op::N ? a.rows : a.cols;
  const index_t n = tb == Op::N ? b.cols : b.rows;
  Matrix c(m, n);
  gemm(ta, tb, 1.0, a, b, 0.0, c.view(), charge);
  return c;
}

/// Exact product with accounting: counter grows by m*n*k.
inline Matrix matmul_counted(ConstMatrixView a, ConstMatrixView b, FlopCounter& counter,
                             const std::string& stage = "gemm") {
  require_shape(a.cols == b.rows, "matmul_counted");
  return multiply(Op::N, Op::N, a, b, Charge{&counter, stage});
}

// ---------------------------------------------------------------------------
// Householder reflectors

struct Householder {
  std::vector<double> v;  // v[0] == 1
  double tau = 0.0;
  double alpha = 0.0;
};

/// In-place reflector generation. On entry head/tail hold x; on exit head
/// holds alpha and tail holds v(1:) (v(0) = 1 implicitly). Returns tau.
///
/// alpha = -sign(x0) * ||x||, sign(0) = +1. When the tail is already zero
/// the reflector is the identity (tau = 0) and alpha = x0.
inline double make_householder(index_t len, double& head, double* tail, index_t inc = 1) {
  if (len <= 1) return 0.0;
  double amax = 0.0;
  for (index_t i = 0; i < len - 1; ++i) amax = std::max(amax, std::abs(tail[i * inc]));
  if (amax == 0.0) return 0.0;
  double ssq = 0.0;
  for (index_t i = 0; i < len - 1; ++i) {
    const double t = tail[i * inc] / amax;
    ssq += t * t;
  }
  const double tail_norm = amax * std::sqrt(ssq);
  const double norm = std::hypot(head, tail_norm);
  const double alpha = head >= 0.0 ? -norm : norm;
  const double tau = (alpha - head) / alpha;
  const double scale = 1.0 / (head - alpha);
  for (index_t i = 0; i < len - 1; ++i) tail[i * inc] *= scale;
  head = alpha;
  return tau;
}

inline Householder house_vector(std::span<const double> x) {
  Householder h;
  h.v.assign(x.begin(), x.end());
  if (h.v.empty()) return h;
  double head = h.v[0];
  const index_t len = static_cast<index_t>(h.v.size());
  if (len == 1) {
    h.alpha = head;
    h.v[0] = 1.0;
    return h;
  }
  h.tau = make_householder(len, head, h.v.data() + 1);
  h.alpha = head;
  h.v[0] = 1.0;
  if (h.tau == 0.0) std::fill(h.v.begin() + 1, h.v.end(), 0.0);
  return h;
}

/// C <- (I - tau v v^T) C
inline void apply_householder_left(std::span<const double> v, double tau, MatrixView c,
                                   const Charge& charge = {}) {
  require_shape(static_cast<index_t>(v.size()) == c.rows, "apply_householder_left");
  if (tau == 0.0) return;
  const index_t len = c.rows;
  for (index_t j = 0; j < c.cols; ++j) {
    double* cj = c.col(j);
    double s = 0.0;
    for (index_t i = 0; i < len; ++i) s += v[i] * cj[i];
    s *= tau;
    for (index_t i = 0; i < len; ++i) cj[i] -= s * v[i];
  }
  charge(2 * static_cast<std::uint64_t>(len) * c.cols);
}

/// C <- C (I - tau v v^T)
inline void apply_householder_right(std::span<const double> v, double tau, MatrixView c,
                                    const Charge& charge = {}) {
  require_shape(static_cast<index_t>(v.size()) == c.cols, "apply_householder_right");
  if (tau == 0.0) return;
  std::vector<double> w(static_cast<std::size_t>(c.rows), 0.0);
  for (index_t l = 0; l < c.cols; ++l) {
    const double* cl = c.col(l);
    const double vl = v[l];
    for (index_t i = 0; i < c.rows; ++i) w[i] += cl[i] * vl;
  }
  for (index_t l = 0; l < c.cols; ++l) {
    double* cl = c.col(l);
    const double f = tau * v[l];
    for (index_t i = 0; i < c.rows; ++i) cl[i] -= w[i] * f;
  }
  charge(2 * static_cast<std::uint64_t>(c.rows) * c.cols);
}

/// Returns op(I - W Y^T) applied from the given side. transpose=true uses
/// (I - W Y^T)^T = I - Y W^T.
inline Matrix apply_block_reflector(ConstMatrixView c, ConstMatrixView w, ConstMatrixView y, Side side,
                                    bool transpose, const Charge& charge = {}) {
  require_shape(w.rows == y.rows && w.cols == y.cols, "apply_block_reflector W/Y");
  const index_t order = side == Side::Left ? c.rows : c.cols;
  require_shape(w.rows == order, "apply_block_reflector C");
  Matrix out = to_matrix(c);
  if (w.cols == 0 || order == 0) return out;
  // Left:  C - W (Y^T C)   or  C - Y (W^T C)
  // Right: C - (C W) Y^T   or  C - (C Y) W^T
  ConstMatrixView first = transpose ? w : y;
  ConstMatrixView second = transpose ? y : w;
  if (side == Side::Left) {
    Matrix t = multiply(Op::T, Op::N, first, c, charge);
    gemm(Op::N, Op::N, -1.0, second, t.view(), 1.0, out.view(), charge);
  } else {
    Matrix t = multiply(Op::N, Op::N, c, second, charge);
    gemm(Op::N, Op::T, -1.0, t.view(), first, 1.0, out.view(), charge);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rank-2k updates

/// A(:, c) -= sum_l (Y(:, l) Z(g, l) + Z(:, l) Y(g, l)) with g = col_offset + c.
/// Each entry accumulates (y_i z_g + z_i y_g) term by term, which is
/// invariant under swapping i and g, so entries computed on different
/// workers from mirrored data agree bit for bit.
///
/// With lower_only, column c only needs rows >= g; rows above that inside
/// the same 4-column group are still written and must be overwritten by the
/// caller's mirror step.
inline void rank2k_columns(MatrixView a, ConstMatrixView y, ConstMatrixView z, index_t col_offset,
                           bool lower_only, const Charge& charge = {}) {
  require_shape(y.rows == a.rows && z.rows == a.rows && y.cols == z.cols, "rank2k_columns");
  require_shape(col_offset >= 0 && col_offset + a.cols <= a.rows, "rank2k_columns offset");
  const index_t m = a.rows, k = y.cols;
  constexpr index_t kRowTile = 4 * kTile;
  std::array<std::vector<double>, 4> acc;
  for (auto& v : acc) v.resize(kRowTile);
  std::uint64_t work = 0;
  for (index_t c = 0; c < a.cols; c += 4) {
    const index_t group = std::min<index_t>(4, a.cols - c);
    const index_t row_begin = lower_only ? col_offset + c : 0;
    for (index_t g = 0; g < group; ++g)
      work += 2 * static_cast<std::uint64_t>(k) * (m - (lower_only ? col_offset + c + g : 0));
    for (index_t ib = row_begin; ib < m; ib += kRowTile) {
      const index_t len = std::min(kRowTile, m - ib);
      for (index_t g = 0; g < group; ++g) std::fill_n(acc[g].data(), len, 0.0);
      for (index_t l = 0; l < k; ++l) {
        const double* yl = y.col(l) + ib;
        const double* zl = z.col(l) + ib;
        for (index_t g = 0; g < group; ++g) {
          const index_t gc = col_offset + c + g;
          const double zg = z(gc, l), yg = y(gc, l);
          double* ag = acc[g].data();
          for (index_t i = 0; i < len; ++i) ag[i] += (yl[i] * zg + zl[i] * yg);
        }
      }
      for (index_t g = 0; g < group; ++g) {
        double* dst = a.col(c + g) + ib;
        const double* src = acc[g].data();
        for (index_t i = 0; i < len; ++i) dst[i] -= src[i];
      }
    }
  }
  charge(work);
}

/// A2 <- A2 - Y Z^T - Z Y^T. Computes the lower triangle and mirrors it, so
/// the result is exactly symmetric.
inline void sym_rank2k_update(MatrixView a2, ConstMatrixView y, ConstMatrixView z,
                              const Charge& charge = {}) {
  require_shape(a2.rows == a2.cols, "sym_rank2k_update square");
  require_shape(y.rows == a2.rows && z.rows == a2.rows && y.cols == z.cols, "sym_rank2k_update");
  rank2k_columns(a2, y, z, 0, true, charge);
  for (index_t j = 0; j < a2.cols; ++j)
    for (index_t i = j + 1; i < a2.rows; ++i) a2(j, i) = a2(i, j);
}

}  // namespace evd
