#pragma once

// Successive band reduction: dense symmetric -> band of semi-bandwidth b,
// one Householder panel at a time, trailing matrix updated in ZY form:
//
//   Z  = A W - 1/2 Y (W^T A W)
//   A2 = A2 - Y Z^T - Z Y^T

#include <algorithm>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "evd/band.hpp"
#include "evd/blas.hpp"
#include "evd/matrix.hpp"

namespace evd {

struct SbrConfig {
  index_t b = 32;           // target semi-bandwidth, also the panel width
  index_t inner_block = 8;  // panel factorization is blocked at this width

  void validate(index_t n) const {
    if (b < 1 || b >= n) throw Error("SbrConfig: need 1 <= b < n");
    if (inner_block < 1) throw Error("SbrConfig: inner_block must be >= 1");
  }
};

/// Factors of one panel: the panel's reflectors compose to I - W Y^T.
/// They act on global rows [row_offset, row_offset + W.rows()).
struct ReflectorPanel {
  Matrix w;
  Matrix y;
  std::optional<Matrix> z;
  index_t col_offset = 0;
  index_t row_offset = 0;

  index_t rows() const { return w.rows(); }
  index_t width() const { return w.cols(); }
};

struct SbrFactors {
  index_t n = 0;
  index_t b = 0;
  std::vector<ReflectorPanel> panels;  // ascending col_offset

  index_t total_width() const {
    index_t s = 0;
    for (const auto& p : panels) s += p.width();
    return s;
  }

  /// Panels are ordered, contiguous, and cover columns [0, n - b).
  bool complete() const {
    index_t c = 0;
    for (const auto& p : panels) {
      if (p.col_offset != c || p.row_offset != c + b || p.rows() != n - c - b) return false;
      c += p.width();
    }
    return c == std::max<index_t>(n - b, 0);
  }
};

struct PanelSpan {
  index_t col = 0;    // first panel column
  index_t width = 0;  // number of panel columns
};

/// Panel schedule for order n and bandwidth b. A panel never crosses an
/// entry of `breaks` (worker block boundaries), so the last panel of a block
/// may be narrower than b.
inline std::vector<PanelSpan> plan_panels(index_t n, index_t b, std::span<const index_t> breaks = {}) {
  std::vector<PanelSpan> out;
  index_t c = 0;
  while (c < n - b) {
    index_t k = std::min(b, n - b - c);
    for (index_t brk : breaks)
      if (brk > c && brk < c + k) k = brk - c;
    out.push_back({c, k});
    c += k;
  }
  return out;
}

/// Blocked Householder QR of an m x k panel (m >= k not required). The panel
/// is overwritten by R (upper triangle, zeros below).
inline ReflectorPanel panel_qr(MatrixView panel, index_t inner_block = 8, const Charge& charge = {}) {
  const index_t m = panel.rows;
  const index_t k = std::min(panel.cols, m);
  ReflectorPanel out;
  out.w = Matrix(m, panel.cols);
  out.y = Matrix(m, panel.cols);
  std::vector<double> taus(static_cast<std::size_t>(panel.cols), 0.0);
  std::vector<double> tmp(static_cast<std::size_t>(panel.cols));
  inner_block = std::max<index_t>(inner_block, 1);

  for (index_t jb = 0; jb < k; jb += inner_block) {
    const index_t je = std::min(k, jb + inner_block);
    for (index_t j = jb; j < je; ++j) {
      const index_t len = m - j;
      double head = panel(j, j);
      taus[j] = make_householder(len, head, panel.col(j) + j + 1);
      double* yj = out.y.col(j);
      yj[j] = 1.0;
      for (index_t i = j + 1; i < m; ++i) {
        yj[i] = taus[j] == 0.0 ? 0.0 : panel(i, j);
        panel(i, j) = 0.0;
      }
      panel(j, j) = head;
      if (j + 1 < je) {
        std::span<const double> v(yj + j, static_cast<std::size_t>(len));
        apply_householder_left(v, taus[j], panel.block(j, j + 1, len, je - j - 1), charge);
      }
    }
    if (je < panel.cols) {
      // Inner block as I - Wb Yb^T; the rest of the panel gets (.)^T = I - Yb Wb^T.
      const index_t nb = je - jb;
      Matrix wb(m, nb);
      for (index_t j = jb; j < je; ++j) {
        const double* yj = out.y.col(j);
        for (index_t p = 0; p < j - jb; ++p) {
          const double* yp = out.y.col(jb + p);
          double s = 0.0;
          for (index_t i = j; i < m; ++i) s += yp[i] * yj[i];
          tmp[p] = s;
        }
        double* wj = wb.col(j - jb);
        for (index_t i = 0; i < m; ++i) wj[i] = yj[i];
        for (index_t p = 0; p < j - jb; ++p) {
          const double* wp = wb.col(p);
          for (index_t i = 0; i < m; ++i) wj[i] -= wp[i] * tmp[p];
        }
        for (index_t i = 0; i < m; ++i) wj[i] *= taus[j];
      }
      MatrixView rest = panel.block(0, je, m, panel.cols - je);
      Matrix t = multiply(Op::T, Op::N, wb.view(), rest, charge);
      gemm(Op::N, Op::N, -1.0, out.y.block(0, jb, m, nb), t.view(), 1.0, rest, charge);
    }
  }

  // Global W: w_j = tau_j (v_j - W(:, :j) (Y(:, :j)^T v_j)).
  for (index_t j = 0; j < k; ++j) {
    const double* yj = out.y.col(j);
    for (index_t p = 0; p < j; ++p) {
      const double* yp = out.y.col(p);
      double s = 0.0;
      for (index_t i = j; i < m; ++i) s += yp[i] * yj[i];
      tmp[p] = s;
    }
    double* wj = out.w.col(j);
    for (index_t i = 0; i < m; ++i) wj[i] = yj[i];
    for (index_t p = 0; p < j; ++p) {
      const double* wp = out.w.col(p);
      for (index_t i = 0; i < m; ++i) wj[i] -= wp[i] * tmp[p];
    }
    for (index_t i = 0; i < m; ++i) wj[i] *= taus[j];
  }
  charge(static_cast<std::uint64_t>(m) * k * k);
  return out;
}

/// Z = A W - 1/2 Y (W^T A W), with A W formed once.
inline Matrix form_z(ConstMatrixView a, ConstMatrixView w, ConstMatrixView y, const Charge& charge = {}) {
  require_shape(a.rows == a.cols && w.rows == a.rows && y.rows == a.rows && w.cols == y.cols, "form_z");
  Matrix z = multiply(Op::N, Op::N, a, w, charge);
  Matrix wtaw = multiply(Op::T, Op::N, w, z.view(), charge);
  gemm(Op::N, Op::N, -0.5, y, wtaw.view(), 1.0, z.view(), charge);
  return z;
}

enum class UpdateMode { Full, Symmetric };

/// A2 <- A2 - Y Z^T - Z Y^T. Full touches every entry (two general
/// products' worth of multiply-adds); Symmetric computes the lower triangle
/// and mirrors it, half the work.
inline void trailing_update(MatrixView a2, ConstMatrixView y, ConstMatrixView z, UpdateMode mode,
                            const Charge& charge = {}) {
  require_shape(a2.rows == a2.cols && y.rows == a2.rows && z.rows == a2.rows && y.cols == z.cols,
                "trailing_update");
  if (mode == UpdateMode::Full)
    rank2k_columns(a2, y, z, 0, false, charge);
  else
    sym_rank2k_update(a2, y, z, charge);
}

/// Applies (I - W Y^T)^T = I - Y W^T to block c from the left.
inline void apply_panel_transpose_left(const ReflectorPanel& p, MatrixView c, const Charge& charge = {}) {
  if (c.cols == 0 || p.width() == 0) return;
  Matrix t = multiply(Op::T, Op::N, p.w.view(), c, charge);
  gemm(Op::N, Op::N, -1.0, p.y.view(), t.view(), 1.0, c, charge);
}

struct SbrResult {
  BandMatrix band;
  SbrFactors factors;
};

/// Sequential reduction on one dense copy of A. `breaks` constrains the
/// panel schedule the same way the multi-worker path does.
inline SbrResult sbr_reduce(const SymmetricMatrix& a_in, const SbrConfig& cfg, const Charge& charge = {},
                            std::span<const index_t> breaks = {}) {
  const index_t n = a_in.n();
  cfg.validate(n);
  const index_t b = cfg.b;
  Matrix a = a_in.matrix();
  SbrFactors factors{n, b, {}};
  for (const PanelSpan& ps : plan_panels(n, b, breaks)) {
    const index_t c = ps.col, k = ps.width;
    const index_t r0 = c + b, m = n - r0;
    ReflectorPanel p = panel_qr(a.block(r0, c, m, k), cfg.inner_block, charge);
    p.col_offset = c;
    p.row_offset = r0;
    if (k < b) apply_panel_transpose_left(p, a.block(r0, c + k, m, b - k), charge);
    // Mirror the finished columns into the upper triangle.
    for (index_t j = c; j < c + b; ++j)
      for (index_t i = r0; i < n; ++i) a(j, i) = a(i, j);
    MatrixView a2 = a.block(r0, r0, m, m);
    Matrix z = form_z(a2, p.w.view(), p.y.view(), charge);
    trailing_update(a2, p.y.view(), z.view(), UpdateMode::Symmetric, charge);
    p.z = std::move(z);
    factors.panels.push_back(std::move(p));
  }
  const double tol = 1e-13 * std::max(1.0, frobenius_norm(a_in.view()));
  return SbrResult{BandMatrix::from_dense(a.view(), b, tol), std::move(factors)};
}

}  // namespace evd
