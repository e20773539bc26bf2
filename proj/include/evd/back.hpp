#pragma once

// Back transformation. With Q_s = Q_1 ... Q_P from band reduction and
// Q_b = H_1 ... H_N from bulge chasing, the eigenvectors of A are
//
//   Q = Q_s Q_b Q_d.
//
// The reordered path forms Q_sb^T = Q_b^T Q_s^T one column block at a time
// without waiting for the solver, then finishes with one GEMM against Q_d.
// The conventional path applies Q_b and then Q_s to columns of Q_d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "evd/blas.hpp"
#include "evd/bulge.hpp"
#include "evd/matrix.hpp"
#include "evd/sbr.hpp"

namespace evd {

/// Multiply-adds of the compact-WY (BLAS3) variant of BC-Back for m output
/// rows; only used for comparison.
constexpr double compact_wy_macs(double m, double n) { return 4.0 * m * n * n; }

struct BackPlan {
  std::vector<index_t> sizes;  // descending, sums to n
  index_t base = 0;

  /// Half-open column range of worker i.
  std::pair<index_t, index_t> range(std::size_t i) const {
    index_t s = 0;
    for (std::size_t k = 0; k < i; ++k) s += sizes[k];
    return {s, s + sizes[i]};
  }

  bool valid(index_t n) const {
    index_t total = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (i > 0 && sizes[i] > sizes[i - 1]) return false;
      if (std::abs(static_cast<double>(sizes[i] - base)) > 0.05 * static_cast<double>(base) + 1e-9) return false;
      total += sizes[i];
    }
    return !sizes.empty() && total == n;
  }
};

/// Linear ramp b_i = round(base (1 + skew (1 - 2i/(w-1)))), then a
/// rounding repair: surplus columns go to the earliest workers, deficits
/// come off the latest, one at a time.
inline BackPlan make_back_plan(index_t n, int workers, index_t base, double skew) {
  if (workers < 1) throw Error("make_back_plan: workers must be >= 1");
  if (!(skew >= 0.0 && skew <= 0.05)) throw Error("make_back_plan: skew must lie in [0, 0.05]");
  BackPlan p;
  p.base = base;
  if (workers == 1) {
    p.sizes = {n};
    p.base = n;
    return p;
  }
  // Rounding must not leave the 5% band, which matters for small bases.
  const auto lo = static_cast<index_t>(std::ceil(0.95 * static_cast<double>(base) - 1e-9));
  const auto hi = static_cast<index_t>(std::floor(1.05 * static_cast<double>(base) + 1e-9));
  for (int i = 0; i < workers; ++i) {
    const double ramp = 1.0 - 2.0 * i / static_cast<double>(workers - 1);
    const auto s = static_cast<index_t>(std::llround(static_cast<double>(base) * (1.0 + skew * ramp)));
    p.sizes.push_back(std::clamp(s, lo, hi));
  }
  index_t diff = n;
  for (index_t s : p.sizes) diff -= s;
  const auto fail = [] { return Error("make_back_plan: no plan within 5% of the base block size"); };
  for (int k = 0, idle = 0; diff > 0; k = (k + 1) % workers) {
    if (p.sizes[k] < hi) ++p.sizes[k], --diff, idle = 0;
    else if (++idle == workers) throw fail();
  }
  for (int k = workers - 1, idle = 0; diff < 0; k = (k + workers - 1) % workers) {
    if (p.sizes[k] > lo) --p.sizes[k], ++diff, idle = 0;
    else if (++idle == workers) throw fail();
  }
  if (!p.valid(n)) throw fail();
  return p;
}

/// Columns [c0, c1) of Q_s = Q_1 ... Q_P (reverse panel order on identity
/// columns).
inline Matrix sbr_back_accumulate(const SbrFactors& f, index_t c0, index_t c1, const Charge& charge = {}) {
  if (!f.complete()) throw Error("sbr_back_accumulate: factors are incomplete");
  if (c0 < 0 || c1 > f.n || c0 > c1) throw ShapeError("sbr_back_accumulate: bad column range");
  Matrix x(f.n, c1 - c0);
  for (index_t j = c0; j < c1; ++j) x(j, j - c0) = 1.0;
  for (auto it = f.panels.rbegin(); it != f.panels.rend(); ++it) {
    MatrixView rows = x.block(it->row_offset, 0, it->rows(), x.cols());
    Matrix t = multiply(Op::T, Op::N, it->y.view(), rows, charge);
    gemm(Op::N, Op::N, -1.0, it->w.view(), t.view(), 1.0, rows, charge);
  }
  return x;
}

/// X <- Q_p^T X for one panel; applying panels in ascending order to
/// identity columns yields columns of Q_s^T.
inline void apply_panel_qt(const ReflectorPanel& p, MatrixView x, const Charge& charge = {}) {
  if (x.cols == 0 || p.width() == 0) return;
  apply_panel_transpose_left(p, x.block(p.row_offset, 0, p.rows(), x.cols), charge);
}

/// Columns [c0, c1) of Q_s^T.
inline Matrix sbr_back_transposed(const SbrFactors& f, index_t c0, index_t c1, const Charge& charge = {}) {
  if (!f.complete()) throw Error("sbr_back_transposed: factors are incomplete");
  if (c0 < 0 || c1 > f.n || c0 > c1) throw ShapeError("sbr_back_transposed: bad column range");
  Matrix x(f.n, c1 - c0);
  for (index_t j = c0; j < c1; ++j) x(j, j - c0) = 1.0;
  for (const auto& p : f.panels) apply_panel_qt(p, x.view(), charge);
  return x;
}

struct BcBackOptions {
  index_t group = 4;  // reflectors per group tile
  index_t tile = 0;   // columns per tile; 0 means 2b
};

enum class ReflectorOrder { Execution, Reverse };

/// Applies the bulge reflectors one rank-1 update at a time to the columns
/// of x from the left. Execution order computes Q_b^T x (this is how Q_s^T
/// becomes Q_sb^T); reverse order computes Q_b x.
///
/// Columns are independent, so x is cut into column tiles and each tile
/// takes g reflectors at a time while its rows are still in cache. Every
/// column sees the same operations in the same order as ungrouped
/// application, so the result is identical.
inline void bc_back_apply(const BulgeReflectorSet& u, MatrixView x, const Charge& charge = {},
                          BcBackOptions opt = {}, ReflectorOrder order = ReflectorOrder::Execution) {
  if (u.empty() || x.cols == 0) return;
  if (x.rows != u.n()) throw ShapeError("bc_back_apply: row count must equal n");
  if (!u.valid()) throw Error("bc_back_apply: reflector set violates the dependency order");
  const std::size_t count = u.size();
  const index_t g = std::max<index_t>(opt.group, 1);
  const index_t tile = opt.tile > 0 ? opt.tile : std::max<index_t>(2 * u.b(), 1);
  for (index_t c0 = 0; c0 < x.cols; c0 += tile) {
    const index_t c1 = std::min(x.cols, c0 + tile);
    for (std::size_t g0 = 0; g0 < count; g0 += static_cast<std::size_t>(g)) {
      const std::size_t g1 = std::min(count, g0 + static_cast<std::size_t>(g));
      for (index_t j = c0; j < c1; ++j) {
        double* col = x.col(j);
        for (std::size_t q = g0; q < g1; ++q) {
          const std::size_t idx = order == ReflectorOrder::Execution ? q : count - 1 - q;
          const auto& r = u[idx];
          if (r.tau == 0.0) continue;
          const double* v = u.v(idx).data();
          double* xs = col + r.row0;
          double dot = 0.0;
          for (index_t l = 0; l < r.len; ++l) dot += v[l] * xs[l];
          dot *= r.tau;
          for (index_t l = 0; l < r.len; ++l) xs[l] -= dot * v[l];
        }
      }
    }
  }
  charge(u.apply_cost(x.cols));
}

/// Q block = op(block) * Q_d.
inline Matrix final_gemm(ConstMatrixView block, ConstMatrixView qd, const Charge& charge = {}, Op op = Op::N) {
  const index_t inner = op == Op::N ? block.cols : block.rows;
  if (inner != qd.rows) throw ShapeError("final_gemm: shapes do not conform");
  return multiply(op, Op::N, block, qd, charge);
}

/// Reference (conventional order): columns of Q = Q_s (Q_b Q_d(:, cols)).
inline Matrix conventional_back(const SbrFactors& f, const BulgeReflectorSet& u, ConstMatrixView qd_cols,
                                const Charge& charge = {}) {
  Matrix x = to_matrix(qd_cols);
  bc_back_apply(u, x.view(), charge, {}, ReflectorOrder::Reverse);
  for (auto it = f.panels.rbegin(); it != f.panels.rend(); ++it) {
    MatrixView rows = x.block(it->row_offset, 0, it->rows(), x.cols());
    Matrix t = multiply(Op::T, Op::N, it->y.view(), rows, charge);
    gemm(Op::N, Op::N, -1.0, it->w.view(), t.view(), 1.0, rows, charge);
  }
  return x;
}

}  // namespace evd
