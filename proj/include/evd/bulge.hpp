#pragma once

// Bulge chasing: symmetric band (semi-bandwidth b) -> tridiagonal.
//
// Sweep j annihilates column j below the subdiagonal, then chases the bulge
// down the band. Step k of sweep j has pivot column c and reflector rows
// R = [r0, r0 + len):
//
//   k = 0:  c = j,                 r0 = j + 1
//   k > 0:  c = j + 1 + (k - 1) b,  r0 = j + 1 + k b
//
// One step annihilates A(R, c) below its head, applies the reflector from the
// left to the leftover bulge columns (c, r0), two-sided to A(R, R), and from
// the right to the b rows below R (which creates the next bulge). Working
// storage is lower band of depth 2b.
//
// The multi-worker path partitions steps by pivot column. Neighbouring
// workers share the 2b columns right of each boundary (the halo) and pass it
// back and forth so that every halo step runs in sequential order; the
// result is bitwise identical to bc_reduce.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evd/band.hpp"
#include "evd/blas.hpp"
#include "evd/matrix.hpp"

namespace evd {

inline constexpr index_t kReflectorPad = 8;

struct BulgeStep {
  index_t sweep = 0;
  index_t step = 0;
  index_t pivot = 0;
  index_t row0 = 0;
  index_t len = 0;
};

/// Steps of sweep j in order; steps with fewer than two rows are no-ops and
/// are not listed.
inline std::vector<BulgeStep> sweep_steps(index_t n, index_t b, index_t j) {
  std::vector<BulgeStep> out;
  if (b < 2 || j > n - 3) return out;
  for (index_t k = 0;; ++k) {
    const index_t c = k == 0 ? j : j + 1 + (k - 1) * b;
    const index_t r0 = j + 1 + k * b;
    if (r0 > n - 1) break;
    const index_t len = std::min(b, n - r0);
    if (len < 2) break;
    out.push_back({j, k, c, r0, len});
  }
  return out;
}

struct BulgeReflector {
  index_t sweep = 0;
  index_t step = 0;
  index_t row0 = 0;
  index_t len = 0;
  double tau = 0.0;
  std::size_t offset = 0;  // into BulgeReflectorSet::data; v[0] == 1
};

/// Reflectors in execution (lexicographic) order. Vectors are stored
/// contiguously with a stride padded to a multiple of 8.
class BulgeReflectorSet {
 public:
  BulgeReflectorSet() = default;
  BulgeReflectorSet(index_t n, index_t b)
      : n_(n), b_(b), stride_((std::max<index_t>(b, 1) + kReflectorPad - 1) / kReflectorPad * kReflectorPad) {}

  index_t n() const { return n_; }
  index_t b() const { return b_; }
  index_t stride() const { return stride_; }
  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  const BulgeReflector& operator[](std::size_t i) const { return refs_[i]; }
  const std::vector<BulgeReflector>& reflectors() const { return refs_; }

  std::span<const double> v(std::size_t i) const {
    return {data_.data() + refs_[i].offset, static_cast<std::size_t>(refs_[i].len)};
  }

  void push(index_t sweep, index_t step, index_t row0, double tau, std::span<const double> v) {
    if (static_cast<index_t>(v.size()) > stride_) throw Error("BulgeReflectorSet: reflector longer than b");
    BulgeReflector r{sweep, step, row0, static_cast<index_t>(v.size()), tau, data_.size()};
    data_.resize(data_.size() + static_cast<std::size_t>(stride_), 0.0);
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(r.offset));
    refs_.push_back(r);
  }

  /// Concatenates sets and restores execution order.
  static BulgeReflectorSet merge(std::span<const BulgeReflectorSet> parts) {
    if (parts.empty()) return {};
    BulgeReflectorSet out(parts[0].n(), parts[0].b());
    struct Ref {
      const BulgeReflectorSet* set;
      std::size_t i;
    };
    std::vector<Ref> all;
    for (const auto& p : parts) {
      if (p.n() != out.n() || p.b() != out.b()) throw Error("BulgeReflectorSet::merge: shape mismatch");
      for (std::size_t i = 0; i < p.size(); ++i) all.push_back({&p, i});
    }
    std::stable_sort(all.begin(), all.end(), [](const Ref& x, const Ref& y) {
      const auto& a = (*x.set)[x.i];
      const auto& b = (*y.set)[y.i];
      return a.sweep != b.sweep ? a.sweep < b.sweep : a.step < b.step;
    });
    for (const auto& r : all) {
      const auto& f = (*r.set)[r.i];
      out.push(f.sweep, f.step, f.row0, f.tau, r.set->v(r.i));
    }
    return out;
  }

  /// Checks the set against the step schedule: strictly increasing
  /// (sweep, step), rows as the schedule dictates, unit leading entry. Since
  /// every step (j, k) touches rows that (j, k - 1) and (j - 1, k + 1) also
  /// touch, lexicographic order is the only order consistent with both.
  bool valid() const {
    for (std::size_t i = 0; i < refs_.size(); ++i) {
      const auto& r = refs_[i];
      if (i > 0) {
        const auto& p = refs_[i - 1];
        if (!(p.sweep < r.sweep || (p.sweep == r.sweep && p.step < r.step))) return false;
      }
      const index_t r0 = r.sweep + 1 + r.step * b_;
      if (r.row0 != r0 || r.len != std::min(b_, n_ - r0) || r.len < 2) return false;
      if (v(i)[0] != 1.0 || !std::isfinite(r.tau)) return false;
    }
    return true;
  }

  /// Multiply-adds to apply every reflector to an m-row block from the right.
  std::uint64_t apply_cost(index_t m) const {
    std::uint64_t s = 0;
    for (const auto& r : refs_) s += 2ull * static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(r.len);
    return s;
  }

 private:
  index_t n_ = 0;
  index_t b_ = 0;
  index_t stride_ = kReflectorPad;
  std::vector<BulgeReflector> refs_;
  std::vector<double> data_;
};

/// Lower band storage of depth d over global columns [col0, col0 + cols).
class BandWork {
 public:
  BandWork(index_t n, index_t depth, index_t col0, index_t cols)
      : n_(n), depth_(depth), col0_(col0), cols_(cols),
        data_(static_cast<std::size_t>(cols * (depth + 1)), 0.0) {}

  index_t n() const { return n_; }
  index_t depth() const { return depth_; }
  index_t col0() const { return col0_; }
  index_t cols() const { return cols_; }

  double& at(index_t i, index_t j) { return data_[static_cast<std::size_t>((i - j) + (j - col0_) * (depth_ + 1))]; }
  double at(index_t i, index_t j) const {
    return data_[static_cast<std::size_t>((i - j) + (j - col0_) * (depth_ + 1))];
  }

  /// Copies band columns [c0, c1) from a band matrix.
  void load(const BandMatrix& a, index_t c0, index_t c1) {
    const index_t b = a.bandwidth();
    for (index_t j = c0; j < c1; ++j)
      for (index_t i = j; i <= std::min(n_ - 1, j + std::min(b, depth_)); ++i) at(i, j) = a.lower(i, j);
  }

  /// Columns [c0, c1) as one contiguous slab.
  std::vector<double> pack(index_t c0, index_t c1) const {
    const auto first = data_.begin() + (c0 - col0_) * (depth_ + 1);
    return {first, first + (c1 - c0) * (depth_ + 1)};
  }

  void unpack(index_t c0, index_t c1, std::span<const double> slab) {
    if (static_cast<index_t>(slab.size()) != (c1 - c0) * (depth_ + 1))
      throw Error("BandWork::unpack: halo size mismatch");
    std::copy(slab.begin(), slab.end(), data_.begin() + (c0 - col0_) * (depth_ + 1));
  }

 private:
  index_t n_, depth_, col0_, cols_;
  std::vector<double> data_;
};

/// One chasing step on working storage; returns tau and fills v (len).
inline double bulge_step(BandWork& a, const BulgeStep& s, index_t b, std::span<double> v, const Charge& charge = {}) {
  const index_t c = s.pivot, r0 = s.row0, len = s.len, r1 = r0 + len - 1;
  const index_t n = a.n();
  double head = a.at(r0, c);
  double* tail = &a.at(r0 + 1, c);
  const double tau = make_householder(len, head, tail);
  v[0] = 1.0;
  for (index_t l = 1; l < len; ++l) {
    v[l] = tau == 0.0 ? 0.0 : tail[l - 1];
    tail[l - 1] = 0.0;
  }
  a.at(r0, c) = head;
  if (tau == 0.0) return tau;

  // Leftover bulge columns between the pivot and R.
  for (index_t col = c + 1; col < r0; ++col) {
    double* x = &a.at(r0, col);
    double dot = 0.0;
    for (index_t l = 0; l < len; ++l) dot += v[l] * x[l];
    dot *= tau;
    for (index_t l = 0; l < len; ++l) x[l] -= dot * v[l];
  }

  // Two-sided on the diagonal block: w = tau D v, w -= (tau/2)(v^T w) v,
  // D -= v w^T + w v^T.
  std::vector<double> w(static_cast<std::size_t>(len), 0.0);
  for (index_t m = 0; m < len; ++m) {
    const double* col = &a.at(r0 + m, r0 + m);
    w[m] += col[0] * v[m];
    for (index_t l = m + 1; l < len; ++l) {
      w[l] += col[l - m] * v[m];
      w[m] += col[l - m] * v[l];
    }
  }
  double vw = 0.0;
  for (index_t l = 0; l < len; ++l) {
    w[l] *= tau;
    vw += v[l] * w[l];
  }
  const double beta = 0.5 * tau * vw;
  for (index_t l = 0; l < len; ++l) w[l] -= beta * v[l];
  for (index_t m = 0; m < len; ++m) {
    double* col = &a.at(r0 + m, r0 + m);
    for (index_t l = m; l < len; ++l) col[l - m] -= (v[l] * w[m] + w[l] * v[m]);
  }

  // Rows below R from the right.
  const index_t rows_end = std::min(r1 + b, n - 1);
  for (index_t i = r1 + 1; i <= rows_end; ++i) {
    double dot = 0.0;
    for (index_t l = 0; l < len; ++l) dot += a.at(i, r0 + l) * v[l];
    dot *= tau;
    for (index_t l = 0; l < len; ++l) a.at(i, r0 + l) -= dot * v[l];
  }

  charge(static_cast<std::uint64_t>(2 * len * std::max<index_t>(r0 - c - 1, 0) + 2 * len * len +
                                    2 * len * std::max<index_t>(rows_end - r1, 0)));
  return tau;
}

struct BulgeResult {
  TridiagonalMatrix t;
  BulgeReflectorSet reflectors;
};

/// Sequential bulge chasing.
inline BulgeResult bc_reduce(const BandMatrix& a, const Charge& charge = {}) {
  const index_t n = a.n(), b = a.bandwidth();
  BulgeResult out;
  out.reflectors = BulgeReflectorSet(n, b);
  BandWork w(n, std::max<index_t>(2 * b, 1), 0, n);
  w.load(a, 0, n);
  std::vector<double> v(static_cast<std::size_t>(std::max<index_t>(b, 1)));
  for (index_t j = 0; j + 2 < n; ++j) {
    for (const BulgeStep& s : sweep_steps(n, b, j)) {
      const double tau = bulge_step(w, s, b, v, charge);
      out.reflectors.push(s.sweep, s.step, s.row0, tau, std::span<const double>(v.data(), s.len));
    }
  }
  out.t.d.resize(static_cast<std::size_t>(n));
  out.t.e.resize(static_cast<std::size_t>(n - 1));
  for (index_t i = 0; i < n; ++i) out.t.d[i] = w.at(i, i);
  for (index_t i = 0; i + 1 < n; ++i) out.t.e[i] = b == 0 ? 0.0 : w.at(i + 1, i);
  return out;
}

/// Transport for the halo between neighbouring workers. side 0 is the left
/// neighbour, side 1 the right one.
struct HaloLink {
  std::function<void(int side, std::vector<double>)> send;
  std::function<std::vector<double>(int side)> recv;
};

/// Piece of the tridiagonal owned by one column block.
struct BulgePiece {
  index_t begin = 0;
  index_t end = 0;
  std::vector<double> d;  // columns [begin, end)
  std::vector<double> e;  // e[i] = T(i + 1, i) for i in [begin, min(end, n - 1))
  BulgeReflectorSet reflectors;
};

/// Bulge chasing for the steps whose pivot lies in [begin, end).
class BulgeBlockWorker {
 public:
  BulgeBlockWorker(index_t n, index_t b, index_t begin, index_t end, bool has_left, bool has_right)
      : n_(n), b_(b), begin_(begin), end_(end), has_left_(has_left), has_right_(has_right),
        halo_(2 * b),
        work_(n, std::max<index_t>(2 * b, 1), begin, std::min(n, end + (has_right ? 2 * b : 0)) - begin) {
    if (b < 1 || begin < 0 || end > n || begin >= end) throw Error("BulgeBlockWorker: bad block");
    // The halo right of a boundary must lie inside the block that owns it.
    if (has_left && end - begin < 2 * b) throw Error("BulgeBlockWorker: block after a boundary is narrower than 2b");
    if (has_right && end + 2 * b > n) throw Error("BulgeBlockWorker: halo runs past the matrix");
  }

  index_t halo_width() const { return halo_; }

  /// Band columns of this block as they stand after band reduction.
  void load(const BandMatrix& a) { work_.load(a, begin_, end_); }
  BandWork& work() { return work_; }

  /// Sends the initial halo content to the left neighbour. Called once the
  /// block's band columns are final.
  void publish_halo(const HaloLink& link) const {
    if (has_left_) link.send(0, work_.pack(begin_, begin_ + halo_));
  }

  BulgePiece run(const HaloLink& link, const Charge& charge = {}) {
    BulgePiece out;
    out.begin = begin_;
    out.end = end_;
    out.reflectors = BulgeReflectorSet(n_, b_);
    const auto right = has_right_ ? plan_boundary(end_, true) : Plan{};
    const auto left = has_left_ ? plan_boundary(begin_, false) : Plan{};
    std::vector<double> v(static_cast<std::size_t>(b_));

    for (index_t j = 0; j + 2 < n_ && j < end_; ++j) {
      for (const BulgeStep& s : sweep_steps(n_, b_, j)) {
        if (s.pivot < begin_) continue;
        if (s.pivot >= end_) break;
        const bool touches_right = has_right_ && s.row0 + s.len - 1 >= end_;
        const bool touches_left = has_left_ && s.pivot < begin_ + halo_;
        if (touches_right && right.first[j] == s.step && right.recv_before[j]) receive(link, 1, end_);
        if (touches_left && left.first[j] == s.step && left.recv_before[j]) receive(link, 0, begin_);
        const double tau = bulge_step(work_, s, b_, v, charge);
        out.reflectors.push(s.sweep, s.step, s.row0, tau, std::span<const double>(v.data(), s.len));
        if (touches_right && right.last[j] == s.step && right.send_after[j]) link.send(1, work_.pack(end_, end_ + halo_));
        if (touches_left && left.last[j] == s.step && left.send_after[j]) link.send(0, work_.pack(begin_, begin_ + halo_));
      }
    }
    if (has_right_ && right.final_send) link.send(1, work_.pack(end_, end_ + halo_));
    if (has_left_ && left.final_recv) receive(link, 0, begin_);

    for (index_t i = begin_; i < end_; ++i) {
      out.d.push_back(work_.at(i, i));
      if (i + 1 < n_) out.e.push_back(work_.at(i + 1, i));
    }
    return out;
  }

 private:
  // Token schedule for one boundary seen from this worker. Segments are the
  // runs of halo-touching steps per sweep; the left side runs first in each
  // sweep. The token starts on the right side (it owns the columns).
  struct Plan {
    std::vector<index_t> first, last;  // step index of my first/last halo step per sweep, -1 if none
    std::vector<bool> recv_before, send_after;
    bool final_send = false;  // left side returns the halo after its last segment
    bool final_recv = false;  // right side waits for it
  };

  Plan plan_boundary(index_t boundary, bool i_am_left) const {
    const index_t sweeps = std::max<index_t>(n_ - 2, 0);
    Plan p;
    p.first.assign(static_cast<std::size_t>(sweeps), -1);
    p.last.assign(static_cast<std::size_t>(sweeps), -1);
    p.recv_before.assign(static_cast<std::size_t>(sweeps), false);
    p.send_after.assign(static_cast<std::size_t>(sweeps), false);
    struct Seg {
      index_t sweep;
      bool left;
    };
    std::vector<Seg> segs;
    for (index_t j = 0; j < sweeps && j < boundary + halo_; ++j) {
      index_t lf = -1, ll = -1, rf = -1, rl = -1;
      for (const BulgeStep& s : sweep_steps(n_, b_, j)) {
        if (s.pivot < boundary && s.row0 + s.len - 1 >= boundary) {
          if (lf < 0) lf = s.step;
          ll = s.step;
        } else if (s.pivot >= boundary && s.pivot < boundary + halo_) {
          if (rf < 0) rf = s.step;
          rl = s.step;
        }
      }
      if (lf >= 0) segs.push_back({j, true});
      if (rf >= 0) segs.push_back({j, false});
      if (i_am_left && lf >= 0) p.first[j] = lf, p.last[j] = ll;
      if (!i_am_left && rf >= 0) p.first[j] = rf, p.last[j] = rl;
    }
    bool prev_left = false;  // token owner before the first segment
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const Seg& g = segs[i];
      if (g.left != i_am_left) {
        prev_left = g.left;
        continue;
      }
      if (prev_left != g.left) p.recv_before[g.sweep] = true;
      const bool next_other = i + 1 < segs.size() && segs[i + 1].left != g.left;
      if (next_other) p.send_after[g.sweep] = true;
      prev_left = g.left;
    }
    const bool ends_left = !segs.empty() && segs.back().left;
    if (ends_left) {
      if (i_am_left) p.final_send = true;
      else p.final_recv = true;
    }
    return p;
  }

  void receive(const HaloLink& link, int side, index_t c0) {
    auto slab = link.recv(side);
    work_.unpack(c0, c0 + halo_, slab);
  }

  index_t n_, b_, begin_, end_;
  bool has_left_, has_right_;
  index_t halo_;
  BandWork work_;
};

/// Assembles pieces from all blocks (in block order) into T and U.
inline BulgeResult stitch(index_t n, index_t b, std::span<const BulgePiece> pieces) {
  BulgeResult out;
  std::vector<BulgeReflectorSet> sets;
  index_t expect = 0;
  for (const auto& p : pieces) {
    if (p.begin != expect) throw Error("stitch: blocks do not tile the matrix");
    out.t.d.insert(out.t.d.end(), p.d.begin(), p.d.end());
    out.t.e.insert(out.t.e.end(), p.e.begin(), p.e.end());
    sets.push_back(p.reflectors);
    expect = p.end;
  }
  if (expect != n) throw Error("stitch: blocks do not cover the matrix");
  out.reflectors = sets.empty() ? BulgeReflectorSet(n, b) : BulgeReflectorSet::merge(sets);
  return out;
}

}  // namespace evd
