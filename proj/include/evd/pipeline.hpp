#pragma once

// Multi-worker two-stage EVD. Every worker is a virtual device with two
// in-order streams: the forward stream runs band reduction and bulge
// chasing on its column block, the back stream runs the back
// transformation of its BackPlan columns. The host runs the tridiagonal
// solver. Workers share nothing: panels, halos, reflectors and eigenvector
// blocks travel as counted messages.
//
// Band reduction keeps full (not triangular) columns on every worker, so
// that A W needs only W, Y and Z to be broadcast per panel:
//
//   owner:        panel QR -> broadcast W, Y
//   participant:  AW rows of its columns from its own columns (symmetry),
//                 partial W^T A W -> all-reduce, Z rows -> all-gather,
//                 update its own trailing columns
//
// The last worker switches to the symmetric update once it holds the whole
// trailing matrix.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evd/back.hpp"
#include "evd/band.hpp"
#include "evd/blas.hpp"
#include "evd/bulge.hpp"
#include "evd/comm.hpp"
#include "evd/matrix.hpp"
#include "evd/model.hpp"
#include "evd/sbr.hpp"
#include "evd/trace.hpp"
#include "evd/tridiag.hpp"

namespace evd {

struct PipelineConfig {
  int workers = 1;
  index_t b = 32;
  Order order = Order::Pipelined;
  double back_skew = 0.05;
  bool auto_skew = false;
  std::uint64_t seed = 0;
  std::string trace_path;
  bool want_vectors = true;
  index_t inner_block = 8;
  BcBackOptions bc_back{};
  // Serialize compute bursts; unset means "when streams outnumber cores".
  std::optional<bool> time_share;

  void validate(index_t n) const {
    if (workers < 1) throw Error("PipelineConfig: workers must be >= 1");
    if (workers > n) throw Error("PipelineConfig: more workers than columns");
    if (b < 1) throw Error("PipelineConfig: bandwidth must be >= 1");
    if (!(back_skew >= 0.0 && back_skew <= 0.05)) throw Error("PipelineConfig: back_skew must lie in [0, 0.05]");
  }
};

/// A failure inside the pipeline, tagged with where it happened.
class PipelineError : public Error {
 public:
  PipelineError(int worker, std::string stage, const std::string& what, bool numerical)
      : Error("worker " + std::to_string(worker) + ", stage " + stage + ": " + what),
        worker_(worker), stage_(std::move(stage)), numerical_(numerical) {}
  int worker() const { return worker_; }
  const std::string& stage() const { return stage_; }
  bool numerical() const { return numerical_; }

 private:
  int worker_;
  std::string stage_;
  bool numerical_;
};

struct PipelineResult {
  EigenResult eig;
  std::vector<TraceEvent> trace;
  CommLedger ledger;
  FlopCounter flops;
  BackPlan plan;
  std::vector<ColumnRange> blocks;
  index_t band = 0;
  double skew = 0.0;
  double seconds = 0.0;
};

/// Bandwidth actually used: the halo of distributed bulge chasing needs
/// every block after the first to be at least 2b wide, and b < n.
inline index_t effective_band(index_t n, int workers, index_t b) {
  index_t out = std::min(b, n - 1);
  if (workers > 1) {
    const auto blocks = partition(n, workers);
    index_t narrow = n;
    for (std::size_t i = 1; i < blocks.size(); ++i) narrow = std::min(narrow, blocks[i].size());
    out = std::min(out, narrow / 2);
  }
  return std::max<index_t>(out, 1);
}

namespace detail {

inline std::vector<double> to_payload(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

inline Matrix from_payload(index_t rows, index_t cols, const std::vector<double>& payload) {
  if (static_cast<index_t>(payload.size()) != rows * cols) throw ProtocolError("payload size does not match its shape");
  Matrix m(rows, cols);
  std::copy(payload.begin(), payload.end(), m.values().begin());
  return m;
}

/// Panels of one worker, filled by its forward stream.
class PanelStore {
 public:
  struct Slot {
    std::shared_ptr<const ReflectorPanel> panel;
    std::int64_t stamp = 0;
  };

  explicit PanelStore(std::size_t count) : slots_(count) {}

  void put(std::size_t p, std::shared_ptr<const ReflectorPanel> panel, std::int64_t stamp) {
    {
      std::lock_guard lock(mu_);
      slots_[p] = {std::move(panel), stamp};
    }
    cv_.notify_all();
  }

  Slot wait(std::size_t p, const std::atomic<bool>& abort) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return slots_[p].panel != nullptr || abort.load(); });
    if (!slots_[p].panel) throw ProtocolError("aborted while waiting for a panel");
    return slots_[p];
  }

  void wake() { cv_.notify_all(); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Slot> slots_;
};

class Run {
 public:
  Run(const SymmetricMatrix& a, const PipelineConfig& cfg, double skew)
      : a_(a), cfg_(cfg), n_(a.n()), w_(cfg.workers), b_(effective_band(a.n(), cfg.workers, cfg.b)),
        blocks_(partition(n_, w_)), fabric_(w_) {
    std::vector<index_t> breaks;
    for (const auto& r : blocks_) breaks.push_back(r.begin);
    panels_ = plan_panels(n_, b_, breaks);
    for (const auto& ps : panels_) owner_.push_back(block_of(ps.col));
    for (int j = 0; j < w_; ++j) {
      stores_.push_back(std::make_unique<PanelStore>(panels_.size()));
      u_.emplace_back();
    }
    const unsigned streams = static_cast<unsigned>(2 * w_ + 1);
    if (cfg.time_share.value_or(std::thread::hardware_concurrency() < streams)) token_ = &token_storage_;
    plan_.sizes = back_columns(n_, w_, skew);
    plan_.base = n_ / w_;
    skew_ = skew;
  }

  PipelineResult execute() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    for (int j = 0; j < w_; ++j) {
      threads.emplace_back([this, j] { guarded(j, [&](std::string& st) { forward(j, st); }); });
      if (cfg_.want_vectors) threads.emplace_back([this, j] { guarded(j, [&](std::string& st) { back(j, st); }); });
    }
    threads.emplace_back([this] { guarded(kHost, [&](std::string& st) { host(st); }); });
    for (auto& t : threads) t.join();
    if (error_) throw *error_;

    PipelineResult out;
    out.eig = std::move(result_);
    out.trace = rec_.events();
    out.ledger = fabric_.ledger();
    out.flops = flops_;
    out.plan = plan_;
    out.blocks = blocks_;
    out.band = b_;
    out.skew = skew_;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

 private:
  int block_of(index_t col) const {
    for (int j = 0; j < w_; ++j)
      if (col < blocks_[static_cast<std::size_t>(j)].end) return j;
    return w_ - 1;
  }

  Charge charge(const char* stage) { return Charge{&flops_, stage}; }

  template <class F>
  void guarded(int worker, F&& body) {
    std::string stage = "setup";
    try {
      body(stage);
    } catch (const PipelineError& e) {
      fail(e);
    } catch (const NumericalError& e) {
      fail(PipelineError(worker, stage, e.what(), true));
    } catch (const std::exception& e) {
      fail(PipelineError(worker, stage, e.what(), false));
    }
  }

  void fail(const PipelineError& e) {
    {
      std::lock_guard lock(err_mu_);
      if (!error_) error_ = e;
    }
    aborted_ = true;
    fabric_.abort();
    for (auto& s : stores_) s->wake();
  }

  /// Waits for `name` from every worker; returns the latest stamp.
  std::int64_t barrier(const std::string& name) {
    std::int64_t t = 0;
    for (int i = 0; i < w_; ++i) t = std::max(t, fabric_.signals().wait(name, i));
    return t;
  }

  void signal(const std::string& name, int j, const StreamTime& time) { fabric_.signals().set(name, j, 0, time.t); }

  void send(int src, int dst, const std::string& stage, Message m, std::int64_t now) {
    const auto words = m.payload.size();
    m.stamp = now;
    fabric_.send(src, dst, stage, std::move(m));
    rec_.record({src, Stage::Comm, dst, now, now, words});
  }

  void broadcast(int src, const std::string& stage, Message m, const std::vector<int>& consumers, std::int64_t now) {
    m.stamp = now;
    fabric_.broadcast(src, stage, m, consumers);
    rec_.record({src, Stage::Comm, kAllWorkers, now, now, m.payload.size()});
  }

  std::vector<int> everyone_but(int j) const {
    std::vector<int> out;
    for (int i = 0; i < w_; ++i)
      if (i != j) out.push_back(i);
    return out;
  }

  static ReflectorPanel decode_panel(const Message& msg, index_t n, index_t b) {
    const index_t c = msg.ints.at(1), k = msg.ints.at(2), m = n - c - b;
    ReflectorPanel p;
    p.col_offset = c;
    p.row_offset = c + b;
    p.w = Matrix(m, k);
    p.y = Matrix(m, k);
    std::copy_n(msg.payload.begin(), m * k, p.w.values().begin());
    std::copy_n(msg.payload.begin() + m * k, m * k, p.y.values().begin());
    return p;
  }

  // ---- forward stream: band reduction, bulge chasing, gathers ----

  void forward(int j, std::string& stage) {
    StreamTime time;
    const auto [s, e] = blocks_[static_cast<std::size_t>(j)];
    Matrix local(n_, e - s);
    copy_into(a_.view().block(0, s, n_, e - s), local.view());

    stage = "SBR";
    {
      StageClock clock(rec_, time, j, Stage::SBR, 0, token_);
      bool first_own = true;
      for (std::size_t p = 0; p < panels_.size(); ++p) {
        const int o = owner_[p];
        if (o > j) break;
        clock.set_block(o);
        const auto [c, k] = panels_[p];
        const index_t r0 = c + b_, m = n_ - r0;
        std::shared_ptr<ReflectorPanel> panel;
        if (o == j) {
          if (first_own && j > 0)
            clock.wait([&] { return fabric_.signals().wait("SBR-finished", j - 1); }, [](auto t) { return t; });
          first_own = false;
          panel = std::make_shared<ReflectorPanel>(
              panel_qr(local.block(r0, c - s, m, k), cfg_.inner_block, charge("SBR")));
          panel->col_offset = c;
          panel->row_offset = r0;
          if (w_ > 1) {
            Message msg;
            msg.tag = "WY";
            msg.ints = {static_cast<std::int64_t>(p), c, k};
            msg.payload.reserve(static_cast<std::size_t>(2 * m * k));
            msg.payload.insert(msg.payload.end(), panel->w.values().begin(), panel->w.values().end());
            msg.payload.insert(msg.payload.end(), panel->y.values().begin(), panel->y.values().end());
            broadcast(j, "SBR", std::move(msg), everyone_but(j), clock.now());
          }
        } else {
          Message msg = clock.wait([&] { return fabric_.recv(j, o, "WY"); }, [](const Message& m) { return m.stamp; });
          if (msg.ints.at(0) != static_cast<std::int64_t>(p)) throw ProtocolError("panels arrived out of order");
          panel = std::make_shared<ReflectorPanel>(decode_panel(msg, n_, b_));
        }
        stores_[static_cast<std::size_t>(j)]->put(p, panel, clock.now());
        round_update(j, p, *panel, local, clock);
      }
    }
    signal("SBR-finished", j, time);

    stage = "BC";
    BulgeBlockWorker bw(n_, b_, s, e, j > 0, j + 1 < w_);
    for (index_t col = s; col < e; ++col)
      for (index_t i = col; i <= std::min(n_ - 1, col + b_); ++i) bw.work().at(i, col) = local(i, col - s);
    local = Matrix();
    {
      if (cfg_.order == Order::Sequential) time.arrive(barrier("SBR-finished"));
      StageClock clock(rec_, time, j, Stage::BC, j, token_);
      HaloLink link{[&](int side, std::vector<double> slab) {
                      Message msg;
                      msg.tag = "halo";
                      msg.payload = std::move(slab);
                      send(j, side == 0 ? j - 1 : j + 1, "BC", std::move(msg), clock.now());
                    },
                    [&](int side) {
                      return clock
                          .wait([&] { return fabric_.recv(j, side == 0 ? j - 1 : j + 1, "halo"); },
                                [](const Message& m) { return m.stamp; })
                          .payload;
                    }};
      bw.publish_halo(link);
      BulgePiece piece = bw.run(link, charge("BC"));

      Message t;
      t.tag = "T";
      t.ints = {s, e};
      t.payload = piece.d;
      t.payload.insert(t.payload.end(), piece.e.begin(), piece.e.end());
      send(j, kHost, "BC-Gather", std::move(t), clock.now());

      // All-gather of the reflectors so every worker can run BC-Back.
      std::vector<BulgeReflectorSet> parts(static_cast<std::size_t>(w_));
      if (w_ > 1) {
        Message u;
        u.tag = "U";
        for (std::size_t i = 0; i < piece.reflectors.size(); ++i) {
          const auto& r = piece.reflectors[i];
          u.ints.insert(u.ints.end(), {r.sweep, r.step, r.row0, r.len});
          u.payload.push_back(r.tau);
          const auto v = piece.reflectors.v(i);
          u.payload.insert(u.payload.end(), v.begin(), v.end());
        }
        broadcast(j, "U-Gather", std::move(u), everyone_but(j), clock.now());
        for (int i = 0; i < w_; ++i) {
          if (i == j) continue;
          Message msg = clock.wait([&] { return fabric_.recv(j, i, "U"); }, [](const Message& m) { return m.stamp; });
          BulgeReflectorSet set(n_, b_);
          std::size_t off = 0;
          for (std::size_t q = 0; q + 3 < msg.ints.size(); q += 4) {
            const auto len = static_cast<std::size_t>(msg.ints[q + 3]);
            set.push(msg.ints[q], msg.ints[q + 1], msg.ints[q + 2], msg.payload[off],
                     std::span<const double>(msg.payload.data() + off + 1, len));
            off += len + 1;
          }
          parts[static_cast<std::size_t>(i)] = std::move(set);
        }
      }
      parts[static_cast<std::size_t>(j)] = std::move(piece.reflectors);
      u_[static_cast<std::size_t>(j)] = BulgeReflectorSet::merge(parts);
    }
    signal("BC-finished", j, time);
  }

  void round_update(int j, std::size_t p, const ReflectorPanel& panel, Matrix& local, StageClock& clock) {
    const auto [s, e] = blocks_[static_cast<std::size_t>(j)];
    const auto [c, k] = panels_[p];
    const index_t r0 = c + b_, m = n_ - r0;
    auto stamp = [](const Message& msg) { return msg.stamp; };

    // Columns between a narrow panel and the trailing matrix.
    const index_t la0 = std::max(s, c + k), la1 = std::min(e, c + b_);
    if (la0 < la1) apply_panel_transpose_left(panel, local.block(r0, la0 - s, m, la1 - la0), charge("SBR"));

    const index_t t0 = std::max(s, r0);
    if (t0 >= e) return;
    std::vector<int> members, others;  // workers holding trailing columns, in order
    for (int i = 0; i < w_; ++i)
      if (blocks_[static_cast<std::size_t>(i)].end > r0) {
        members.push_back(i);
        if (i != j) others.push_back(i);
      }
    MatrixView mine = local.block(r0, t0 - s, m, e - t0);

    auto broadcast_z = [&](ConstMatrixView zrows) {
      if (w_ == 1) return;
      Message msg;
      msg.tag = "Z";
      msg.seq = static_cast<std::int64_t>(p);
      msg.ints = {t0, e};
      msg.payload = to_payload(to_matrix(zrows));
      broadcast(j, "SBR", std::move(msg), others, clock.now());
    };

    if (members.size() == 1) {
      // Sole holder of the trailing matrix: symmetric update, half the work.
      Matrix z = form_z(mine, panel.w.view(), panel.y.view(), charge("SBR"));
      trailing_update(mine, panel.y.view(), z.view(), UpdateMode::Symmetric, charge("SBR"));
      broadcast_z(z.view());
      return;
    }

    const index_t rows = e - t0, off = t0 - r0;
    Matrix aw = multiply(Op::T, Op::N, mine, panel.w.view(), charge("SBR"));
    Matrix part = multiply(Op::T, Op::N, panel.w.view().block(off, 0, rows, k), aw.view(), charge("SBR"));
    {
      Message msg;
      msg.tag = "WtAW";
      msg.seq = static_cast<std::int64_t>(p);
      msg.payload = to_payload(part);
      broadcast(j, "SBR-Reduce", std::move(msg), others, clock.now());
    }
    Matrix wtaw(k, k);
    for (int i : members) {
      Matrix got;
      if (i != j) {
        Message msg = clock.wait([&] { return fabric_.recv(j, i, "WtAW"); }, stamp);
        if (msg.seq != static_cast<std::int64_t>(p)) throw ProtocolError("partial sums out of order");
        got = from_payload(k, k, msg.payload);
      }
      const Matrix& add = i == j ? part : got;
      for (index_t q = 0; q < k * k; ++q) wtaw.values()[q] += add.values()[q];
    }
    gemm(Op::N, Op::N, -0.5, panel.y.view().block(off, 0, rows, k), wtaw.view(), 1.0, aw.view(), charge("SBR"));
    broadcast_z(aw.view());

    Matrix z(m, k);
    for (int i : members) {
      if (i == j) {
        copy_into(aw.view(), z.block(off, 0, rows, k));
        continue;
      }
      Message msg = clock.wait([&] { return fabric_.recv(j, i, "Z"); }, stamp);
      if (msg.seq != static_cast<std::int64_t>(p)) throw ProtocolError("Z pieces out of order");
      const index_t zr0 = msg.ints.at(0) - r0, zr = msg.ints.at(1) - msg.ints.at(0);
      copy_into(from_payload(zr, k, msg.payload).view(), z.block(zr0, 0, zr, k));
    }
    rank2k_columns(mine, panel.y.view(), z.view(), off, false, charge("SBR"));
  }

  // ---- back stream ----

  // Panels of blocks up to j come from the forward stream's store, later
  // ones straight from the owner's broadcast.
  // Outside a stage (clock == nullptr) the wait only advances the stream.
  std::shared_ptr<const ReflectorPanel> get_panel(int j, std::size_t p, StreamTime& time, StageClock* clock) {
    auto await = [&](auto f, auto stamp) {
      if (clock) return clock->wait(f, stamp);
      auto r = f();
      time.arrive(stamp(r));
      return r;
    };
    const int o = owner_[p];
    if (o <= j)
      return await([&] { return stores_[static_cast<std::size_t>(j)]->wait(p, aborted_); },
                   [](const PanelStore::Slot& s) { return s.stamp; })
          .panel;
    Message msg = await([&] { return fabric_.recv(j, o, "WY"); }, [](const Message& m) { return m.stamp; });
    if (msg.ints.at(0) != static_cast<std::int64_t>(p)) throw ProtocolError("panels arrived out of order");
    return std::make_shared<ReflectorPanel>(decode_panel(msg, n_, b_));
  }

  void back(int j, std::string& stage) {
    const auto [c0, c1] = plan_.range(static_cast<std::size_t>(j));
    if (cfg_.order == Order::Conventional) return back_conventional(j, stage, c0, c1);
    StreamTime time;

    stage = "SBR-Back";
    Matrix x(n_, c1 - c0);
    for (index_t q = 0; q < c1 - c0; ++q) x(c0 + q, q) = 1.0;
    {
      time.arrive(cfg_.order == Order::Sequential ? barrier("BC-finished")
                                                  : fabric_.signals().wait("SBR-finished", j));
      StageClock clock(rec_, time, j, Stage::SBRBack, 0, token_);
      for (std::size_t p = 0; p < panels_.size(); ++p) {
        auto panel = get_panel(j, p, time, &clock);
        clock.set_block(owner_[p]);
        apply_panel_qt(*panel, x.view(), charge("SBR-Back"));
      }
    }
    signal("SBR-Back-finished", j, time);

    stage = "BC-Back";
    {
      if (cfg_.order == Order::Sequential) time.arrive(barrier("SBR-Back-finished"));
      time.arrive(barrier("BC-finished"));
      StageClock clock(rec_, time, j, Stage::BCBack, j, token_);
      bc_back_apply(u_[static_cast<std::size_t>(j)], x.view(), charge("BC-Back"), cfg_.bc_back);
    }
    signal("BC-Back-finished", j, time);

    stage = "FinalMultiply";
    {
      if (cfg_.order == Order::Sequential) time.arrive(barrier("BC-Back-finished"));
      Message qd = fabric_.recv(j, kHost, "Qd");
      time.arrive(qd.stamp);
      StageClock clock(rec_, time, j, Stage::FinalMultiply, j, token_);
      Matrix d = from_payload(n_, n_, qd.payload);
      Matrix rows = final_gemm(x.view(), d.view(), charge("FinalMultiply"), Op::T);
      Message out;
      out.tag = "Q";
      out.ints = {c0, c1};
      out.payload = to_payload(rows);
      send(j, kHost, "Q-Gather", std::move(out), clock.now());
    }
  }

  void back_conventional(int j, std::string& stage, index_t c0, index_t c1) {
    StreamTime time;
    stage = "BC-Back";
    std::vector<std::shared_ptr<const ReflectorPanel>> panels;
    for (std::size_t p = 0; p < panels_.size(); ++p) panels.push_back(get_panel(j, p, time, nullptr));
    Message qd = fabric_.recv(j, kHost, "Qd");
    time.arrive(qd.stamp);
    time.arrive(barrier("BC-finished"));
    Matrix x;
    {
      StageClock clock(rec_, time, j, Stage::BCBack, j, token_);
      Matrix d = from_payload(n_, n_, qd.payload);
      x = to_matrix(d.view().block(0, c0, n_, c1 - c0));
      bc_back_apply(u_[static_cast<std::size_t>(j)], x.view(), charge("BC-Back"), cfg_.bc_back,
                    ReflectorOrder::Reverse);
    }
    stage = "SBR-Back";
    {
      StageClock clock(rec_, time, j, Stage::SBRBack, j, token_);
      for (auto it = panels.rbegin(); it != panels.rend(); ++it) {
        const auto& pn = **it;
        MatrixView rows = x.block(pn.row_offset, 0, pn.rows(), x.cols());
        Matrix t = multiply(Op::T, Op::N, pn.y.view(), rows, charge("SBR-Back"));
        gemm(Op::N, Op::N, -1.0, pn.w.view(), t.view(), 1.0, rows, charge("SBR-Back"));
      }
      Message out;
      out.tag = "Q";
      out.ints = {c0, c1};
      out.payload = to_payload(x);
      send(j, kHost, "Q-Gather", std::move(out), clock.now());
    }
  }

  // ---- host: gathers T, runs the solver, assembles Q ----

  void host(std::string& stage) {
    StreamTime time;
    stage = "Solver";
    TridiagonalMatrix t;
    t.d.resize(static_cast<std::size_t>(n_));
    t.e.resize(static_cast<std::size_t>(n_ - 1));
    for (int j = 0; j < w_; ++j) {
      Message msg = fabric_.recv(kHost, j, "T");
      time.arrive(msg.stamp);
      const index_t s = msg.ints.at(0), e = msg.ints.at(1);
      const index_t ne = std::min(e, n_ - 1) - s;
      std::copy_n(msg.payload.begin(), e - s, t.d.begin() + s);
      std::copy_n(msg.payload.begin() + (e - s), ne, t.e.begin() + s);
    }
    {
      StageClock clock(rec_, time, kHost, Stage::Solver, 0, token_);
      result_ = tridiag_eig(t, cfg_.want_vectors);
    }
    if (!cfg_.want_vectors) return;
    Message qd;
    qd.tag = "Qd";
    qd.payload = to_payload(*result_.q);
    broadcast(kHost, "Solver-Bcast", std::move(qd), everyone_but(kHost), time.t);

    stage = "Gather";
    Matrix q(n_, n_);
    for (int j = 0; j < w_; ++j) {
      Message msg = fabric_.recv(kHost, j, "Q");
      const index_t c0 = msg.ints.at(0), c1 = msg.ints.at(1);
      if (cfg_.order == Order::Conventional) {
        std::copy(msg.payload.begin(), msg.payload.end(), q.col(c0));
      } else {
        copy_into(from_payload(c1 - c0, n_, msg.payload).view(), q.block(c0, 0, c1 - c0, n_));
      }
    }
    normalize_signs(q);
    result_.q = std::move(q);
  }

  const SymmetricMatrix& a_;
  PipelineConfig cfg_;
  index_t n_;
  int w_;
  index_t b_;
  std::vector<ColumnRange> blocks_;
  std::vector<PanelSpan> panels_;
  std::vector<int> owner_;
  Fabric fabric_;
  TraceRecorder rec_;
  FlopCounter flops_;
  BackPlan plan_;
  double skew_ = 0.0;
  std::vector<std::unique_ptr<PanelStore>> stores_;
  std::vector<BulgeReflectorSet> u_;
  EigenResult result_;
  std::mutex token_storage_;
  std::mutex* token_ = nullptr;
  std::atomic<bool> aborted_{false};
  std::mutex err_mu_;
  std::optional<PipelineError> error_;
};

}  // namespace detail

/// Skew for the second run: workers that finish the forward stages early
/// take more back-transform columns. The gap between the first and last
/// worker's forward busy time, as a fraction of the run, sets the ramp,
/// capped at 5%.
inline double tuned_skew(const PipelineResult& first, int workers) {
  if (workers < 2 || first.trace.empty()) return 0.0;
  const auto busy = busy_time(first.trace, workers, {Stage::SBR, Stage::BC});
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (const auto& e : first.trace) lo = std::min(lo, e.t_start), hi = std::max(hi, e.t_end);
  const double span = static_cast<double>(std::max<std::int64_t>(hi - lo, 1));
  const double gap = (busy.back() - busy.front()) / span;
  return std::clamp(0.5 * gap, 0.0, 0.05);
}

inline PipelineResult run(const SymmetricMatrix& a, const PipelineConfig& cfg) {
  cfg.validate(a.n());
  auto once = [&](double skew) {
    detail::Run r(a, cfg, skew);
    return r.execute();
  };
  PipelineResult out = once(cfg.back_skew);
  if (cfg.auto_skew && cfg.workers > 1 && cfg.order == Order::Pipelined) out = once(tuned_skew(out, cfg.workers));
  if (!cfg.trace_path.empty()) {
    std::ofstream os(cfg.trace_path);
    if (!os) throw Error("cannot write trace to " + cfg.trace_path);
    write_jsonl(os, out.trace);
  }
  return out;
}

}  // namespace evd
