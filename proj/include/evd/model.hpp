#pragma once

// Column partitioning, analytic communication volumes of band reduction,
// and a deterministic discrete-event simulator of the multi-worker
// schedule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evd/back.hpp"
#include "evd/matrix.hpp"
#include "evd/sbr.hpp"
#include "evd/trace.hpp"

namespace evd {

struct ColumnRange {
  index_t begin = 0;
  index_t end = 0;
  index_t size() const { return end - begin; }
  bool operator==(const ColumnRange&) const = default;
};

/// Contiguous blocks covering [0, n); the first n % w blocks get one extra
/// column.
inline std::vector<ColumnRange> partition(index_t n, int workers) {
  if (workers < 1) throw Error("partition: workers must be >= 1");
  if (workers > n) throw Error("partition: more workers than columns");
  std::vector<ColumnRange> out;
  const index_t base = n / workers, extra = n % workers;
  index_t c = 0;
  for (int i = 0; i < workers; ++i) {
    const index_t w = base + (i < extra ? 1 : 0);
    out.push_back({c, c + w});
    c += w;
  }
  return out;
}

/// Words moved when only the lower triangle is distributed:
/// sum over rounds i of (n - i b)^2 / 2.
inline double comm_triangular_words(index_t n, index_t b) {
  double s = 0.0;
  for (index_t i = 1; i * b < n; ++i) {
    const double m = static_cast<double>(n - i * b);
    s += 0.5 * m * m;
  }
  return s;
}

/// n (n - b) (2n - b) / (12 b); equals the sum when b divides n.
inline double comm_triangular_closed(index_t n, index_t b) {
  const double dn = static_cast<double>(n), db = static_cast<double>(b);
  return dn * (dn - db) * (2.0 * dn - db) / (12.0 * db);
}

/// Words moved when every worker holds full columns: only W, Y and Z are
/// broadcast, 3 (n - i b) b per round.
inline std::uint64_t comm_broadcast_words(index_t n, index_t b) {
  std::uint64_t s = 0;
  for (index_t i = 1; i * b < n; ++i) s += 3ull * static_cast<std::uint64_t>(n - i * b) * static_cast<std::uint64_t>(b);
  return s;
}

/// Largest integer bandwidth b with b < 4p/q: the extra update work of
/// full storage, 2(...)kb/p, is then cheaper than shipping the trailing
/// matrix, 8(...)k/q.
inline index_t crossover_bandwidth(double p, double q) {
  if (!(p > 0.0) || !(q > 0.0)) throw Error("crossover_bandwidth: p and q must be positive");
  return static_cast<index_t>(std::ceil(4.0 * p / q)) - 1;
}

enum class Order { Pipelined, Sequential, Conventional };

inline std::string to_string(Order o) {
  switch (o) {
    case Order::Pipelined: return "pipelined";
    case Order::Sequential: return "sequential";
    case Order::Conventional: return "conventional";
  }
  return "?";
}

inline Order parse_order(const std::string& s) {
  if (s == "pipelined") return Order::Pipelined;
  if (s == "sequential") return Order::Sequential;
  if (s == "conventional") return Order::Conventional;
  throw Error("unknown order '" + s + "'");
}

/// Stage durations for the simulator. Unit: every task takes one tick.
/// Analytic: multiply-add counts of the kernels (the same formulas the flop
/// counter charges) times 2, divided by the stage's rate, plus words * 8 / q.
/// Durations can be overridden or padded per (stage, worker).
struct CostModel {
  enum class Kind { Unit, Analytic };
  Kind kind = Kind::Analytic;
  // Defaults model a large 8-GPU run (n = 49152, b = 32) using commonly
  // quoted rates for AW GEMMs, BLAS2 BC-Back and NVLink. The bulge chasing
  // and host solver rates are our own estimates.
  index_t n = 49152;
  index_t b = 32;
  double p = 1e13;          // GEMM-rich stages, flop/s
  double p_bc = 2e11;       // bulge chasing, memory bound
  double p_blas2 = 3e12;    // BC-Back rank-1 updates
  double p_host = 1e13;     // host tridiagonal solver, effective
  double q = 0.35e12;       // link bandwidth, bytes/s
  double back_skew = 0.05;  // load-balance ramp; only the pipelined order uses it
  std::map<std::pair<Stage, int>, double> override_cost;  // replaces the whole stage for that worker
  std::map<std::pair<Stage, int>, double> extra_cost;     // added to it

  static CostModel unit() {
    CostModel m;
    m.kind = Kind::Unit;
    return m;
  }

  static CostModel calibrated() { return CostModel{}; }

  void validate() const {
    if (n < 2 || b < 1 || b >= n) throw Error("CostModel: need 1 <= b < n");
    for (double r : {p, p_bc, p_blas2, p_host, q})
      if (!(r > 0.0)) throw Error("CostModel: rates must be positive");
    for (const auto& m : {override_cost, extra_cost})
      for (const auto& [k, v] : m)
        if (!(v >= 0.0)) throw Error("CostModel: costs must be >= 0");
  }
};

inline CostModel cost_model_from_json(const nlohmann::json& j) {
  CostModel m;
  const std::string kind = j.value("kind", std::string("analytic"));
  if (kind == "unit")
    m.kind = CostModel::Kind::Unit;
  else if (kind != "analytic")
    throw Error("cost model: unknown kind '" + kind + "'");
  m.n = j.value("n", m.n);
  m.b = j.value("b", m.b);
  m.p = j.value("p", m.p);
  m.p_bc = j.value("p_bc", m.p_bc);
  m.p_blas2 = j.value("p_blas2", m.p_blas2);
  m.p_host = j.value("p_host", m.p_host);
  m.q = j.value("q", m.q);
  m.back_skew = j.value("back_skew", m.back_skew);
  if (j.contains("override")) {
    for (const auto& item : j.at("override")) {
      auto stage = parse_stage(item.at("stage").get<std::string>());
      if (!stage) throw Error("cost model: unknown stage in override");
      m.override_cost[{*stage, item.at("worker").get<int>()}] = item.at("cost").get<double>();
    }
  }
  m.validate();
  return m;
}

struct SimResult {
  std::vector<TraceEvent> trace;  // ticks: 1 per unit task, or nanoseconds for the analytic model
  double makespan = 0.0;          // unit ticks or seconds
};

namespace detail {

struct SimTask {
  int worker;  // -1 host
  Stage stage;
  int block;
  double cost;
  std::uint64_t words = 0;
  std::vector<std::size_t> deps;
  double start = 0.0, end = 0.0;
};

// Multiply-add estimates per task, shared with the real kernels' charges.
struct Costs {
  const CostModel& m;
  int w;
  std::vector<ColumnRange> blocks;
  std::vector<PanelSpan> panels;
  std::vector<index_t> back_cols;

  double sbr_round(int owner_block, int worker) const {
    double macs = 0.0, words = 0.0;
    const auto& own = blocks[static_cast<std::size_t>(worker)];
    for (const auto& ps : panels) {
      if (ps.col < blocks[static_cast<std::size_t>(owner_block)].begin ||
          ps.col >= blocks[static_cast<std::size_t>(owner_block)].end)
        continue;
      const double r0 = static_cast<double>(ps.col + m.b), mm = static_cast<double>(m.n) - r0;
      const double k = static_cast<double>(ps.width);
      if (worker == owner_block) macs += 2.0 * mm * k * k;  // QR plus W
      const double cols = std::max(0.0, static_cast<double>(own.end) - std::max(r0, static_cast<double>(own.begin)));
      const bool last = worker == w - 1;
      macs += cols * mm * k + 2.0 * cols * k * k + (last ? 1.0 : 2.0) * cols * mm * k;
      words += 3.0 * mm * k;
    }
    return 2.0 * macs / m.p + words * 8.0 / m.q;
  }

  double bc(int i) const {
    const double s = static_cast<double>(blocks[static_cast<std::size_t>(i)].begin);
    const double len = static_cast<double>(blocks[static_cast<std::size_t>(i)].size());
    const double macs = 6.0 * static_cast<double>(m.b) * (s * len + 0.5 * len * len);
    return 2.0 * macs / m.p_bc;
  }

  double overlap_comm() const { return 2.0 * static_cast<double>(m.b * m.b) * 8.0 / m.q; }

  double sbr_back(int owner_block, int worker) const {
    double macs = 0.0;
    const double cols = static_cast<double>(back_cols[static_cast<std::size_t>(worker)]);
    for (const auto& ps : panels) {
      if (ps.col < blocks[static_cast<std::size_t>(owner_block)].begin ||
          ps.col >= blocks[static_cast<std::size_t>(owner_block)].end)
        continue;
      macs += 2.0 * (static_cast<double>(m.n - ps.col - m.b)) * static_cast<double>(ps.width) * cols;
    }
    return 2.0 * macs / m.p;
  }

  double bc_back(int worker) const {
    const double nn = static_cast<double>(m.n);
    return 2.0 * static_cast<double>(back_cols[static_cast<std::size_t>(worker)]) * nn * nn / m.p_blas2;
  }

  double solver() const {
    const double nn = static_cast<double>(m.n);
    return 4.0 / 3.0 * nn * nn * nn / m.p_host;
  }

  double final_multiply(int worker) const {
    const double nn = static_cast<double>(m.n);
    return 2.0 * static_cast<double>(back_cols[static_cast<std::size_t>(worker)]) * nn * nn / m.p + nn * nn * 8.0 / m.q;
  }
};

}  // namespace detail

/// Back-transform column counts: the load-balance ramp when feasible,
/// otherwise the plain partition (also descending).
inline std::vector<index_t> back_columns(index_t n, int workers, double skew) {
  try {
    return make_back_plan(n, workers, n / workers, skew).sizes;
  } catch (const Error&) {
    std::vector<index_t> out;
    for (const auto& r : partition(n, workers)) out.push_back(r.size());
    return out;
  }
}

/// Simulates the multi-worker schedule. Each worker has
/// one in-order stream:
///
///   SBR rounds of blocks 0..i (block k on worker i >= k is its share of
///   the trailing update), BC_i, SBR-Back_i per panel block, BC-Back_i,
///   FinalMultiply_i
///
/// plus the host solver. Dependencies (pipelined): SBR round k needs round
/// k-1 finished everywhere; BC_i needs its own SBR and the overlap message
/// from BC_{i-1}; SBR-Back_i's piece k needs round k's panels; BC-Back_i
/// needs every BC; the solver needs every BC; FinalMultiply_i needs the
/// solver. Sequential order adds barriers between SBR, BC, SBR-Back,
/// BC-Back and FinalMultiply. Since every stream has a fixed order, start
/// times are longest paths and grow monotonically with any cost.
inline SimResult simulate(const CostModel& model, int workers, Order order) {
  model.validate();
  if (workers < 1) throw Error("simulate: workers must be >= 1");
  const bool unit = model.kind == CostModel::Kind::Unit;
  const int w = workers;
  detail::Costs cost{model, w, partition(model.n, w), {}, {}};
  std::vector<index_t> breaks;
  for (const auto& r : cost.blocks) breaks.push_back(r.begin);
  cost.panels = plan_panels(model.n, model.b, breaks);
  cost.back_cols = back_columns(model.n, w, order == Order::Sequential ? 0.0 : model.back_skew);

  std::vector<detail::SimTask> tasks;
  auto add = [&](int worker, Stage st, int block, double c, std::vector<std::size_t> deps, std::uint64_t words = 0) {
    auto key = std::make_pair(st, worker);
    if (auto it = model.override_cost.find(key); it != model.override_cost.end()) c = it->second;
    if (auto it = model.extra_cost.find(key); it != model.extra_cost.end()) c += it->second;
    tasks.push_back({worker, st, block, c, words, std::move(deps)});
    return tasks.size() - 1;
  };
  const bool seq = order == Order::Sequential;
  const double back_pieces = static_cast<double>(w);

  std::vector<std::vector<std::size_t>> sbr_round(static_cast<std::size_t>(w));
  std::vector<std::size_t> all_sbr;
  for (int k = 0; k < w; ++k) {
    for (int i = k; i < w; ++i) {
      std::vector<std::size_t> deps = k > 0 ? sbr_round[static_cast<std::size_t>(k - 1)] : std::vector<std::size_t>{};
      const double c = unit ? 1.0 : cost.sbr_round(k, i);
      const auto t = add(i, Stage::SBR, k, c, deps);
      sbr_round[static_cast<std::size_t>(k)].push_back(t);
      all_sbr.push_back(t);
    }
  }
  std::vector<std::size_t> bc(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) {
    std::vector<std::size_t> deps = seq ? all_sbr : std::vector<std::size_t>{};
    if (i > 0) {
      const auto msg = add(i - 1, Stage::Comm, i, unit ? 0.0 : cost.overlap_comm(), {bc[static_cast<std::size_t>(i - 1)]},
                           2ull * static_cast<std::uint64_t>(model.b * model.b));
      deps.push_back(msg);
      deps.push_back(bc[static_cast<std::size_t>(i - 1)]);
    }
    bc[static_cast<std::size_t>(i)] = add(i, Stage::BC, i, unit ? 1.0 : cost.bc(i), deps);
  }
  const auto solver = add(-1, Stage::Solver, 0, unit ? 1.0 : cost.solver(), bc);
  std::vector<std::size_t> sbrb_last(static_cast<std::size_t>(w)), all_sbrb;
  for (int i = 0; i < w; ++i) {
    for (int k = 0; k < w; ++k) {
      std::vector<std::size_t> deps = sbr_round[static_cast<std::size_t>(k)];
      if (seq) deps.insert(deps.end(), bc.begin(), bc.end());
      const auto t = add(i, Stage::SBRBack, k, unit ? 1.0 / back_pieces : cost.sbr_back(k, i), deps);
      all_sbrb.push_back(t);
      sbrb_last[static_cast<std::size_t>(i)] = t;
    }
  }
  std::vector<std::size_t> bcb(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) {
    std::vector<std::size_t> deps = bc;
    deps.push_back(sbrb_last[static_cast<std::size_t>(i)]);
    if (seq) deps.insert(deps.end(), all_sbrb.begin(), all_sbrb.end());
    bcb[static_cast<std::size_t>(i)] = add(i, Stage::BCBack, i, unit ? 1.0 : cost.bc_back(i), deps);
  }
  for (int i = 0; i < w; ++i) {
    std::vector<std::size_t> deps{bcb[static_cast<std::size_t>(i)], solver};
    if (seq) deps.insert(deps.end(), bcb.begin(), bcb.end());
    add(i, Stage::FinalMultiply, i, unit ? 1.0 : cost.final_multiply(i), deps);
  }

  // In-order streams: each task also waits for the previous non-Comm task
  // of its worker. Then a Kahn pass computes longest-path start times.
  std::map<int, std::size_t> last_on;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].stage == Stage::Comm) continue;
    if (auto it = last_on.find(tasks[t].worker); it != last_on.end()) tasks[t].deps.push_back(it->second);
    last_on[tasks[t].worker] = t;
  }
  std::vector<std::vector<std::size_t>> succ(tasks.size());
  std::vector<std::size_t> indeg(tasks.size(), 0);
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (auto d : tasks[t].deps) succ[d].push_back(t), ++indeg[t];
  std::queue<std::size_t> ready;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    if (indeg[t] == 0) ready.push(t);
  std::size_t done = 0;
  while (!ready.empty()) {
    const auto t = ready.front();
    ready.pop();
    ++done;
    double s = 0.0;
    for (auto d : tasks[t].deps) s = std::max(s, tasks[d].end);
    tasks[t].start = s;
    tasks[t].end = s + tasks[t].cost;
    for (auto nx : succ[t])
      if (--indeg[nx] == 0) ready.push(nx);
  }
  if (done != tasks.size()) throw Error("simulate: cyclic dependency");

  SimResult out;
  const double scale = unit ? 1.0 : 1e9;
  for (const auto& t : tasks) {
    out.makespan = std::max(out.makespan, t.end);
    out.trace.push_back({t.worker, t.stage, t.block, static_cast<std::int64_t>(std::llround(t.start * scale)),
                         static_cast<std::int64_t>(std::llround(t.end * scale)), t.words});
  }
  std::stable_sort(out.trace.begin(), out.trace.end(),
                   [](const TraceEvent& a, const TraceEvent& b) { return a.t_start < b.t_start; });
  return out;
}

}  // namespace evd
