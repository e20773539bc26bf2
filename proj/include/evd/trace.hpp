#pragma once

// Timeline events, the JSONL trace format, and trace post-processing
// (validity checks and idle fractions).

#include <algorithm>
#include <array>
#include <ctime>
#include <cstdint>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evd/matrix.hpp"

namespace evd {

enum class Stage { SBR, BC, SBRBack, BCBack, Solver, FinalMultiply, Comm };

inline constexpr std::array<std::pair<Stage, std::string_view>, 7> kStageNames{{
    {Stage::SBR, "SBR"},
    {Stage::BC, "BC"},
    {Stage::SBRBack, "SBR-Back"},
    {Stage::BCBack, "BC-Back"},
    {Stage::Solver, "Solver"},
    {Stage::FinalMultiply, "FinalMultiply"},
    {Stage::Comm, "Comm"},
}};

inline std::string to_string(Stage s) {
  for (const auto& [k, name] : kStageNames)
    if (k == s) return std::string(name);
  return "?";
}

inline std::optional<Stage> parse_stage(std::string_view name) {
  for (const auto& [k, label] : kStageNames)
    if (label == name) return k;
  return std::nullopt;
}

struct TraceEvent {
  int worker = 0;  // host = -1
  Stage stage = Stage::SBR;
  int block = 0;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::uint64_t words = 0;
};

inline void to_json(nlohmann::json& j, const TraceEvent& e) {
  j = nlohmann::json{{"worker", e.worker},   {"stage", to_string(e.stage)}, {"block", e.block},
                     {"t_start", e.t_start}, {"t_end", e.t_end},            {"words", e.words}};
}

inline void from_json(const nlohmann::json& j, TraceEvent& e) {
  auto stage = parse_stage(j.at("stage").get<std::string>());
  if (!stage) throw Error("trace: unknown stage " + j.at("stage").dump());
  e.worker = j.at("worker").get<int>();
  e.stage = *stage;
  e.block = j.at("block").get<int>();
  e.t_start = j.at("t_start").get<std::int64_t>();
  e.t_end = j.at("t_end").get<std::int64_t>();
  e.words = j.value("words", std::uint64_t{0});
}

inline void write_jsonl(std::ostream& os, const std::vector<TraceEvent>& events) {
  for (const auto& e : events) os << nlohmann::json(e).dump() << '\n';
}

inline std::vector<TraceEvent> read_jsonl(std::istream& is) {
  std::vector<TraceEvent> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(nlohmann::json::parse(line).get<TraceEvent>());
  }
  return out;
}

/// Thread-safe event sink.
class TraceRecorder {
 public:
  void record(const TraceEvent& e) {
    std::lock_guard lock(mu_);
    events_.push_back(e);
  }

  std::vector<TraceEvent> events() const {
    std::lock_guard lock(mu_);
    auto out = events_;
    std::stable_sort(out.begin(), out.end(), [](const TraceEvent& a, const TraceEvent& b) {
      return a.t_start != b.t_start ? a.t_start < b.t_start : a.worker < b.worker;
    });
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
};

/// CPU time consumed by the calling thread, in nanoseconds.
inline std::int64_t thread_cpu_ns() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
}

/// Virtual time of one in-order stream of a device, in nanoseconds.
///
/// Workers are threads that may share cores, so wall-clock intervals say
/// more about the OS scheduler than about the schedule. Instead every
/// stream behaves as if it owned its device: compute advances it by the
/// thread's CPU time, and consuming a message or signal advances it to the
/// producer's time stamp. Transfers are modeled as instantaneous.
struct StreamTime {
  std::int64_t t = 0;
  void arrive(std::int64_t stamp) { t = std::max(t, stamp); }
};

/// Records compute bursts of one stage on one stream. Blocking waits go
/// through wait() so that time spent waiting never counts as busy.
///
/// With a `token`, a burst holds it from resume() to pause(). When streams
/// outnumber cores this keeps bursts from interleaving, so a burst's CPU
/// time is not inflated by other streams evicting its cache lines.
class StageClock {
 public:
  StageClock(TraceRecorder& rec, StreamTime& time, int worker, Stage stage, int block, std::mutex* token = nullptr)
      : rec_(rec), time_(time), token_(token), worker_(worker), stage_(stage), block_(block) {
    resume();
  }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;
  ~StageClock() { pause(); }

  /// Current virtual time, including the running burst.
  std::int64_t now() const { return running_ ? time_.t + (thread_cpu_ns() - cpu0_) : time_.t; }

  void pause() {
    if (!running_) return;
    time_.t = now();
    running_ = false;
    if (token_) token_->unlock();
    rec_.record({worker_, stage_, block_, start_, time_.t, 0});
  }

  void resume() {
    if (running_) return;
    if (token_) token_->lock();
    start_ = time_.t;
    cpu0_ = thread_cpu_ns();
    running_ = true;
  }

  void set_block(int block) {
    if (block == block_) return;
    pause();
    block_ = block;
    resume();
  }

  /// Runs f with the clock paused; `stamp` extracts the producer's time
  /// stamp from the result.
  template <class F, class S>
  decltype(auto) wait(F&& f, S&& stamp) {
    pause();
    struct Resume {
      StageClock* c;
      ~Resume() { c->resume(); }
    } guard{this};
    decltype(auto) r = f();
    time_.arrive(stamp(r));
    return r;
  }

 private:
  TraceRecorder& rec_;
  StreamTime& time_;
  std::mutex* token_;
  int worker_;
  Stage stage_;
  int block_;
  std::int64_t start_ = 0;
  std::int64_t cpu0_ = 0;
  bool running_ = false;
};

struct TraceCheckOptions {
  // BC and SBR-Back run on separate streams of a worker and may overlap.
  bool allow_bc_sbrback_overlap = true;
  // When set, every boundary must carry exactly this many overlap messages
  // (Comm events with stage BC semantics are tagged block = receiving worker).
  std::optional<int> overlap_messages_per_boundary;
  int workers = 0;
};

namespace detail {
inline std::pair<std::int64_t, std::int64_t> span_of(const std::vector<TraceEvent>& ev, auto pred) {
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (const auto& e : ev)
    if (pred(e)) lo = std::min(lo, e.t_start), hi = std::max(hi, e.t_end);
  return {lo, hi};
}
}  // namespace detail

/// Returns a list of violations; empty means the trace is valid.
inline std::vector<std::string> validate_trace(const std::vector<TraceEvent>& ev, const TraceCheckOptions& opt) {
  std::vector<std::string> problems;
  for (const auto& e : ev)
    if (e.t_start > e.t_end) problems.push_back("event with t_start > t_end on worker " + std::to_string(e.worker));

  std::map<int, std::vector<const TraceEvent*>> by_worker;
  // Empty intervals occupy no stream time. They appear when fractional
  // simulated costs are quantized to ticks.
  for (const auto& e : ev)
    if (e.stage != Stage::Comm && e.t_start < e.t_end) by_worker[e.worker].push_back(&e);
  for (auto& [w, list] : by_worker) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->t_start < b->t_start; });
    for (std::size_t i = 0; i < list.size(); ++i)
      for (std::size_t j = i + 1; j < list.size() && list[j]->t_start < list[i]->t_end; ++j) {
        const auto sa = list[i]->stage, sb = list[j]->stage;
        const bool allowed = opt.allow_bc_sbrback_overlap &&
                             ((sa == Stage::BC && sb == Stage::SBRBack) || (sa == Stage::SBRBack && sb == Stage::BC));
        if (!allowed)
          problems.push_back("overlapping " + to_string(sa) + " and " + to_string(sb) + " on worker " +
                             std::to_string(w));
      }
  }

  const int workers = opt.workers;
  for (int i = 0; i + 1 < workers; ++i) {
    auto a = detail::span_of(ev, [&](const TraceEvent& e) { return e.stage == Stage::SBR && e.worker == i && e.block == i; });
    auto b = detail::span_of(
        ev, [&](const TraceEvent& e) { return e.stage == Stage::SBR && e.worker == i + 1 && e.block == i + 1; });
    if (a.second != INT64_MIN && b.first != INT64_MAX && a.second > b.first)
      problems.push_back("SBR block " + std::to_string(i + 1) + " started before block " + std::to_string(i) +
                         " finished");
  }
  const auto bc = detail::span_of(ev, [](const TraceEvent& e) { return e.stage == Stage::BC; });
  const auto solver = detail::span_of(ev, [](const TraceEvent& e) { return e.stage == Stage::Solver; });
  for (const auto& e : ev) {
    if (e.stage == Stage::BCBack && bc.second != INT64_MIN && e.t_start < bc.second)
      problems.push_back("BC-Back on worker " + std::to_string(e.worker) + " started before all BC finished");
    if (e.stage == Stage::FinalMultiply && solver.second != INT64_MIN && e.t_start < solver.second)
      problems.push_back("FinalMultiply on worker " + std::to_string(e.worker) + " started before the solver finished");
  }
  if (opt.overlap_messages_per_boundary) {
    for (int i = 1; i < workers; ++i) {
      const auto count = std::count_if(ev.begin(), ev.end(), [&](const TraceEvent& e) {
        return e.stage == Stage::Comm && e.worker == i - 1 && e.block == i;
      });
      if (count != *opt.overlap_messages_per_boundary)
        problems.push_back("boundary " + std::to_string(i) + " carried " + std::to_string(count) + " overlap messages");
    }
  }
  return problems;
}

/// Mean over workers of 1 - busy/makespan, where busy is the union of the
/// worker's non-Comm intervals and makespan spans the whole trace.
inline double idle_fraction(const std::vector<TraceEvent>& ev, int workers) {
  if (ev.empty() || workers < 1) return 0.0;
  auto all = detail::span_of(ev, [](const TraceEvent&) { return true; });
  const double makespan = static_cast<double>(all.second - all.first);
  if (makespan <= 0.0) return 0.0;
  double total = 0.0;
  for (int w = 0; w < workers; ++w) {
    std::vector<std::pair<std::int64_t, std::int64_t>> iv;
    for (const auto& e : ev)
      if (e.worker == w && e.stage != Stage::Comm) iv.emplace_back(e.t_start, e.t_end);
    std::sort(iv.begin(), iv.end());
    double busy = 0.0;
    std::int64_t cur_s = 0, cur_e = INT64_MIN;
    for (const auto& [s, e] : iv) {
      if (s > cur_e) {
        if (cur_e != INT64_MIN) busy += static_cast<double>(cur_e - cur_s);
        cur_s = s;
        cur_e = e;
      } else {
        cur_e = std::max(cur_e, e);
      }
    }
    if (cur_e != INT64_MIN) busy += static_cast<double>(cur_e - cur_s);
    total += 1.0 - busy / makespan;
  }
  return total / workers;
}

/// Busy time (union of non-Comm intervals) per worker for the given stages.
inline std::vector<double> busy_time(const std::vector<TraceEvent>& ev, int workers, std::vector<Stage> stages) {
  std::vector<double> out(static_cast<std::size_t>(workers), 0.0);
  for (const auto& e : ev)
    if (e.worker >= 0 && e.worker < workers && std::find(stages.begin(), stages.end(), e.stage) != stages.end())
      out[static_cast<std::size_t>(e.worker)] += static_cast<double>(e.t_end - e.t_start);
  return out;
}

}  // namespace evd
