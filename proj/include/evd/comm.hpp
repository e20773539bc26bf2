#pragma once

// In-process stand-in for inter-device traffic: per-worker mailboxes with
// (source, tag) matching, a broadcast primitive, one-shot signals, and a
// ledger that counts every FP64 word that crosses a worker boundary.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "evd/matrix.hpp"

namespace evd {

inline constexpr int kHost = -1;
inline constexpr int kAllWorkers = -1;  // ledger dst for a broadcast

class ProtocolError : public Error {
 public:
  using Error::Error;
};

struct Message {
  int src = 0;
  std::string tag;
  std::int64_t seq = 0;        // caller-defined ordering key (sweep, panel...)
  std::vector<double> payload;
  std::vector<std::int64_t> ints;  // small integer metadata, not counted as words
  std::int64_t stamp = 0;          // sender's virtual time
};

/// Words moved per (src, dst, stage). A broadcast is recorded once with
/// dst = kAllWorkers: its payload is what crosses the fabric.
class CommLedger {
 public:
  struct Entry {
    std::uint64_t words = 0;
    std::uint64_t messages = 0;
  };
  using Key = std::tuple<int, int, std::string>;

  CommLedger() = default;
  CommLedger(const CommLedger& other) : entries_(other.entries()) {}
  CommLedger& operator=(const CommLedger& other) {
    if (this != &other) {
      auto snapshot = other.entries();
      std::lock_guard lock(mu_);
      entries_ = std::move(snapshot);
    }
    return *this;
  }

  void record(int src, int dst, const std::string& stage, std::uint64_t words) {
    std::lock_guard lock(mu_);
    auto& e = entries_[{src, dst, stage}];
    e.words += words;
    e.messages += 1;
  }

  std::map<Key, Entry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  std::uint64_t stage_words(const std::string& stage) const {
    std::lock_guard lock(mu_);
    std::uint64_t s = 0;
    for (const auto& [k, e] : entries_)
      if (std::get<2>(k) == stage) s += e.words;
    return s;
  }

  std::uint64_t stage_messages(const std::string& stage) const {
    std::lock_guard lock(mu_);
    std::uint64_t s = 0;
    for (const auto& [k, e] : entries_)
      if (std::get<2>(k) == stage) s += e.messages;
    return s;
  }

  std::uint64_t total_words() const {
    std::lock_guard lock(mu_);
    std::uint64_t s = 0;
    for (const auto& [k, e] : entries_) s += e.words;
    return s;
  }

  void write_csv(std::ostream& os) const {
    os << "src,dst,stage,words\n";
    for (const auto& [k, e] : entries())
      os << std::get<0>(k) << ',' << std::get<1>(k) << ',' << std::get<2>(k) << ',' << e.words << '\n';
  }

 private:
  mutable std::mutex mu_;
  std::map<Key, Entry> entries_;
};

class Mailbox {
 public:
  void push(Message m) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(m));
    }
    cv_.notify_all();
  }

  /// Blocks until a message from src with this tag is queued; messages from
  /// one source with one tag are delivered in send order.
  Message pop(int src, const std::string& tag) {
    std::unique_lock lock(mu_);
    for (;;) {
      if (aborted_) throw ProtocolError("mailbox aborted while waiting for '" + tag + "'");
      for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if (it->src == src && it->tag == tag) {
          Message m = std::move(*it);
          queue_.erase(it);
          return m;
        }
      }
      cv_.wait(lock);
    }
  }

  void abort() {
    {
      std::lock_guard lock(mu_);
      aborted_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  bool aborted_ = false;
};

/// One-shot events keyed by (stage, worker, block), each carrying the
/// setter's time stamp.
class SignalBoard {
 public:
  using Key = std::tuple<std::string, int, int>;

  void set(const std::string& stage, int worker, int block = 0, std::int64_t stamp = 0) {
    {
      std::lock_guard lock(mu_);
      fired_.emplace(Key{stage, worker, block}, stamp);
    }
    cv_.notify_all();
  }

  /// Blocks until the event fires; returns its time stamp.
  std::int64_t wait(const std::string& stage, int worker, int block = 0) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return aborted_ || fired_.count({stage, worker, block}) > 0; });
    if (aborted_) throw ProtocolError("signal board aborted while waiting for " + stage);
    return fired_.at({stage, worker, block});
  }

  bool is_set(const std::string& stage, int worker, int block = 0) const {
    std::lock_guard lock(mu_);
    return fired_.count({stage, worker, block}) > 0;
  }

  void abort() {
    {
      std::lock_guard lock(mu_);
      aborted_ = true;
    }
    cv_.notify_all();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, std::int64_t> fired_;
  bool aborted_ = false;
};

/// Mailboxes for `workers` devices plus the host.
class Fabric {
 public:
  explicit Fabric(int workers) : workers_(workers), boxes_(static_cast<std::size_t>(workers) + 1) {
    for (auto& b : boxes_) b = std::make_unique<Mailbox>();
  }

  int workers() const { return workers_; }
  CommLedger& ledger() { return ledger_; }
  const CommLedger& ledger() const { return ledger_; }
  SignalBoard& signals() { return signals_; }

  /// Ledger id of an endpoint; the host is recorded as `workers`.
  int ledger_id(int endpoint) const { return endpoint == kHost ? workers_ : endpoint; }

  void send(int src, int dst, const std::string& stage, Message m) {
    m.src = src;
    ledger_.record(ledger_id(src), ledger_id(dst), stage, m.payload.size());
    box(dst).push(std::move(m));
  }

  /// Delivers to every other worker; the ledger counts the payload once.
  void broadcast(int src, const std::string& stage, const Message& m) {
    std::vector<int> all;
    for (int w = 0; w < workers_; ++w)
      if (w != src) all.push_back(w);
    broadcast(src, stage, m, all);
  }

  /// Broadcast whose copies are handed only to the listed workers (the
  /// others would discard it). Still one transmission in the ledger.
  void broadcast(int src, const std::string& stage, const Message& m, const std::vector<int>& consumers) {
    ledger_.record(ledger_id(src), kAllWorkers, stage, m.payload.size());
    for (int w : consumers) {
      if (w == src) continue;
      Message copy = m;
      copy.src = src;
      box(w).push(std::move(copy));
    }
  }

  Message recv(int self, int src, const std::string& tag) { return box(self).pop(src, tag); }

  void abort() {
    for (auto& b : boxes_) b->abort();
    signals_.abort();
  }

 private:
  Mailbox& box(int id) {
    const int idx = id == kHost ? workers_ : id;
    if (idx < 0 || idx > workers_) throw ProtocolError("no such endpoint " + std::to_string(id));
    return *boxes_[static_cast<std::size_t>(idx)];
  }

  int workers_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  CommLedger ledger_;
  SignalBoard signals_;
};

}  // namespace evd
