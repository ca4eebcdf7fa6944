#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isolab/core.hpp"
#include "isolab/lock_table.hpp"
#include "isolab/workload.hpp"

namespace isolab {

// Multiversion engines.
//
// Snapshot isolation: a transaction reads from the committed state as of its
// start timestamp (plus its own buffered writes), never blocks, and commits
// only if no other transaction committed a write to an overlapping key inside
// its execution interval (first-committer-wins). One global counter feeds
// both start and commit timestamps.
//
// Read consistency: each statement reads the most recently committed value at
// the instant the statement begins, cursor fetches read as of the cursor
// open, and writes take long write locks (first-writer-wins).

using Timestamp = int;

struct Version {
  TxnId writer = 0;  // 0 = initial version
  int value = 0;
  Timestamp commit_ts = 0;
};

/// Committed versions per key, ordered by commit timestamp. Version 0 exists
/// for every declared key.
class VersionStore {
 public:
  explicit VersionStore(const std::map<Key, int>& initial) {
    for (const auto& [k, v] : initial) versions_[k] = {Version{0, v, 0}};
  }

  const Version& latest_at(const Key& k, Timestamp ts) const {
    auto it = versions_.find(k);
    if (it == versions_.end()) throw EngineError("unknown key '" + k + "'");
    const Version* best = nullptr;
    for (const auto& v : it->second) {
      if (v.commit_ts <= ts && (!best || v.commit_ts > best->commit_ts)) best = &v;
    }
    return *best;  // the initial version always qualifies
  }

  void publish(const Key& k, TxnId writer, int value, Timestamp ts) {
    versions_.at(k).push_back(Version{writer, value, ts});
  }

  bool known(const Key& k) const { return versions_.count(k) > 0; }

 private:
  std::map<Key, std::vector<Version>> versions_;
};

struct SnapshotTxn {
  enum class Status { Active, Committed, Aborted };
  Timestamp start_ts = 0;
  std::map<Key, int> write_set;
  Status status = Status::Active;
  Timestamp commit_ts = 0;
};

struct SiCommitResult {
  bool committed = false;
  Timestamp commit_ts = 0;
  std::vector<Key> conflict_keys;
};

class SnapshotEngine {
 public:
  explicit SnapshotEngine(const Workload& workload) : workload_(workload) {
    workload_.validate();
    store_.emplace(workload_.initial_db());
    history_.predicates = workload_.predicates;
    history_.universe = workload_.universe;
    history_.init = workload_.init;
    history_.flavor = Flavor::MultiVersion;
  }

  /// Starts a transaction at the next counter value.
  SnapshotTxn& begin(TxnId txn) {
    if (txns_.count(txn)) throw EngineError("transaction already begun");
    SnapshotTxn t;
    t.start_ts = ++counter_;
    return txns_[txn] = t;
  }

  /// Snapshot read: the transaction's own buffered write if present, else the
  /// newest version committed at or before its start timestamp. Never blocks.
  std::pair<int, TxnId> read(TxnId txn, const Key& key) {
    SnapshotTxn& t = active(txn);
    int value;
    TxnId writer;
    if (auto it = t.write_set.find(key); it != t.write_set.end()) {
      value = it->second;
      writer = txn;
    } else {
      const Version& v = store_->latest_at(key, t.start_ts);
      value = v.value;
      writer = v.writer;
    }
    history_.actions.push_back(Action{ActionKind::Read, txn, key, value, writer});
    return {value, writer};
  }

  /// Predicate evaluation against the snapshot plus own buffered writes;
  /// repeated evaluation inside one transaction returns the same set.
  std::vector<std::pair<Key, int>> predicate_read(TxnId txn,
                                                  const std::string& pred) {
    SnapshotTxn& t = active(txn);
    const PredicateDecl* pd = workload_.find_predicate(pred);
    if (!pd) throw EngineError("undeclared predicate '" + pred + "'");
    std::vector<std::pair<Key, int>> rows;
    for (const Key& k : pd->covered) {
      if (auto it = t.write_set.find(k); it != t.write_set.end()) {
        rows.emplace_back(k, it->second);
      } else {
        rows.emplace_back(k, store_->latest_at(k, t.start_ts).value);
      }
    }
    history_.actions.push_back(make_predicate_read(txn, pred));
    return rows;
  }

  /// Buffers the write; invisible to other transactions until commit.
  void write(TxnId txn, const Key& key, int value, bool via_cursor = false) {
    SnapshotTxn& t = active(txn);
    if (!store_->known(key)) throw EngineError("unknown key '" + key + "'");
    t.write_set[key] = value;
    history_.actions.push_back(
        Action{via_cursor ? ActionKind::CursorWrite : ActionKind::Write, txn, key,
               value, txn});
  }

  /// First-committer-wins commit: aborts iff some other transaction committed
  /// a write to an overlapping key inside this transaction's execution
  /// interval; otherwise publishes the buffered writes.
  SiCommitResult commit(TxnId txn) {
    SnapshotTxn& t = active(txn);
    Timestamp candidate = ++counter_;
    std::set<Key> conflicts;
    for (const auto& [other_id, other] : txns_) {
      if (other_id == txn || other.status != SnapshotTxn::Status::Committed) continue;
      if (other.commit_ts <= t.start_ts || other.commit_ts >= candidate) continue;
      for (const auto& [k, v] : other.write_set) {
        if (t.write_set.count(k)) conflicts.insert(k);
      }
    }
    if (!conflicts.empty()) {
      t.status = SnapshotTxn::Status::Aborted;
      history_.actions.push_back(make_abort(txn));
      return {false, 0, {conflicts.begin(), conflicts.end()}};
    }
    for (const auto& [k, v] : t.write_set) store_->publish(k, txn, v, candidate);
    t.status = SnapshotTxn::Status::Committed;
    t.commit_ts = candidate;
    history_.actions.push_back(make_commit(txn));
    return {true, candidate, {}};
  }

  /// Drives the next program step of `txn` (begins it on first contact).
  void step(TxnId txn) {
    const TxnProgram* prog = workload_.find_program(txn);
    if (!prog) throw EngineError("unknown transaction " + std::to_string(txn));
    if (!txns_.count(txn)) begin(txn);
    SnapshotTxn& t = txns_.at(txn);
    if (t.status != SnapshotTxn::Status::Active) return;
    std::size_t& idx = step_index_[txn];
    if (idx >= prog->steps.size()) return;
    const Step& s = prog->steps[idx++];
    switch (s.kind) {
      case Step::Kind::Read:
        read(txn, s.target);
        break;
      case Step::Kind::Write:
        write(txn, s.target, *s.value);
        break;
      case Step::Kind::PredicateRead:
        predicate_read(txn, s.target);
        break;
      case Step::Kind::CursorOpen: {
        cursor_[txn] = {s.target, 0, std::nullopt};
        predicate_read(txn, s.target);
        break;
      }
      case Step::Kind::CursorFetch: {
        auto& cur = cursor_.at(txn);
        const PredicateDecl* pd = workload_.find_predicate(cur.pred);
        std::vector<Key> keys(pd->covered.begin(), pd->covered.end());
        if (cur.pos >= keys.size()) throw EngineError("cursor exhausted");
        Key k = keys[cur.pos++];
        cur.row = k;
        int value;
        TxnId writer;
        if (auto it = t.write_set.find(k); it != t.write_set.end()) {
          value = it->second;
          writer = txn;
        } else {
          const Version& v = store_->latest_at(k, t.start_ts);
          value = v.value;
          writer = v.writer;
        }
        history_.actions.push_back(
            Action{ActionKind::CursorRead, txn, k, value, writer});
        break;
      }
      case Step::Kind::CursorWrite:
        write(txn, *cursor_.at(txn).row, *s.value, /*via_cursor=*/true);
        break;
      case Step::Kind::CursorClose:
        cursor_.erase(txn);
        break;
      case Step::Kind::Commit: {
        SiCommitResult r = commit(txn);
        if (!r.committed) last_conflicts_[txn] = r.conflict_keys;
        break;
      }
    }
  }

  RunResult run(const Schedule& schedule) {
    for (TxnId t : schedule) step(t);
    RunResult result;
    result.history = history_;
    result.complete = true;
    for (const auto& p : workload_.programs) {
      TxnOutcome o;
      auto it = txns_.find(p.id);
      if (it == txns_.end()) {
        o.kind = TxnOutcome::Kind::NotStarted;
        result.complete = false;
      } else if (it->second.status == SnapshotTxn::Status::Committed) {
        o.kind = TxnOutcome::Kind::Committed;
      } else if (it->second.status == SnapshotTxn::Status::Aborted) {
        o.kind = TxnOutcome::Kind::AbortedConflict;
        o.conflict_keys = last_conflicts_[p.id];
      } else {
        o.kind = TxnOutcome::Kind::Active;
        result.complete = false;
      }
      result.outcomes[p.id] = o;
    }
    return result;
  }

  const History& history() const { return history_; }
  Timestamp counter() const { return counter_; }
  const SnapshotTxn* txn(TxnId t) const {
    auto it = txns_.find(t);
    return it == txns_.end() ? nullptr : &it->second;
  }

 private:
  struct CursorState {
    std::string pred;
    std::size_t pos = 0;
    std::optional<Key> row;
  };

  SnapshotTxn& active(TxnId txn) {
    auto it = txns_.find(txn);
    if (it == txns_.end()) throw EngineError("transaction not begun");
    if (it->second.status != SnapshotTxn::Status::Active) {
      throw EngineError("transaction already terminated");
    }
    return it->second;
  }

  Workload workload_;
  std::optional<VersionStore> store_;
  Timestamp counter_ = 0;
  std::map<TxnId, SnapshotTxn> txns_;
  std::map<TxnId, std::size_t> step_index_;
  std::map<TxnId, CursorState> cursor_;
  std::map<TxnId, std::vector<Key>> last_conflicts_;
  History history_;
};

/// Replays a schedule under snapshot isolation, emitting the multi-version
/// history with explicit version markers.
inline RunResult run_si(const Workload& workload, const Schedule& schedule) {
  SnapshotEngine engine(workload);
  return engine.run(schedule);
}

/// Maps a snapshot-consistent multi-version history to a single-version
/// history: per transaction (in start order) the reads form one contiguous
/// block at the snapshot instant and the writes land immediately before the
/// commit. Aborted transactions keep their reads at the snapshot position but
/// their writes are dropped. Observed values are preserved.
inline History mv_to_sv(const History& mv) {
  if (mv.flavor != Flavor::MultiVersion) {
    throw EngineError("mv_to_sv expects a multi-version history");
  }
  mv.validate();

  // Validate the snapshot read rule against positions: a read's version must
  // be the initial version, the reader's own buffer, or the newest version
  // whose writer committed before the reader's first action.
  std::map<TxnId, std::size_t> first, terminal;
  std::map<TxnId, ActionKind> terminal_kind;
  for (std::size_t i = 0; i < mv.actions.size(); ++i) {
    const Action& a = mv.actions[i];
    if (!first.count(a.txn)) first[a.txn] = i;
    if (is_terminal(a.kind)) {
      terminal[a.txn] = i;
      terminal_kind[a.txn] = a.kind;
    }
  }
  auto committed_before = [&](TxnId writer, std::size_t pos) {
    auto it = terminal.find(writer);
    return it != terminal.end() && terminal_kind[writer] == ActionKind::Commit &&
           it->second < pos;
  };
  for (std::size_t i = 0; i < mv.actions.size(); ++i) {
    const Action& a = mv.actions[i];
    if (a.kind != ActionKind::Read && a.kind != ActionKind::CursorRead) continue;
    TxnId v = *a.version;
    if (v == a.txn) continue;  // own buffered write
    std::size_t snap = first[a.txn];
    long version_commit = -1;
    if (v != 0) {
      if (!committed_before(v, snap)) {
        throw EngineError("read of version not committed at reader's snapshot");
      }
      version_commit = static_cast<long>(terminal[v]);
    }
    // The snapshot rule picks the newest committed version, so nothing may
    // have committed a write of the same key between the cited version and
    // the reader's snapshot.
    for (const auto& [other, tpos] : terminal) {
      if (other == v || other == a.txn) continue;
      if (terminal_kind[other] != ActionKind::Commit) continue;
      if (static_cast<long>(tpos) <= version_commit || tpos >= snap) continue;
      for (const Action& w : mv.actions) {
        if (w.txn == other && is_write_kind(w.kind) && w.target == a.target) {
          throw EngineError("stale snapshot read: newer committed version exists");
        }
      }
    }
  }

  struct Event {
    std::size_t at;
    TxnId txn;
    bool reads;  // reads block vs writes-plus-terminal block
  };
  std::vector<Event> events;
  for (const auto& [t, pos] : first) {
    events.push_back({pos, t, true});
    if (auto it = terminal.find(t); it != terminal.end()) {
      events.push_back({it->second, t, false});
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.at != b.at ? a.at < b.at : a.reads && !b.reads;
  });

  History sv;
  sv.predicates = mv.predicates;
  sv.universe = mv.universe;
  sv.init = mv.init;
  sv.flavor = Flavor::SingleVersion;
  for (const Event& e : events) {
    for (const Action& a : mv.actions) {
      if (a.txn != e.txn) continue;
      bool is_read = is_read_kind(a.kind);
      if (e.reads && is_read) {
        Action copy = a;
        copy.version.reset();
        sv.actions.push_back(std::move(copy));
      } else if (!e.reads && is_write_kind(a.kind) &&
                 terminal_kind[e.txn] == ActionKind::Commit) {
        Action copy = a;
        copy.version.reset();
        sv.actions.push_back(std::move(copy));
      }
    }
    if (!e.reads) {
      sv.actions.push_back(terminal_kind[e.txn] == ActionKind::Commit
                               ? make_commit(e.txn)
                               : make_abort(e.txn));
    }
  }
  sv.validate();
  return sv;
}

/// Read-consistency engine: per-statement read timestamps, first-writer-wins
/// write locking, cursor fetches pinned to the cursor-open instant. Cursor
/// fetches take write locks on the fetched row, which is what rules out
/// cursor lost updates under this scheme.
class ReadConsistencyEngine {
 public:
  explicit ReadConsistencyEngine(const Workload& workload)
      : workload_(workload), locks_(&workload_.predicates) {
    workload_.validate();
    store_.emplace(workload_.initial_db());
    history_.predicates = workload_.predicates;
    history_.universe = workload_.universe;
    history_.init = workload_.init;
    history_.flavor = Flavor::SingleVersion;
    for (const auto& p : workload_.programs) txns_[p.id] = TxnState{};
  }

  StepResult step(TxnId txn) {
    TxnState& st = state(txn);
    if (st.finished()) return {StepResult::Status::NoOp, {}};
    if (!st.begun) {
      st.begun = true;
      st.begin_order = next_begin_order_++;
    }
    if (st.blocked && !st.lock_ready) return {StepResult::Status::NoOp, {}};

    const Step& s = workload_.find_program(txn)->steps[st.step_index];
    if (st.blocked && st.lock_ready) {
      st.blocked = false;
      st.lock_ready = false;
      execute(txn, s);
      return {StepResult::Status::Executed, {}};
    }

    std::optional<Key> lock_key = write_locked_key(txn, s);
    if (!lock_key) {
      execute(txn, s);
      return {StepResult::Status::Executed, {}};
    }
    AcquireResult r =
        locks_.acquire(txn, item_scope(*lock_key), LockMode::Write, LockDuration::Long);
    if (r != AcquireResult::Blocked) {
      execute(txn, s);
      return {StepResult::Status::Executed, {}};
    }
    st.blocked = true;
    std::optional<TxnId> victim;
    if (auto cycle = locks_.detect_deadlock()) {
      victim = pick_victim(*cycle);
      abort_txn(*victim);
      if (*victim == txn) return {StepResult::Status::Blocked, victim};
      if (state(txn).lock_ready) {
        state(txn).blocked = false;
        state(txn).lock_ready = false;
        execute(txn, s);
        return {StepResult::Status::Executed, victim};
      }
    }
    return {StepResult::Status::Blocked, victim};
  }

  RunResult run(const Schedule& schedule) {
    for (TxnId t : schedule) step(t);
    RunResult result;
    result.history = history_;
    result.complete = true;
    for (const auto& [t, st] : txns_) {
      TxnOutcome o;
      if (st.committed) {
        o.kind = TxnOutcome::Kind::Committed;
      } else if (st.aborted) {
        o.kind = TxnOutcome::Kind::AbortedDeadlock;
      } else if (st.blocked && !st.lock_ready) {
        o.kind = TxnOutcome::Kind::Blocked;
      } else if (st.begun) {
        o.kind = TxnOutcome::Kind::Active;
      } else {
        o.kind = TxnOutcome::Kind::NotStarted;
      }
      if (!st.finished()) result.complete = false;
      result.outcomes[t] = o;
    }
    return result;
  }

  const History& history() const { return history_; }

 private:
  struct TxnState {
    std::size_t step_index = 0;
    bool begun = false;
    int begin_order = -1;
    bool blocked = false;
    bool lock_ready = false;
    bool committed = false;
    bool aborted = false;
    std::map<Key, int> buffer;
    std::string cursor_pred;
    std::size_t cursor_pos = 0;
    std::optional<Key> cursor_row;
    Timestamp cursor_open_ts = 0;

    bool finished() const { return committed || aborted; }
  };

  TxnState& state(TxnId t) {
    auto it = txns_.find(t);
    if (it == txns_.end()) {
      throw EngineError("unknown transaction " + std::to_string(t));
    }
    return it->second;
  }

  std::optional<Key> write_locked_key(TxnId txn, const Step& s) {
    TxnState& st = state(txn);
    switch (s.kind) {
      case Step::Kind::Write:
        return s.target;
      case Step::Kind::CursorWrite:
        return st.cursor_row;  // covered by the fetch's lock already
      case Step::Kind::CursorFetch: {
        const PredicateDecl* pd = workload_.find_predicate(st.cursor_pred);
        std::vector<Key> keys(pd->covered.begin(), pd->covered.end());
        if (st.cursor_pos >= keys.size()) throw EngineError("cursor exhausted");
        return keys[st.cursor_pos];
      }
      default:
        return std::nullopt;
    }
  }

  int read_value(const TxnState& st, const Key& k, Timestamp at) const {
    if (auto it = st.buffer.find(k); it != st.buffer.end()) return it->second;
    return store_->latest_at(k, at).value;
  }

  void execute(TxnId txn, const Step& s) {
    TxnState& st = state(txn);
    switch (s.kind) {
      case Step::Kind::Read:
        history_.actions.push_back(make_read(txn, s.target, read_value(st, s.target, counter_)));
        break;
      case Step::Kind::Write:
        st.buffer[s.target] = *s.value;
        history_.actions.push_back(make_write(txn, s.target, s.value));
        break;
      case Step::Kind::PredicateRead:
        history_.actions.push_back(make_predicate_read(txn, s.target));
        break;
      case Step::Kind::CursorOpen:
        st.cursor_pred = s.target;
        st.cursor_pos = 0;
        st.cursor_row.reset();
        st.cursor_open_ts = counter_;
        history_.actions.push_back(make_predicate_read(txn, s.target));
        break;
      case Step::Kind::CursorFetch: {
        const PredicateDecl* pd = workload_.find_predicate(st.cursor_pred);
        std::vector<Key> keys(pd->covered.begin(), pd->covered.end());
        Key k = keys[st.cursor_pos++];
        st.cursor_row = k;
        history_.actions.push_back(Action{ActionKind::CursorRead, txn, k,
                                          read_value(st, k, st.cursor_open_ts), {}});
        break;
      }
      case Step::Kind::CursorWrite: {
        Key k = *st.cursor_row;
        st.buffer[k] = *s.value;
        history_.actions.push_back(Action{ActionKind::CursorWrite, txn, k, s.value, {}});
        break;
      }
      case Step::Kind::CursorClose:
        st.cursor_row.reset();
        st.cursor_pred.clear();
        break;
      case Step::Kind::Commit: {
        Timestamp ts = ++counter_;
        for (const auto& [k, v] : st.buffer) store_->publish(k, txn, v, ts);
        st.committed = true;
        history_.actions.push_back(make_commit(txn));
        locks_.release_all(txn);
        wake(locks_.grant_ready());
        break;
      }
    }
    ++st.step_index;
  }

  void abort_txn(TxnId txn) {
    TxnState& st = state(txn);
    history_.actions.push_back(make_abort(txn));
    st.aborted = true;
    st.blocked = false;
    st.lock_ready = false;
    locks_.release_all(txn);
    wake(locks_.grant_ready());
  }

  TxnId pick_victim(const std::vector<TxnId>& cycle) const {
    TxnId victim = cycle.front();
    int latest = -1;
    for (TxnId t : cycle) {
      int order = txns_.at(t).begin_order;
      if (order > latest) {
        latest = order;
        victim = t;
      }
    }
    return victim;
  }

  void wake(const std::vector<TxnId>& granted) {
    for (TxnId t : granted) state(t).lock_ready = true;
  }

  Workload workload_;
  LockTable locks_;
  std::optional<VersionStore> store_;
  Timestamp counter_ = 0;
  std::map<TxnId, TxnState> txns_;
  History history_;
  int next_begin_order_ = 0;
};

inline RunResult run_read_consistency(const Workload& workload,
                                      const Schedule& schedule) {
  ReadConsistencyEngine engine(workload);
  return engine.run(schedule);
}

}  // namespace isolab
