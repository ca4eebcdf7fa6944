#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isolab/core.hpp"
#include "isolab/lock_table.hpp"
#include "isolab/workload.hpp"

namespace isolab {

// Single-version lock scheduler. The engine is a deterministic state machine
// driven by an explicit schedule: each slot names a transaction and attempts
// its next (or pending) program step. Locks are requested before the access
// (well-formed), the action executes against an in-place database, and
// short-duration locks are released as the action completes. A request that
// conflicts with a held lock blocks the transaction and enqueues it; blocked
// slots are consumed without emitting. A wait that closes a waits-for cycle
// aborts the most recently started transaction in the cycle.

struct StepResult {
  enum class Status { Executed, Blocked, NoOp };
  Status status = Status::NoOp;
  std::optional<TxnId> deadlock_victim;
};

class LockingEngine {
 public:
  LockingEngine(const Workload& workload, LevelId level)
      : LockingEngine(workload, policy_for_level(level)) {}

  LockingEngine(const Workload& workload, LockPolicy policy)
      : workload_(workload), policy_(policy), locks_(&workload_.predicates) {
    workload_.validate();
    db_ = workload_.initial_db();
    history_.predicates = workload_.predicates;
    history_.universe = workload_.universe;
    history_.init = workload_.init;
    history_.flavor = Flavor::SingleVersion;
    for (const auto& p : workload_.programs) txns_[p.id] = TxnState{};
  }

  /// Attempts the next (or pending) step of `txn`.
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
      // The queued request was granted on a release; run the step now.
      st.blocked = false;
      st.lock_ready = false;
      execute(txn, s);
      return {StepResult::Status::Executed, {}};
    }

    std::optional<std::pair<LockScope, LockMode>> need = required_lock(txn, s);
    if (!need) {
      execute(txn, s);
      return {StepResult::Status::Executed, {}};
    }
    LockDuration duration = lock_duration(s);
    AcquireResult r = locks_.acquire(txn, need->first, need->second, duration);
    if (r != AcquireResult::Blocked) {
      execute(txn, s);
      if (r == AcquireResult::Granted && duration == LockDuration::Short) {
        locks_.release_action_locks(txn);
        wake(locks_.grant_ready());
      }
      return {StepResult::Status::Executed, {}};
    }

    st.blocked = true;
    std::optional<TxnId> victim;
    if (auto cycle = locks_.detect_deadlock()) {
      victim = pick_victim(*cycle);
      abort_txn(*victim, TxnOutcome::Kind::AbortedDeadlock);
      if (*victim == txn) return {StepResult::Status::Blocked, victim};
      if (state(txn).lock_ready) {
        // The victim's release unblocked this very request.
        state(txn).blocked = false;
        state(txn).lock_ready = false;
        execute(txn, s);
        return {StepResult::Status::Executed, victim};
      }
    }
    return {StepResult::Status::Blocked, victim};
  }

  /// Replays a schedule to completion or exhaustion.
  RunResult run(const Schedule& schedule) {
    for (TxnId t : schedule) {
      if (!txns_.count(t)) {
        throw EngineError("schedule references unknown transaction " +
                          std::to_string(t));
      }
      step(t);
      if (all_remaining_blocked()) break;
    }
    RunResult result;
    result.history = history_;
    result.complete = true;
    for (const auto& [t, st] : txns_) {
      TxnOutcome o;
      if (st.committed) {
        o.kind = TxnOutcome::Kind::Committed;
      } else if (st.aborted) {
        o.kind = st.abort_kind;
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
  const std::map<Key, int>& database() const { return db_; }
  const LockTable& locks() const { return locks_; }

 private:
  struct TxnState {
    std::size_t step_index = 0;
    bool begun = false;
    int begin_order = -1;
    bool blocked = false;
    bool lock_ready = false;
    bool committed = false;
    bool aborted = false;
    TxnOutcome::Kind abort_kind = TxnOutcome::Kind::AbortedDeadlock;
    // Cursor: predicate, position in key order, current row.
    std::string cursor_pred;
    std::size_t cursor_pos = 0;
    std::optional<Key> cursor_row;

    bool finished() const { return committed || aborted; }
  };

  TxnState& state(TxnId t) {
    auto it = txns_.find(t);
    if (it == txns_.end()) {
      throw EngineError("unknown transaction " + std::to_string(t));
    }
    return it->second;
  }

  LockDuration read_duration(bool cursor_read) const {
    switch (policy_.item_read) {
      case LockPolicy::ReadRule::None: return LockDuration::Short;  // unused
      case LockPolicy::ReadRule::Short: return LockDuration::Short;
      case LockPolicy::ReadRule::Long: return LockDuration::Long;
      case LockPolicy::ReadRule::Cursor:
        return cursor_read ? LockDuration::CursorHeld : LockDuration::Short;
    }
    return LockDuration::Short;
  }

  std::optional<std::pair<LockScope, LockMode>> required_lock(TxnId txn,
                                                              const Step& s) {
    TxnState& st = state(txn);
    switch (s.kind) {
      case Step::Kind::Read:
        if (policy_.item_read == LockPolicy::ReadRule::None) return std::nullopt;
        return std::make_pair(item_scope(s.target), LockMode::Read);
      case Step::Kind::CursorFetch: {
        // Moving the cursor first releases the previous row's cursor lock.
        if (st.cursor_row && policy_.item_read == LockPolicy::ReadRule::Cursor) {
          locks_.release_cursor_lock(txn);
          wake(locks_.grant_ready());
        }
        if (policy_.item_read == LockPolicy::ReadRule::None) return std::nullopt;
        return std::make_pair(item_scope(next_cursor_key(txn)), LockMode::Read);
      }
      case Step::Kind::PredicateRead:
      case Step::Kind::CursorOpen:
        if (policy_.pred_read == LockPolicy::PredReadRule::None) return std::nullopt;
        return std::make_pair(predicate_scope(s.target), LockMode::Read);
      case Step::Kind::Write:
        return std::make_pair(item_scope(s.target), LockMode::Write);
      case Step::Kind::CursorWrite:
        if (!st.cursor_row) throw EngineError("cursor write without a current row");
        return std::make_pair(item_scope(*st.cursor_row), LockMode::Write);
      case Step::Kind::CursorClose:
      case Step::Kind::Commit:
        return std::nullopt;
    }
    return std::nullopt;
  }

  LockDuration lock_duration(const Step& s) const {
    switch (s.kind) {
      case Step::Kind::Read: return read_duration(false);
      case Step::Kind::CursorFetch: return read_duration(true);
      case Step::Kind::PredicateRead:
      case Step::Kind::CursorOpen:
        return policy_.pred_read == LockPolicy::PredReadRule::Long
                   ? LockDuration::Long
                   : LockDuration::Short;
      case Step::Kind::Write:
      case Step::Kind::CursorWrite:
        return policy_.write;
      default:
        return LockDuration::Short;
    }
  }

  Key next_cursor_key(TxnId txn) {
    TxnState& st = state(txn);
    if (st.cursor_pred.empty()) throw EngineError("fetch without open cursor");
    const PredicateDecl* pd = workload_.find_predicate(st.cursor_pred);
    std::vector<Key> keys(pd->covered.begin(), pd->covered.end());
    if (st.cursor_pos >= keys.size()) throw EngineError("cursor exhausted");
    return keys[st.cursor_pos];
  }

  void execute(TxnId txn, const Step& s) {
    TxnState& st = state(txn);
    switch (s.kind) {
      case Step::Kind::Read:
        history_.actions.push_back(make_read(txn, s.target, db_.at(s.target)));
        break;
      case Step::Kind::Write:
        db_[s.target] = *s.value;
        history_.actions.push_back(make_write(txn, s.target, s.value));
        break;
      case Step::Kind::PredicateRead:
        history_.actions.push_back(make_predicate_read(txn, s.target));
        break;
      case Step::Kind::CursorOpen:
        st.cursor_pred = s.target;
        st.cursor_pos = 0;
        st.cursor_row.reset();
        history_.actions.push_back(make_predicate_read(txn, s.target));
        break;
      case Step::Kind::CursorFetch: {
        Key k = next_cursor_key(txn);
        st.cursor_row = k;
        ++st.cursor_pos;
        history_.actions.push_back(
            Action{ActionKind::CursorRead, txn, k, db_.at(k), {}});
        break;
      }
      case Step::Kind::CursorWrite: {
        Key k = *st.cursor_row;
        db_[k] = *s.value;
        history_.actions.push_back(
            Action{ActionKind::CursorWrite, txn, k, s.value, {}});
        break;
      }
      case Step::Kind::CursorClose:
        st.cursor_row.reset();
        st.cursor_pred.clear();
        locks_.release_cursor_lock(txn);
        wake(locks_.grant_ready());
        break;
      case Step::Kind::Commit:
        history_.actions.push_back(make_commit(txn));
        st.committed = true;
        locks_.release_all(txn);
        wake(locks_.grant_ready());
        break;
    }
    ++st.step_index;
  }

  void abort_txn(TxnId txn, TxnOutcome::Kind kind) {
    TxnState& st = state(txn);
    history_.actions.push_back(make_abort(txn));
    st.aborted = true;
    st.abort_kind = kind;
    st.blocked = false;
    st.lock_ready = false;
    locks_.release_all(txn);
    wake(locks_.grant_ready());
  }

  /// Most recently started transaction in the cycle.
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

  bool all_remaining_blocked() const {
    bool any_unfinished = false;
    for (const auto& [t, st] : txns_) {
      if (st.finished()) continue;
      any_unfinished = true;
      if (!st.blocked || st.lock_ready) return false;
    }
    return any_unfinished;
  }

  Workload workload_;
  LockPolicy policy_;
  LockTable locks_;
  std::map<Key, int> db_;
  std::map<TxnId, TxnState> txns_;
  History history_;
  int next_begin_order_ = 0;
};

/// Deterministically replays `schedule` on the lock scheduler for `level`.
inline RunResult run_locking(const Workload& workload, LevelId level,
                             const Schedule& schedule) {
  LockingEngine engine(workload, level);
  return engine.run(schedule);
}

}  // namespace isolab
