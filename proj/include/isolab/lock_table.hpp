#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isolab/core.hpp"
#include "isolab/phenomena.hpp"

namespace isolab {

enum class LockMode { Read, Write };

/// Short locks end with the owning action, CursorHeld locks end when the
/// cursor moves or closes, Long locks end at commit/abort.
enum class LockDuration { Short, CursorHeld, Long };

struct LockScope {
  enum class Kind { Item, Predicate };
  Kind kind = Kind::Item;
  std::string name;

  bool operator==(const LockScope&) const = default;
};

inline LockScope item_scope(Key k) { return {LockScope::Kind::Item, std::move(k)}; }
inline LockScope predicate_scope(std::string p) {
  return {LockScope::Kind::Predicate, std::move(p)};
}

/// Two scopes overlap if they name the same item, if a predicate covers the
/// item, or if two predicates share a covered key. An item lock is just a
/// predicate lock naming one record, so the rules collapse to set overlap.
inline bool scopes_overlap(const LockScope& a, const LockScope& b,
                           const std::vector<PredicateDecl>& preds) {
  auto covered = [&](const std::string& pred) -> const std::set<Key>* {
    for (const auto& p : preds) {
      if (p.name == pred) return &p.covered;
    }
    return nullptr;
  };
  if (a.kind == LockScope::Kind::Item && b.kind == LockScope::Kind::Item) {
    return a.name == b.name;
  }
  if (a.kind == LockScope::Kind::Predicate && b.kind == LockScope::Kind::Predicate) {
    const auto* ca = covered(a.name);
    const auto* cb = covered(b.name);
    if (!ca || !cb) return false;
    return std::any_of(ca->begin(), ca->end(),
                       [&](const Key& k) { return cb->count(k) > 0; });
  }
  const LockScope& pred = a.kind == LockScope::Kind::Predicate ? a : b;
  const LockScope& item = a.kind == LockScope::Kind::Predicate ? b : a;
  const auto* c = covered(pred.name);
  return c && c->count(item.name) > 0;
}

/// Lock policy for one isolation level: how item reads, predicate reads, and
/// writes are locked. `Cursor` item reads mean cursor fetches hold their lock
/// until the cursor moves while plain reads take short locks.
struct LockPolicy {
  enum class ReadRule { None, Short, Long, Cursor };
  enum class PredReadRule { None, Short, Long };
  ReadRule item_read = ReadRule::None;
  PredReadRule pred_read = PredReadRule::None;
  LockDuration write = LockDuration::Long;

  bool operator==(const LockPolicy&) const = default;
};

/// The six lock-defined levels. Degree 0 takes only short write locks; every
/// stronger level holds write locks to the terminal.
inline LockPolicy policy_for_level(LevelId level) {
  using R = LockPolicy::ReadRule;
  using P = LockPolicy::PredReadRule;
  switch (level) {
    case LevelId::Degree0:
      return {R::None, P::None, LockDuration::Short};
    case LevelId::ReadUncommitted:
      return {R::None, P::None, LockDuration::Long};
    case LevelId::ReadCommitted:
      return {R::Short, P::Short, LockDuration::Long};
    case LevelId::CursorStability:
      return {R::Cursor, P::Short, LockDuration::Long};
    case LevelId::RepeatableRead:
      return {R::Long, P::Short, LockDuration::Long};
    case LevelId::Serializable:
      return {R::Long, P::Long, LockDuration::Long};
    case LevelId::Snapshot:
      break;
  }
  throw EngineError("snapshot isolation is not lock-defined");
}

struct HeldLock {
  TxnId txn = 0;
  LockScope scope;
  LockMode mode = LockMode::Read;
  LockDuration duration = LockDuration::Short;
};

struct WaitingRequest {
  TxnId txn = 0;
  LockScope scope;
  LockMode mode = LockMode::Read;
  LockDuration duration = LockDuration::Short;
};

struct LockEvent {
  enum class Kind { Acquire, Release };
  Kind kind = Kind::Acquire;
  TxnId txn = 0;
  LockScope scope;
  LockMode mode = LockMode::Read;
};

enum class AcquireResult { Granted, AlreadyHeld, Blocked };

/// Grant state plus a FIFO wait queue. Grants are checked against holders
/// only; a transaction upgrading its own read lock is granted as long as no
/// other holder conflicts.
class LockTable {
 public:
  explicit LockTable(const std::vector<PredicateDecl>* preds = nullptr)
      : preds_(preds) {}

  /// Other transactions currently holding a conflicting lock.
  std::vector<TxnId> conflicting_holders(TxnId txn, const LockScope& scope,
                                         LockMode mode) const {
    std::vector<TxnId> out;
    for (const auto& held : held_) {
      if (held.txn == txn) continue;
      if (mode == LockMode::Read && held.mode == LockMode::Read) continue;
      if (!scopes_overlap(scope, held.scope, preds())) continue;
      if (std::find(out.begin(), out.end(), held.txn) == out.end()) {
        out.push_back(held.txn);
      }
    }
    return out;
  }

  bool covered_by_own(TxnId txn, const LockScope& scope, LockMode mode,
                      LockDuration duration) const {
    for (const auto& held : held_) {
      if (held.txn != txn || !(held.scope == scope)) continue;
      bool mode_ok = held.mode == LockMode::Write || mode == LockMode::Read;
      bool duration_ok = rank(held.duration) >= rank(duration);
      if (mode_ok && duration_ok) return true;
    }
    return false;
  }

  AcquireResult acquire(TxnId txn, LockScope scope, LockMode mode,
                        LockDuration duration) {
    if (covered_by_own(txn, scope, mode, duration)) return AcquireResult::AlreadyHeld;
    if (conflicting_holders(txn, scope, mode).empty()) {
      held_.push_back({txn, scope, mode, duration});
      events_.push_back({LockEvent::Kind::Acquire, txn, std::move(scope), mode});
      return AcquireResult::Granted;
    }
    queue_.push_back({txn, std::move(scope), mode, duration});
    return AcquireResult::Blocked;
  }

  /// Drops the short-duration locks of `txn` (an action just completed).
  void release_action_locks(TxnId txn) {
    release_if(txn, [](const HeldLock& l) { return l.duration == LockDuration::Short; });
  }

  /// Drops the cursor-held lock of `txn` (cursor moved or closed).
  void release_cursor_lock(TxnId txn) {
    release_if(txn,
               [](const HeldLock& l) { return l.duration == LockDuration::CursorHeld; });
  }

  /// Drops everything `txn` holds or waits for (commit or abort).
  void release_all(TxnId txn) {
    release_if(txn, [](const HeldLock&) { return true; });
    queue_.erase(std::remove_if(queue_.begin(), queue_.end(),
                                [&](const WaitingRequest& r) { return r.txn == txn; }),
                 queue_.end());
  }

  /// Grants queued requests, FIFO, that no longer conflict with any holder.
  /// Returns the transactions whose request was granted.
  std::vector<TxnId> grant_ready() {
    std::vector<TxnId> granted;
    for (std::size_t i = 0; i < queue_.size();) {
      const WaitingRequest& r = queue_[i];
      if (conflicting_holders(r.txn, r.scope, r.mode).empty()) {
        held_.push_back({r.txn, r.scope, r.mode, r.duration});
        events_.push_back({LockEvent::Kind::Acquire, r.txn, r.scope, r.mode});
        granted.push_back(r.txn);
        queue_.erase(queue_.begin() + static_cast<long>(i));
      } else {
        ++i;
      }
    }
    return granted;
  }

  bool is_waiting(TxnId txn) const {
    return std::any_of(queue_.begin(), queue_.end(),
                       [&](const WaitingRequest& r) { return r.txn == txn; });
  }

  /// Waits-for edges: each blocked transaction points at each holder of a
  /// conflicting lock.
  std::vector<std::pair<TxnId, TxnId>> waits_for() const {
    std::vector<std::pair<TxnId, TxnId>> edges;
    for (const auto& r : queue_) {
      for (TxnId holder : conflicting_holders(r.txn, r.scope, r.mode)) {
        auto e = std::make_pair(r.txn, holder);
        if (std::find(edges.begin(), edges.end(), e) == edges.end()) {
          edges.push_back(e);
        }
      }
    }
    return edges;
  }

  /// Returns one waits-for cycle if the table has any.
  std::optional<std::vector<TxnId>> detect_deadlock() const {
    std::map<TxnId, std::set<TxnId>> adj;
    for (const auto& [from, to] : waits_for()) adj[from].insert(to);
    std::map<TxnId, int> state;
    std::vector<TxnId> stack, cycle;
    std::function<bool(TxnId)> visit = [&](TxnId node) {
      state[node] = 1;
      stack.push_back(node);
      for (TxnId next : adj[node]) {
        if (state[next] == 1) {
          auto pos = std::find(stack.begin(), stack.end(), next);
          cycle.assign(pos, stack.end());
          return true;
        }
        if (state[next] == 0 && visit(next)) return true;
      }
      stack.pop_back();
      state[node] = 2;
      return false;
    };
    for (const auto& [node, targets] : adj) {
      if (state[node] == 0 && visit(node)) return cycle;
    }
    return std::nullopt;
  }

  /// No two held locks may conflict.
  bool grant_safe() const {
    for (std::size_t i = 0; i < held_.size(); ++i) {
      for (std::size_t j = i + 1; j < held_.size(); ++j) {
        const auto& a = held_[i];
        const auto& b = held_[j];
        if (a.txn == b.txn) continue;
        if (a.mode == LockMode::Read && b.mode == LockMode::Read) continue;
        if (scopes_overlap(a.scope, b.scope, preds())) return false;
      }
    }
    return true;
  }

  const std::vector<HeldLock>& held() const { return held_; }
  const std::vector<WaitingRequest>& queue() const { return queue_; }
  const std::vector<LockEvent>& events() const { return events_; }

 private:
  static int rank(LockDuration d) {
    switch (d) {
      case LockDuration::Short: return 0;
      case LockDuration::CursorHeld: return 1;
      case LockDuration::Long: return 2;
    }
    return 0;
  }

  template <typename Pred>
  void release_if(TxnId txn, Pred pred) {
    for (auto it = held_.begin(); it != held_.end();) {
      if (it->txn == txn && pred(*it)) {
        events_.push_back({LockEvent::Kind::Release, txn, it->scope, it->mode});
        it = held_.erase(it);
      } else {
        ++it;
      }
    }
  }

  const std::vector<PredicateDecl>& preds() const {
    static const std::vector<PredicateDecl> empty;
    return preds_ ? *preds_ : empty;
  }

  const std::vector<PredicateDecl>* preds_;
  std::vector<HeldLock> held_;
  std::vector<WaitingRequest> queue_;
  std::vector<LockEvent> events_;
};

}  // namespace isolab
