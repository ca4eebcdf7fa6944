#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace isolab {

using TxnId = int;
using Key = std::string;

/// Error raised while parsing history or workload text. `position` is the
/// zero-based character offset into the input.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (at offset " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Error raised when a history violates a structural invariant.
class HistoryError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Error raised when an engine is driven outside its contract.
class EngineError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ActionKind {
  Read,
  Write,
  PredicateRead,
  CursorRead,
  CursorWrite,
  Commit,
  Abort,
};

inline bool is_terminal(ActionKind k) {
  return k == ActionKind::Commit || k == ActionKind::Abort;
}
inline bool is_data(ActionKind k) { return !is_terminal(k); }
inline bool is_write_kind(ActionKind k) {
  return k == ActionKind::Write || k == ActionKind::CursorWrite;
}
inline bool is_read_kind(ActionKind k) {
  return k == ActionKind::Read || k == ActionKind::CursorRead ||
         k == ActionKind::PredicateRead;
}
inline bool is_item_kind(ActionKind k) {
  return k == ActionKind::Read || k == ActionKind::Write ||
         k == ActionKind::CursorRead || k == ActionKind::CursorWrite;
}

/// A predicate is a finite declared key set. It may cover keys that hold no
/// row yet; a write to any covered key conflicts with a read of the predicate.
struct PredicateDecl {
  std::string name;
  std::set<Key> covered;

  bool operator==(const PredicateDecl&) const = default;
};

/// One event in a history. `target` is an item key, or a predicate name for
/// PredicateRead, and is empty for Commit/Abort. `version` identifies the
/// writer of the version read or written (0 = initial version) and is present
/// exactly in multi-version histories.
struct Action {
  ActionKind kind = ActionKind::Read;
  TxnId txn = 0;
  std::string target;
  std::optional<int> value;
  std::optional<TxnId> version;

  bool operator==(const Action&) const = default;
};

inline Action make_read(TxnId t, Key k, std::optional<int> v = {}) {
  return Action{ActionKind::Read, t, std::move(k), v, {}};
}
inline Action make_write(TxnId t, Key k, std::optional<int> v = {}) {
  return Action{ActionKind::Write, t, std::move(k), v, {}};
}
inline Action make_predicate_read(TxnId t, std::string pred) {
  return Action{ActionKind::PredicateRead, t, std::move(pred), {}, {}};
}
inline Action make_commit(TxnId t) { return Action{ActionKind::Commit, t, {}, {}, {}}; }
inline Action make_abort(TxnId t) { return Action{ActionKind::Abort, t, {}, {}, {}}; }

enum class Flavor { SingleVersion, MultiVersion };

/// An ordered action sequence plus the declarations needed to interpret it.
/// `universe` is only set when the source text declared one explicitly; `init`
/// holds declared initial values (undeclared keys start at 0).
struct History {
  std::vector<Action> actions;
  std::vector<PredicateDecl> predicates;
  Flavor flavor = Flavor::SingleVersion;
  std::optional<std::set<Key>> universe;
  std::map<Key, int> init;

  bool operator==(const History&) const = default;

  const PredicateDecl* find_predicate(const std::string& name) const {
    for (const auto& p : predicates) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  std::set<TxnId> txns() const {
    std::set<TxnId> out;
    for (const auto& a : actions) out.insert(a.txn);
    return out;
  }

  std::set<TxnId> committed_txns() const {
    std::set<TxnId> out;
    for (const auto& a : actions) {
      if (a.kind == ActionKind::Commit) out.insert(a.txn);
    }
    return out;
  }

  std::optional<std::size_t> terminal_position(TxnId t) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      if (actions[i].txn == t && is_terminal(actions[i].kind)) return i;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> first_position(TxnId t) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      if (actions[i].txn == t) return i;
    }
    return std::nullopt;
  }

  /// Checks the structural invariants and throws HistoryError on violation:
  /// at most one terminal per transaction and nothing after it, predicate
  /// reads target declared predicates, version markers match the flavor, and
  /// keys stay inside a declared universe.
  void validate() const {
    std::set<TxnId> terminated;
    for (const auto& a : actions) {
      if (a.txn <= 0) throw HistoryError("transaction ids must be positive");
      if (terminated.count(a.txn)) {
        if (is_terminal(a.kind)) {
          throw HistoryError("duplicate terminal for transaction " +
                             std::to_string(a.txn));
        }
        throw HistoryError("action after terminal of transaction " +
                           std::to_string(a.txn));
      }
      if (is_terminal(a.kind)) {
        if (!a.target.empty() || a.value || a.version) {
          throw HistoryError("terminal actions carry no target");
        }
        terminated.insert(a.txn);
        continue;
      }
      if (a.target.empty()) throw HistoryError("data action without target");
      if (a.kind == ActionKind::PredicateRead) {
        if (!find_predicate(a.target)) {
          throw HistoryError("undeclared predicate '" + a.target + "'");
        }
        if (a.version) throw HistoryError("predicate reads carry no version");
      } else {
        if (universe && !universe->count(a.target)) {
          throw HistoryError("key '" + a.target + "' not in declared universe");
        }
        if (flavor == Flavor::MultiVersion) {
          if (!a.version) {
            throw HistoryError("multi-version history requires version markers");
          }
          if (is_write_kind(a.kind) && *a.version != a.txn) {
            throw HistoryError("write version must name the writing transaction");
          }
        } else if (a.version) {
          throw HistoryError("version marker in single-version history");
        }
      }
    }
    for (const auto& p : predicates) {
      if (!universe) continue;
      for (const auto& k : p.covered) {
        if (!universe->count(k)) {
          throw HistoryError("predicate '" + p.name + "' covers undeclared key '" +
                             k + "'");
        }
      }
    }
  }
};

}  // namespace isolab
