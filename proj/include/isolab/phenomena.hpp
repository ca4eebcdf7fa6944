#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "isolab/core.hpp"
#include "isolab/parse.hpp"

namespace isolab {

// Subsequence detectors for the isolation phenomena (broad P forms) and
// anomalies (strict A forms). Every template is matched as a strictly
// position-increasing subsequence over two distinct transactions:
//
//   P0   w1[x] .. w2[x] .. (c1 or a1)
//   P1   w1[x] .. r2[x] .. (c1 or a1)
//   P2   r1[x] .. w2[x] .. (c1 or a1)
//   P3   r1[P] .. w2[y in P] .. (c1 or a1)
//   A1   w1[x] .. r2[x] .. (a1 and c2, either order)
//   A2   r1[x] .. w2[x] .. c2 .. r1[x] .. c1
//   A3   r1[P] .. w2[y in P] .. c2 .. r1[P] .. c1
//   P4   r1[x] .. w2[x] .. w1[x] .. c1
//   P4C  rc1[x] .. w2[x] .. w1[x] .. c1
//   A5A  r1[x] .. w2[x] .. w2[y] .. c2 .. r1[y] .. (c1 or a1)
//   A5B  r1[x] .. r2[y] .. w1[y] .. w2[x] .. (c1 and c2 occur)
//
// 'r' matches plain reads only and 'rc' matches cursor reads (the lost-update
// templates split exactly on that distinction); 'w' matches plain and cursor
// writes alike. A5B requires both commits to occur but places no constraint
// on where, so the template also matches histories whose commits interleave
// the writes.

enum class PhenomenonId { P0, P1, P2, P3, A1, A2, A3, P4, P4C, A5A, A5B };

inline constexpr PhenomenonId kAllPhenomena[] = {
    PhenomenonId::P0,  PhenomenonId::P1, PhenomenonId::P2,  PhenomenonId::P3,
    PhenomenonId::A1,  PhenomenonId::A2, PhenomenonId::A3,  PhenomenonId::P4,
    PhenomenonId::P4C, PhenomenonId::A5A, PhenomenonId::A5B};

inline std::string to_string(PhenomenonId p) {
  switch (p) {
    case PhenomenonId::P0: return "P0";
    case PhenomenonId::P1: return "P1";
    case PhenomenonId::P2: return "P2";
    case PhenomenonId::P3: return "P3";
    case PhenomenonId::A1: return "A1";
    case PhenomenonId::A2: return "A2";
    case PhenomenonId::A3: return "A3";
    case PhenomenonId::P4: return "P4";
    case PhenomenonId::P4C: return "P4C";
    case PhenomenonId::A5A: return "A5A";
    case PhenomenonId::A5B: return "A5B";
  }
  return {};
}

inline std::optional<PhenomenonId> phenomenon_from_string(const std::string& s) {
  for (PhenomenonId p : kAllPhenomena) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

enum class LevelId {
  Degree0,
  ReadUncommitted,
  ReadCommitted,
  CursorStability,
  RepeatableRead,
  Snapshot,
  Serializable,
};

inline constexpr LevelId kAllLevels[] = {
    LevelId::Degree0,        LevelId::ReadUncommitted, LevelId::ReadCommitted,
    LevelId::CursorStability, LevelId::RepeatableRead, LevelId::Snapshot,
    LevelId::Serializable};

inline std::string to_string(LevelId l) {
  switch (l) {
    case LevelId::Degree0: return "degree0";
    case LevelId::ReadUncommitted: return "read-uncommitted";
    case LevelId::ReadCommitted: return "read-committed";
    case LevelId::CursorStability: return "cursor-stability";
    case LevelId::RepeatableRead: return "repeatable-read";
    case LevelId::Snapshot: return "snapshot";
    case LevelId::Serializable: return "serializable";
  }
  return {};
}

inline std::optional<LevelId> level_from_string(const std::string& s) {
  for (LevelId l : kAllLevels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

/// One template match. `positions` are zero-based indexes into the history's
/// action list, ascending; rendered reports are one-based. `txn1`/`txn2` play
/// the template's T1/T2 roles; `items` are the keys or predicate involved.
struct Witness {
  PhenomenonId phenomenon = PhenomenonId::P0;
  std::vector<std::size_t> positions;
  std::vector<std::string> items;
  TxnId txn1 = 0;
  TxnId txn2 = 0;

  bool operator==(const Witness&) const = default;
};

namespace detail {

// Leftmost occurrence of a matching action at or after `from`; npos if none.
template <typename Pred>
std::size_t first_at(const History& h, std::size_t from, Pred pred) {
  for (std::size_t i = from; i < h.actions.size(); ++i) {
    if (pred(h.actions[i])) return i;
  }
  return static_cast<std::size_t>(-1);
}

constexpr std::size_t npos = static_cast<std::size_t>(-1);

inline auto item_read(TxnId t, const Key& k) {
  return [t, &k](const Action& a) {
    return a.kind == ActionKind::Read && a.txn == t && a.target == k;
  };
}
inline auto cursor_read(TxnId t, const Key& k) {
  return [t, &k](const Action& a) {
    return a.kind == ActionKind::CursorRead && a.txn == t && a.target == k;
  };
}
inline auto item_write(TxnId t, const Key& k) {
  return [t, &k](const Action& a) {
    return is_write_kind(a.kind) && a.txn == t && a.target == k;
  };
}
inline auto pred_read(TxnId t, const std::string& p) {
  return [t, &p](const Action& a) {
    return a.kind == ActionKind::PredicateRead && a.txn == t && a.target == p;
  };
}
inline auto covered_write(TxnId t, const std::set<Key>& covered) {
  return [t, &covered](const Action& a) {
    return is_write_kind(a.kind) && a.txn == t && covered.count(a.target) > 0;
  };
}
inline auto terminal_of(TxnId t) {
  return [t](const Action& a) { return a.txn == t && is_terminal(a.kind); };
}
inline auto commit_of(TxnId t) {
  return [t](const Action& a) { return a.txn == t && a.kind == ActionKind::Commit; };
}
inline auto abort_of(TxnId t) {
  return [t](const Action& a) { return a.txn == t && a.kind == ActionKind::Abort; };
}

inline std::vector<Key> keys_of(const History& h) {
  std::set<Key> keys;
  for (const auto& a : h.actions) {
    if (is_item_kind(a.kind)) keys.insert(a.target);
  }
  return {keys.begin(), keys.end()};
}

}  // namespace detail

/// Returns every match of the template for phenomenon `p` in the
/// single-version history `h`: for each instantiation (ordered transaction
/// pair plus item/predicate choice) the leftmost match, in deterministic
/// order. Histories without cursor actions simply yield no P4C matches.
inline std::vector<Witness> detect(const History& h, PhenomenonId p) {
  using namespace detail;
  if (h.flavor != Flavor::SingleVersion) {
    throw EngineError("detectors operate on single-version histories; map first");
  }
  std::vector<Witness> out;
  std::set<TxnId> txns = h.txns();
  std::vector<Key> keys = keys_of(h);

  auto emit = [&](std::vector<std::size_t> pos, std::vector<std::string> items,
                  TxnId t1, TxnId t2) {
    std::sort(pos.begin(), pos.end());
    out.push_back(Witness{p, std::move(pos), std::move(items), t1, t2});
  };

  for (TxnId t1 : txns) {
    for (TxnId t2 : txns) {
      if (t1 == t2) continue;
      switch (p) {
        case PhenomenonId::P0:
          for (const Key& k : keys) {
            std::size_t i = first_at(h, 0, item_write(t1, k));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, item_write(t2, k));
            if (j == npos) continue;
            std::size_t t = first_at(h, j + 1, terminal_of(t1));
            if (t == npos) continue;
            emit({i, j, t}, {k}, t1, t2);
          }
          break;
        case PhenomenonId::P1:
          for (const Key& k : keys) {
            std::size_t i = first_at(h, 0, item_write(t1, k));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, item_read(t2, k));
            if (j == npos) continue;
            std::size_t t = first_at(h, j + 1, terminal_of(t1));
            if (t == npos) continue;
            emit({i, j, t}, {k}, t1, t2);
          }
          break;
        case PhenomenonId::P2:
          for (const Key& k : keys) {
            std::size_t i = first_at(h, 0, item_read(t1, k));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, item_write(t2, k));
            if (j == npos) continue;
            std::size_t t = first_at(h, j + 1, terminal_of(t1));
            if (t == npos) continue;
            emit({i, j, t}, {k}, t1, t2);
          }
          break;
        case PhenomenonId::P3:
          for (const auto& pd : h.predicates) {
            std::size_t i = first_at(h, 0, pred_read(t1, pd.name));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, covered_write(t2, pd.covered));
            if (j == npos) continue;
            std::size_t t = first_at(h, j + 1, terminal_of(t1));
            if (t == npos) continue;
            emit({i, j, t}, {pd.name, h.actions[j].target}, t1, t2);
          }
          break;
        case PhenomenonId::A1:
          for (const Key& k : keys) {
            std::size_t i = first_at(h, 0, item_write(t1, k));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, item_read(t2, k));
            if (j == npos) continue;
            std::size_t a1 = first_at(h, j + 1, abort_of(t1));
            std::size_t c2 = first_at(h, j + 1, commit_of(t2));
            if (a1 == npos || c2 == npos) continue;
            emit({i, j, a1, c2}, {k}, t1, t2);
          }
          break;
        case PhenomenonId::A2:
          for (const Key& k : keys) {
            std::size_t i = first_at(h, 0, item_read(t1, k));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, item_write(t2, k));
            if (j == npos) continue;
            std::size_t c2 = first_at(h, j + 1, commit_of(t2));
            if (c2 == npos) continue;
            std::size_t i2 = first_at(h, c2 + 1, item_read(t1, k));
            if (i2 == npos) continue;
            std::size_t c1 = first_at(h, i2 + 1, commit_of(t1));
            if (c1 == npos) continue;
            emit({i, j, c2, i2, c1}, {k}, t1, t2);
          }
          break;
        case PhenomenonId::A3:
          for (const auto& pd : h.predicates) {
            std::size_t i = first_at(h, 0, pred_read(t1, pd.name));
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, covered_write(t2, pd.covered));
            if (j == npos) continue;
            std::size_t c2 = first_at(h, j + 1, commit_of(t2));
            if (c2 == npos) continue;
            std::size_t i2 = first_at(h, c2 + 1, pred_read(t1, pd.name));
            if (i2 == npos) continue;
            std::size_t c1 = first_at(h, i2 + 1, commit_of(t1));
            if (c1 == npos) continue;
            emit({i, j, c2, i2, c1}, {pd.name, h.actions[j].target}, t1, t2);
          }
          break;
        case PhenomenonId::P4:
        case PhenomenonId::P4C:
          for (const Key& k : keys) {
            ActionKind read_kind = p == PhenomenonId::P4C ? ActionKind::CursorRead
                                                          : ActionKind::Read;
            std::size_t i = first_at(h, 0, [&](const Action& a) {
              return a.kind == read_kind && a.txn == t1 && a.target == k;
            });
            if (i == npos) continue;
            std::size_t j = first_at(h, i + 1, item_write(t2, k));
            if (j == npos) continue;
            std::size_t l = first_at(h, j + 1, item_write(t1, k));
            if (l == npos) continue;
            std::size_t c = first_at(h, l + 1, commit_of(t1));
            if (c == npos) continue;
            emit({i, j, l, c}, {k}, t1, t2);
          }
          break;
        case PhenomenonId::A5A:
          for (const Key& x : keys) {
            for (const Key& y : keys) {
              if (x == y) continue;
              std::size_t i1 = first_at(h, 0, item_read(t1, x));
              if (i1 == npos) continue;
              std::size_t i2 = first_at(h, i1 + 1, item_write(t2, x));
              if (i2 == npos) continue;
              std::size_t i3 = first_at(h, i2 + 1, item_write(t2, y));
              if (i3 == npos) continue;
              std::size_t c2 = first_at(h, i3 + 1, commit_of(t2));
              if (c2 == npos) continue;
              std::size_t i5 = first_at(h, c2 + 1, item_read(t1, y));
              if (i5 == npos) continue;
              std::size_t t = first_at(h, i5 + 1, terminal_of(t1));
              if (t == npos) continue;
              emit({i1, i2, i3, c2, i5, t}, {x, y}, t1, t2);
            }
          }
          break;
        case PhenomenonId::A5B:
          for (const Key& x : keys) {
            for (const Key& y : keys) {
              if (x == y) continue;
              std::size_t i1 = first_at(h, 0, item_read(t1, x));
              if (i1 == npos) continue;
              std::size_t i2 = first_at(h, i1 + 1, item_read(t2, y));
              if (i2 == npos) continue;
              std::size_t i3 = first_at(h, i2 + 1, item_write(t1, y));
              if (i3 == npos) continue;
              std::size_t i4 = first_at(h, i3 + 1, item_write(t2, x));
              if (i4 == npos) continue;
              std::size_t c1 = first_at(h, 0, commit_of(t1));
              std::size_t c2 = first_at(h, 0, commit_of(t2));
              if (c1 == npos || c2 == npos) continue;
              emit({i1, i2, i3, i4, c1, c2}, {x, y}, t1, t2);
            }
          }
          break;
      }
    }
  }
  return out;
}

/// Runs every detector; the result has an entry per PhenomenonId.
inline std::map<PhenomenonId, std::vector<Witness>> classify(const History& h) {
  std::map<PhenomenonId, std::vector<Witness>> out;
  for (PhenomenonId p : kAllPhenomena) out[p] = detect(h, p);
  return out;
}

/// Phenomena a level rules out, per the anomaly matrix ("sometimes possible"
/// cells count as allowed). Degree 0 only promises action atomicity and rules
/// out nothing.
inline const std::set<PhenomenonId>& prohibited_phenomena(LevelId level) {
  using P = PhenomenonId;
  static const std::map<LevelId, std::set<P>> table = {
      {LevelId::Degree0, {}},
      {LevelId::ReadUncommitted, {P::P0}},
      {LevelId::ReadCommitted, {P::P0, P::P1}},
      {LevelId::CursorStability, {P::P0, P::P1, P::P4C}},
      {LevelId::RepeatableRead,
       {P::P0, P::P1, P::P4C, P::P4, P::P2, P::A5A, P::A5B}},
      {LevelId::Snapshot, {P::P0, P::P1, P::P4C, P::P4, P::P2, P::A5A}},
      {LevelId::Serializable,
       {P::P0, P::P1, P::P4C, P::P4, P::P2, P::P3, P::A5A, P::A5B}},
  };
  return table.at(level);
}

/// True iff the history exhibits none of the phenomena the level prohibits.
inline bool admits(LevelId level, const History& h) {
  for (PhenomenonId p : prohibited_phenomena(level)) {
    if (!detect(h, p).empty()) return false;
  }
  return true;
}

/// Pattern token without value/version decoration, e.g. "r1[x]" or "c2".
inline std::string pattern_token(const Action& a) {
  Action stripped = a;
  stripped.value.reset();
  stripped.version.reset();
  return format_action(stripped);
}

/// Human-readable witness line: "P2: r1[x]@2 w2[x]@3 c1@7" (one-based
/// positions).
inline std::string render_witness(const History& h, const Witness& w) {
  std::ostringstream out;
  out << to_string(w.phenomenon) << ':';
  for (std::size_t pos : w.positions) {
    out << ' ' << pattern_token(h.actions[pos]) << '@' << pos + 1;
  }
  return out.str();
}

/// Machine-readable witness record, line-oriented key=value fields.
inline std::string render_witness_record(const Witness& w) {
  std::ostringstream out;
  out << "phenomenon=" << to_string(w.phenomenon) << " txn1=" << w.txn1
      << " txn2=" << w.txn2 << " items=";
  for (std::size_t i = 0; i < w.items.size(); ++i) {
    if (i) out << ',';
    out << w.items[i];
  }
  out << " positions=";
  for (std::size_t i = 0; i < w.positions.size(); ++i) {
    if (i) out << ',';
    out << w.positions[i] + 1;
  }
  return out.str();
}

}  // namespace isolab
