#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "isolab/core.hpp"
#include "isolab/parse.hpp"

namespace isolab {

// A workload declares the key universe, initial values, predicates, and one
// straight-line program per transaction. Programs end with commit; aborts are
// injected by the engines. File format, one declaration per line:
//
//   universe {x,y}
//   init x=50
//   pred emps = {e1,e2}
//   txn 1: r[x] w[x=10] r[P:emps] open[P:emps] fetch wc[=30] close commit

struct Step {
  enum class Kind {
    Read,
    Write,
    PredicateRead,
    CursorOpen,
    CursorFetch,
    CursorWrite,
    CursorClose,
    Commit,
  };
  Kind kind = Kind::Commit;
  std::string target;  // key, or predicate name for PredicateRead/CursorOpen
  std::optional<int> value;

  bool operator==(const Step&) const = default;
};

struct TxnProgram {
  TxnId id = 0;
  std::vector<Step> steps;

  bool operator==(const TxnProgram&) const = default;
};

using Schedule = std::vector<TxnId>;

/// Final-state check attached to the built-in workloads, reported after runs.
struct Constraint {
  std::string description;
  std::function<bool(const std::map<Key, int>&)> holds;
};

struct Workload {
  std::string name;
  std::set<Key> universe;
  std::map<Key, int> init;
  std::vector<PredicateDecl> predicates;
  std::vector<TxnProgram> programs;
  std::optional<Constraint> constraint;
  std::map<std::string, Schedule> reference_schedules;

  const TxnProgram* find_program(TxnId t) const {
    for (const auto& p : programs) {
      if (p.id == t) return &p;
    }
    return nullptr;
  }

  const PredicateDecl* find_predicate(const std::string& name) const {
    for (const auto& p : predicates) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  std::map<Key, int> initial_db() const {
    std::map<Key, int> db;
    for (const auto& k : universe) db[k] = 0;
    for (const auto& [k, v] : init) db[k] = v;
    return db;
  }

  std::size_t total_steps() const {
    std::size_t n = 0;
    for (const auto& p : programs) n += p.steps.size();
    return n;
  }

  void validate() const {
    std::set<TxnId> ids;
    for (const auto& p : programs) {
      if (p.id <= 0) throw HistoryError("transaction ids must be positive");
      if (!ids.insert(p.id).second) {
        throw HistoryError("duplicate program for transaction " +
                           std::to_string(p.id));
      }
      if (p.steps.empty() || p.steps.back().kind != Step::Kind::Commit) {
        throw HistoryError("programs must end with commit");
      }
      bool cursor_open = false;
      bool positioned = false;
      for (std::size_t i = 0; i < p.steps.size(); ++i) {
        const Step& s = p.steps[i];
        if (s.kind == Step::Kind::Commit && i + 1 != p.steps.size()) {
          throw HistoryError("commit must be the last step");
        }
        switch (s.kind) {
          case Step::Kind::Read:
          case Step::Kind::Write:
            if (!universe.count(s.target)) {
              throw HistoryError("key '" + s.target + "' not in universe");
            }
            break;
          case Step::Kind::PredicateRead:
            if (!find_predicate(s.target)) {
              throw HistoryError("undeclared predicate '" + s.target + "'");
            }
            break;
          case Step::Kind::CursorOpen:
            if (!find_predicate(s.target)) {
              throw HistoryError("undeclared predicate '" + s.target + "'");
            }
            cursor_open = true;
            positioned = false;
            break;
          case Step::Kind::CursorFetch:
            if (!cursor_open) throw HistoryError("fetch without open cursor");
            positioned = true;
            break;
          case Step::Kind::CursorWrite:
            if (!positioned) throw HistoryError("cursor write without fetch");
            break;
          case Step::Kind::CursorClose:
            if (!cursor_open) throw HistoryError("close without open cursor");
            cursor_open = false;
            positioned = false;
            break;
          case Step::Kind::Commit:
            break;
        }
      }
    }
    for (const auto& p : predicates) {
      for (const auto& k : p.covered) {
        if (!universe.count(k)) {
          throw HistoryError("predicate '" + p.name + "' covers undeclared key '" +
                             k + "'");
        }
      }
    }
  }
};

namespace detail {

inline Step parse_step(Cursor& c) {
  std::size_t start = c.pos;
  std::string word;
  while (!c.done() && std::isalpha(static_cast<unsigned char>(c.peek()))) {
    word += c.peek();
    ++c.pos;
  }
  Step s;
  if (word == "commit") {
    s.kind = Step::Kind::Commit;
    return s;
  }
  if (word == "fetch") {
    s.kind = Step::Kind::CursorFetch;
    return s;
  }
  if (word == "close") {
    s.kind = Step::Kind::CursorClose;
    return s;
  }
  c.expect('[');
  c.skip_ws();
  if (word == "r") {
    if (c.consume_word("P:")) {
      s.kind = Step::Kind::PredicateRead;
      s.target = c.ident();
    } else {
      s.kind = Step::Kind::Read;
      s.target = c.ident();
    }
  } else if (word == "w") {
    s.kind = Step::Kind::Write;
    s.target = c.ident();
    c.expect('=');
    s.value = static_cast<int>(c.integer());
  } else if (word == "open") {
    s.kind = Step::Kind::CursorOpen;
    if (!c.consume_word("P:")) throw ParseError("open expects a predicate", c.pos);
    s.target = c.ident();
  } else if (word == "wc") {
    s.kind = Step::Kind::CursorWrite;
    c.expect('=');
    s.value = static_cast<int>(c.integer());
  } else {
    throw ParseError("unknown program step '" + word + "'", start);
  }
  c.skip_ws();
  c.expect(']');
  return s;
}

}  // namespace detail

/// Parses the line-oriented workload format described above.
inline Workload parse_workload(std::string_view text, std::string name = "workload") {
  Workload w;
  w.name = std::move(name);
  std::size_t line_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string_view line = text.substr(line_start, line_end - line_start);
    std::size_t offset = line_start;
    line_start = line_end + 1 > text.size() ? text.size() : line_end + 1;

    detail::Cursor c{line, 0};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;
    if (c.consume_word("universe")) {
      w.universe = detail::parse_key_set(c);
    } else if (c.consume_word("init ")) {
      c.skip_ws();
      Key k = c.ident();
      c.skip_ws();
      c.expect('=');
      c.skip_ws();
      w.init[k] = static_cast<int>(c.integer());
    } else if (c.consume_word("pred ")) {
      c.skip_ws();
      std::string pname = c.ident();
      c.skip_ws();
      c.expect('=');
      w.predicates.push_back({pname, detail::parse_key_set(c)});
    } else if (c.consume_word("txn ")) {
      c.skip_ws();
      TxnProgram prog;
      prog.id = static_cast<TxnId>(c.integer());
      c.skip_ws();
      c.expect(':');
      while (true) {
        c.skip_ws();
        if (c.done()) break;
        prog.steps.push_back(detail::parse_step(c));
      }
      w.programs.push_back(std::move(prog));
    } else {
      throw ParseError("unrecognized workload line", offset);
    }
  }
  if (w.universe.empty()) {
    for (const auto& [k, v] : w.init) w.universe.insert(k);
    for (const auto& p : w.predicates) {
      w.universe.insert(p.covered.begin(), p.covered.end());
    }
    for (const auto& prog : w.programs) {
      for (const auto& s : prog.steps) {
        if (s.kind == Step::Kind::Read || s.kind == Step::Kind::Write) {
          w.universe.insert(s.target);
        }
      }
    }
  }
  w.validate();
  return w;
}

/// Parses a schedule such as "1 1 2 2 1".
inline Schedule parse_schedule(std::string_view text) {
  Schedule s;
  detail::Cursor c{text, 0};
  while (true) {
    c.skip_ws();
    if (c.done()) break;
    s.push_back(static_cast<TxnId>(c.integer()));
  }
  return s;
}

inline std::string format_schedule(const Schedule& s) {
  std::string out;
  for (TxnId t : s) {
    if (!out.empty()) out += ' ';
    out += std::to_string(t);
  }
  return out;
}

/// Outcome of one transaction in an engine run.
struct TxnOutcome {
  enum class Kind {
    Committed,
    AbortedDeadlock,
    AbortedConflict,  // first-committer-wins
    Blocked,
    Active,
    NotStarted,
  };
  Kind kind = Kind::NotStarted;
  std::vector<Key> conflict_keys;  // for AbortedConflict
};

inline std::string to_string(const TxnOutcome& o) {
  switch (o.kind) {
    case TxnOutcome::Kind::Committed: return "committed";
    case TxnOutcome::Kind::AbortedDeadlock: return "aborted (deadlock victim)";
    case TxnOutcome::Kind::AbortedConflict: {
      std::string s = "aborted (first-committer-wins conflict on ";
      for (std::size_t i = 0; i < o.conflict_keys.size(); ++i) {
        if (i) s += ',';
        s += o.conflict_keys[i];
      }
      return s + ")";
    }
    case TxnOutcome::Kind::Blocked: return "blocked";
    case TxnOutcome::Kind::Active: return "active";
    case TxnOutcome::Kind::NotStarted: return "not started";
  }
  return {};
}

/// Result of replaying a schedule on any engine.
struct RunResult {
  History history;
  std::map<TxnId, TxnOutcome> outcomes;
  bool complete = false;  // every transaction reached its terminal
};

}  // namespace isolab
