#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "isolab/core.hpp"

namespace isolab {

// History notation.
//
//   action  := op txn '[' target ']' | 'c' txn | 'a' txn
//   op      := 'r' | 'w' | 'rc' | 'wc'
//   target  := key ['@' ver] ['=' int] | 'P:' predname | key ' in P:' predname
//
// Header lines may precede the actions: "universe {k1,k2}", "init k=v",
// "pred name = {k1,k2}". Actions are whitespace separated; a bracketed target
// may itself contain spaces ("w2[y in P:emps]"). The "in P:" clause is a
// coverage assertion checked at parse time and dropped from the canonical
// rendering.

namespace detail {

inline bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  void skip_ws() {
    while (!done() && std::isspace(static_cast<unsigned char>(peek()))) ++pos;
  }
  std::string ident() {
    std::size_t start = pos;
    while (!done() && ident_char(peek())) ++pos;
    if (pos == start) throw ParseError("expected identifier", start);
    return std::string(text.substr(start, pos - start));
  }
  long integer() {
    std::size_t start = pos;
    bool neg = false;
    if (!done() && (peek() == '-' || peek() == '+')) {
      neg = peek() == '-';
      ++pos;
    }
    std::size_t digits = pos;
    while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos;
    if (pos == digits) throw ParseError("expected integer", start);
    long v = std::stol(std::string(text.substr(digits, pos - digits)));
    return neg ? -v : v;
  }
  void expect(char c) {
    if (done() || peek() != c) {
      throw ParseError(std::string("expected '") + c + "'", pos);
    }
    ++pos;
  }
  bool consume(char c) {
    if (!done() && peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }
  bool consume_word(std::string_view w) {
    if (text.substr(pos, w.size()) == w) {
      pos += w.size();
      return true;
    }
    return false;
  }
};

inline std::set<Key> parse_key_set(Cursor& c) {
  std::set<Key> keys;
  c.skip_ws();
  c.expect('{');
  c.skip_ws();
  if (!c.consume('}')) {
    while (true) {
      keys.insert(c.ident());
      c.skip_ws();
      if (c.consume('}')) break;
      c.expect(',');
      c.skip_ws();
    }
  }
  return keys;
}

inline Action parse_action_token(Cursor& c, const History& partial) {
  std::size_t start = c.pos;
  std::string op;
  while (!c.done() && std::isalpha(static_cast<unsigned char>(c.peek()))) {
    op += c.peek();
    ++c.pos;
  }
  TxnId txn = static_cast<TxnId>(c.integer());
  if (txn <= 0) throw ParseError("transaction id must be positive", start);
  if (op == "c") return make_commit(txn);
  if (op == "a") return make_abort(txn);

  ActionKind kind;
  if (op == "r") kind = ActionKind::Read;
  else if (op == "w") kind = ActionKind::Write;
  else if (op == "rc") kind = ActionKind::CursorRead;
  else if (op == "wc") kind = ActionKind::CursorWrite;
  else throw ParseError("unknown action op '" + op + "'", start);

  c.expect('[');
  c.skip_ws();
  Action a;
  a.kind = kind;
  a.txn = txn;
  if (c.consume_word("P:")) {
    if (kind != ActionKind::Read) {
      throw ParseError("predicate target is only valid for 'r'", c.pos);
    }
    a.kind = ActionKind::PredicateRead;
    a.target = c.ident();
  } else {
    a.target = c.ident();
    if (c.consume('@')) a.version = static_cast<TxnId>(c.integer());
    if (c.consume('=')) a.value = static_cast<int>(c.integer());
    c.skip_ws();
    if (c.consume_word("in ")) {
      c.skip_ws();
      if (!c.consume_word("P:")) throw ParseError("expected 'P:' after 'in'", c.pos);
      std::string pred = c.ident();
      const PredicateDecl* decl = partial.find_predicate(pred);
      if (!decl) throw ParseError("undeclared predicate '" + pred + "'", start);
      if (!decl->covered.count(a.target)) {
        throw ParseError("key '" + a.target + "' is not covered by predicate '" +
                             pred + "'",
                         start);
      }
    }
  }
  c.skip_ws();
  c.expect(']');
  return a;
}

}  // namespace detail

/// Parses history notation into a History. Throws ParseError on malformed
/// text and HistoryError on invariant violations (action after terminal,
/// undeclared predicate, inconsistent version markers).
inline History parse_history(std::string_view text) {
  History h;
  bool saw_version = false;

  // Header lines first; everything after them is one action stream.
  std::size_t line_start = 0;
  std::size_t body_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string_view line = text.substr(line_start, line_end - line_start);
    detail::Cursor c{line, 0};
    c.skip_ws();
    if (c.done()) {
      body_start = line_end + 1 > text.size() ? text.size() : line_end + 1;
      line_start = body_start;
      continue;
    }
    if (c.consume_word("universe")) {
      auto keys = detail::parse_key_set(c);
      if (h.universe) throw ParseError("duplicate universe declaration", line_start);
      h.universe = std::move(keys);
    } else if (c.consume_word("init ")) {
      c.skip_ws();
      Key k = c.ident();
      c.skip_ws();
      c.expect('=');
      c.skip_ws();
      h.init[k] = static_cast<int>(c.integer());
    } else if (c.consume_word("pred ")) {
      c.skip_ws();
      std::string name = c.ident();
      c.skip_ws();
      c.expect('=');
      if (h.find_predicate(name)) {
        throw ParseError("duplicate predicate '" + name + "'", line_start);
      }
      h.predicates.push_back({name, detail::parse_key_set(c)});
    } else {
      break;  // first action line
    }
    body_start = line_end + 1 > text.size() ? text.size() : line_end + 1;
    line_start = body_start;
  }

  detail::Cursor c{text, body_start};
  std::set<TxnId> terminated;
  while (true) {
    c.skip_ws();
    if (c.done()) break;
    std::size_t at = c.pos;
    Action a = detail::parse_action_token(c, h);
    if (terminated.count(a.txn)) {
      if (is_terminal(a.kind)) throw ParseError("duplicate terminal", at);
      throw ParseError("action after terminal", at);
    }
    if (is_terminal(a.kind)) terminated.insert(a.txn);
    if (a.version) saw_version = true;
    h.actions.push_back(std::move(a));
  }

  h.flavor = saw_version ? Flavor::MultiVersion : Flavor::SingleVersion;
  h.validate();
  return h;
}

/// Renders a single action in canonical notation.
inline std::string format_action(const Action& a) {
  std::ostringstream out;
  switch (a.kind) {
    case ActionKind::Commit:
      out << 'c' << a.txn;
      return out.str();
    case ActionKind::Abort:
      out << 'a' << a.txn;
      return out.str();
    case ActionKind::Read:
    case ActionKind::PredicateRead:
      out << 'r';
      break;
    case ActionKind::Write:
      out << 'w';
      break;
    case ActionKind::CursorRead:
      out << "rc";
      break;
    case ActionKind::CursorWrite:
      out << "wc";
      break;
  }
  out << a.txn << '[';
  if (a.kind == ActionKind::PredicateRead) out << "P:";
  out << a.target;
  if (a.version) out << '@' << *a.version;
  if (a.value) out << '=' << *a.value;
  out << ']';
  return out.str();
}

/// Renders only the action sequence, one space-separated line.
inline std::string format_actions(const History& h) {
  std::string out;
  for (const auto& a : h.actions) {
    if (!out.empty()) out += ' ';
    out += format_action(a);
  }
  return out;
}

/// Canonical rendering; parse_history(format_history(h)) == h.
inline std::string format_history(const History& h) {
  std::ostringstream out;
  if (h.universe) {
    out << "universe {";
    bool first = true;
    for (const auto& k : *h.universe) {
      if (!first) out << ',';
      out << k;
      first = false;
    }
    out << "}\n";
  }
  for (const auto& [k, v] : h.init) out << "init " << k << '=' << v << '\n';
  for (const auto& p : h.predicates) {
    out << "pred " << p.name << " = {";
    bool first = true;
    for (const auto& k : p.covered) {
      if (!first) out << ',';
      out << k;
      first = false;
    }
    out << "}\n";
  }
  out << format_actions(h);
  return out.str();
}

}  // namespace isolab
