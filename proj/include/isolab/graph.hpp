#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "isolab/core.hpp"

namespace isolab {

enum class EdgeLabel { WW, WR, RW };
enum class EdgeScope { Item, Predicate };

inline std::string to_string(EdgeLabel l) {
  switch (l) {
    case EdgeLabel::WW: return "ww";
    case EdgeLabel::WR: return "wr";
    case EdgeLabel::RW: return "rw";
  }
  return {};
}

struct Edge {
  TxnId from = 0;
  TxnId to = 0;
  EdgeLabel label = EdgeLabel::WW;
  EdgeScope scope = EdgeScope::Item;
  std::string target;  // item key, or predicate name for predicate scope

  auto operator<=>(const Edge&) const = default;
};

/// Committed transactions as nodes, conflict-ordered edges between them.
struct DependencyGraph {
  std::set<TxnId> nodes;
  std::set<Edge> edges;

  bool operator==(const DependencyGraph&) const = default;
};

/// True iff the two data actions conflict: distinct transactions, at least
/// one write, and overlapping targets (same item, or a predicate read against
/// a write of a covered key).
inline bool action_conflicts(const Action& a, const Action& b,
                             const std::vector<PredicateDecl>& preds) {
  if (!is_data(a.kind) || !is_data(b.kind)) return false;
  if (a.txn == b.txn) return false;
  if (!is_write_kind(a.kind) && !is_write_kind(b.kind)) return false;
  auto covered = [&](const std::string& pred, const Key& key) {
    for (const auto& p : preds) {
      if (p.name == pred) return p.covered.count(key) > 0;
    }
    return false;
  };
  if (a.kind == ActionKind::PredicateRead) {
    return is_write_kind(b.kind) && covered(a.target, b.target);
  }
  if (b.kind == ActionKind::PredicateRead) {
    return is_write_kind(a.kind) && covered(b.target, a.target);
  }
  return a.target == b.target;
}

inline bool action_conflicts(const Action& a, const Action& b, const History& h) {
  return action_conflicts(a, b, h.predicates);
}

/// Builds the dependency graph of a single-version history: one node per
/// committed transaction, one edge per ordered conflicting pair, labeled
/// ww/wr/rw and keyed by the item or predicate involved.
inline DependencyGraph dependency_graph(const History& h) {
  if (h.flavor != Flavor::SingleVersion) {
    throw EngineError("dependency graph requires a single-version history; map it first");
  }
  DependencyGraph g;
  g.nodes = h.committed_txns();
  for (std::size_t i = 0; i < h.actions.size(); ++i) {
    const Action& a = h.actions[i];
    if (!is_data(a.kind) || !g.nodes.count(a.txn)) continue;
    for (std::size_t j = i + 1; j < h.actions.size(); ++j) {
      const Action& b = h.actions[j];
      if (!is_data(b.kind) || !g.nodes.count(b.txn)) continue;
      if (!action_conflicts(a, b, h.predicates)) continue;
      EdgeLabel label;
      if (is_write_kind(a.kind)) {
        label = is_write_kind(b.kind) ? EdgeLabel::WW : EdgeLabel::WR;
      } else {
        label = EdgeLabel::RW;
      }
      bool pred_scope = a.kind == ActionKind::PredicateRead ||
                        b.kind == ActionKind::PredicateRead;
      std::string target = pred_scope
                               ? (a.kind == ActionKind::PredicateRead ? a.target
                                                                      : b.target)
                               : a.target;
      g.edges.insert(Edge{a.txn, b.txn, label,
                          pred_scope ? EdgeScope::Predicate : EdgeScope::Item,
                          std::move(target)});
    }
  }
  return g;
}

namespace detail {

inline bool find_cycle_from(TxnId node, const std::map<TxnId, std::set<TxnId>>& adj,
                            std::map<TxnId, int>& state, std::vector<TxnId>& stack,
                            std::vector<TxnId>& cycle) {
  state[node] = 1;
  stack.push_back(node);
  auto it = adj.find(node);
  if (it != adj.end()) {
    for (TxnId next : it->second) {
      if (state[next] == 1) {
        auto pos = std::find(stack.begin(), stack.end(), next);
        cycle.assign(pos, stack.end());
        return true;
      }
      if (state[next] == 0 &&
          find_cycle_from(next, adj, state, stack, cycle)) {
        return true;
      }
    }
  }
  stack.pop_back();
  state[node] = 2;
  return false;
}

}  // namespace detail

/// Returns one cycle of the graph if it has any, in node order.
inline std::optional<std::vector<TxnId>> find_cycle(const DependencyGraph& g) {
  std::map<TxnId, std::set<TxnId>> adj;
  for (const auto& e : g.edges) adj[e.from].insert(e.to);
  std::map<TxnId, int> state;
  std::vector<TxnId> stack, cycle;
  for (TxnId n : g.nodes) {
    if (state[n] == 0 && detail::find_cycle_from(n, adj, state, stack, cycle)) {
      return cycle;
    }
  }
  return std::nullopt;
}

struct SerializabilityResult {
  bool serializable = true;
  std::optional<std::vector<TxnId>> cycle;
};

/// A history is serializable iff its dependency graph is acyclic. When it is
/// not, one witness cycle is returned.
inline SerializabilityResult is_serializable(const History& h) {
  auto cycle = find_cycle(dependency_graph(h));
  return {!cycle.has_value(), std::move(cycle)};
}

/// Two single-version histories are equivalent iff they have the same
/// committed transactions and the same dependency graph.
inline bool histories_equivalent(const History& h1, const History& h2) {
  return dependency_graph(h1) == dependency_graph(h2);
}

/// Graphviz rendering of the dependency graph.
inline std::string to_dot(const DependencyGraph& g) {
  std::ostringstream out;
  out << "digraph deps {\n";
  for (TxnId n : g.nodes) out << "  \"T" << n << "\";\n";
  for (const auto& e : g.edges) {
    out << "  \"T" << e.from << "\" -> \"T" << e.to << "\" [label=\""
        << to_string(e.label) << ':' << e.target << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace isolab
