#include "chunkflow/envs/env.hpp"

#include <algorithm>
#include <bit>
#include <unordered_set>

namespace chunkflow {

int GraphState::edge_bit(int a, int b) {
  if (a == b || a < 0 || b < 0) throw EnvError("invalid edge endpoints");
  const int hi = std::max(a, b), lo = std::min(a, b);
  const int bit = hi * (hi - 1) / 2 + lo;
  if (bit >= 64) throw EnvError("graph too large for edge bitset");
  return bit;
}

int GraphState::edge_count() const { return std::popcount(edges); }

int GraphState::degree(int node) const {
  int d = 0;
  for (int other = 0; other < node_count; ++other)
    if (other != node && has_edge(node, other)) ++d;
  return d;
}

std::vector<std::pair<int, int>> GraphState::edge_list() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 1; i < node_count; ++i)
    for (int j = 0; j < i; ++j)
      if (has_edge(i, j)) out.emplace_back(j, i);
  return out;
}

std::vector<std::string> Environment::atomic_names() const {
  std::vector<std::string> names;
  for (std::size_t a = 0; a < atomic_count(); ++a) names.push_back(atomic_name(static_cast<ActionId>(a)));
  return names;
}

ActionId Environment::atomic_by_name(const std::string& name) const {
  for (std::size_t a = 0; a < atomic_count(); ++a)
    if (atomic_name(static_cast<ActionId>(a)) == name) return static_cast<ActionId>(a);
  throw EnvError("unknown atomic action '" + name + "' for environment " + id());
}

void Environment::check_atomic(ActionId a) const {
  if (a < 0 || static_cast<std::size_t>(a) >= atomic_count()) {
    throw EnvError("atomic action id " + std::to_string(a) + " out of range for " + id());
  }
}

bool Environment::is_valid_atomic(const EnvState& s, ActionId a) const {
  if (is_terminal(s)) return false;
  const auto valid = valid_atomic_actions(s);
  return std::find(valid.begin(), valid.end(), a) != valid.end();
}

std::optional<EnvState> Environment::atomic_parent(const EnvState& s, ActionId a) const {
  check_atomic(a);
  auto candidate = undo_candidate(s, a);
  if (!candidate || is_terminal(*candidate) || !is_valid_atomic(*candidate, a)) return std::nullopt;
  if (apply_atomic(*candidate, a) != s) return std::nullopt;
  return candidate;
}

bool Environment::expansion_feasible(const EnvState& s, std::span<const ActionId> expansion) const {
  EnvState cur = s;
  for (std::size_t i = 0; i < expansion.size(); ++i) {
    if (is_terminal(cur) || !is_valid_atomic(cur, expansion[i])) return false;
    if (i + 1 < expansion.size() && is_terminal_action(expansion[i])) return false;
    cur = apply_atomic(cur, expansion[i]);
  }
  return true;
}

EnvState Environment::apply_expansion(const EnvState& s, std::span<const ActionId> expansion) const {
  if (!expansion_feasible(s, expansion)) throw EnvError("expansion is not feasible at " + to_string(s));
  EnvState cur = s;
  for (ActionId a : expansion) cur = apply_atomic(cur, a);
  return cur;
}

std::optional<std::vector<ActionId>> Environment::symbols(const EnvState&) const { return std::nullopt; }

std::vector<TerminalState> Environment::enumerate_terminal_states() const {
  check_enumerable();
  std::vector<TerminalState> out;
  std::unordered_set<std::string> seen;
  std::vector<EnvState> stack{initial_state()};
  seen.insert(state_key(stack.back()));
  while (!stack.empty()) {
    EnvState s = std::move(stack.back());
    stack.pop_back();
    if (is_terminal(s)) {
      const double r = reward(s);
      out.push_back({std::move(s), r});
      continue;
    }
    for (ActionId a : valid_atomic_actions(s)) {
      EnvState next = apply_atomic(s, a);
      if (seen.insert(state_key(next)).second) stack.push_back(std::move(next));
    }
  }
  return out;
}

std::vector<EnvState> Environment::enumerate_nonterminal_states() const {
  check_enumerable();
  std::vector<EnvState> out;
  std::unordered_set<std::string> seen;
  std::vector<EnvState> stack{initial_state()};
  seen.insert(state_key(stack.back()));
  while (!stack.empty()) {
    EnvState s = std::move(stack.back());
    stack.pop_back();
    if (is_terminal(s)) continue;
    for (ActionId a : valid_atomic_actions(s)) {
      EnvState next = apply_atomic(s, a);
      if (seen.insert(state_key(next)).second) stack.push_back(std::move(next));
    }
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(),
                   [this](const EnvState& a, const EnvState& b) { return potential(a) < potential(b); });
  return out;
}

std::string state_key(const EnvState& s) {
  struct Visitor {
    std::string operator()(const GridState& g) const {
      return "g" + std::to_string(g.x) + "," + std::to_string(g.y) + (g.exited ? "$" : "");
    }
    std::string operator()(const SequenceState& q) const {
      std::string k = "s";
      for (ActionId a : q.symbols) {
        k += std::to_string(a);
        k += '.';
      }
      return q.terminated ? k + "$" : k;
    }
    std::string operator()(const GraphState& g) const {
      return "G" + std::to_string(g.node_count) + ":" + std::to_string(g.edges) + (g.ended ? "$" : "");
    }
  };
  return std::visit(Visitor{}, s);
}

}  // namespace chunkflow
