#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace chunkflow {

// Atomic actions and library actions share one id space; atomic ids are
// 0..atomic_count-1 in every environment.
using ActionId = std::int32_t;

class EnvError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridState {
  int x = 0;
  int y = 0;
  bool exited = false;
  auto operator<=>(const GridState&) const = default;
};

struct SequenceState {
  std::vector<ActionId> symbols;
  bool terminated = false;
  auto operator<=>(const SequenceState&) const = default;
};

// Nodes are numbered 0..node_count-1 in insertion order. Edge (i, j) with
// i > j occupies bit i*(i-1)/2 + j of `edges`.
struct GraphState {
  int node_count = 0;
  std::uint64_t edges = 0;
  bool ended = false;

  static int edge_bit(int a, int b);
  bool has_edge(int a, int b) const { return (edges >> edge_bit(a, b)) & 1U; }
  void set_edge(int a, int b) { edges |= std::uint64_t{1} << edge_bit(a, b); }
  void clear_edge(int a, int b) { edges &= ~(std::uint64_t{1} << edge_bit(a, b)); }
  int edge_count() const;
  int degree(int node) const;
  bool last_node_connected() const { return node_count > 0 && degree(node_count - 1) > 0; }
  std::vector<std::pair<int, int>> edge_list() const;
  auto operator<=>(const GraphState&) const = default;
};

using EnvState = std::variant<GridState, SequenceState, GraphState>;

enum class EnvKind { kGrid, kSequence, kGraph };

struct TerminalState {
  EnvState state;
  double reward;
};

// A deterministic, acyclic sequential-construction MDP. States are values;
// every method is const and thread-safe.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual EnvKind kind() const = 0;
  virtual std::size_t atomic_count() const = 0;
  virtual std::string atomic_name(ActionId a) const = 0;
  virtual ActionId terminal_action() const = 0;
  bool is_terminal_action(ActionId a) const { return a == terminal_action(); }
  std::vector<std::string> atomic_names() const;
  ActionId atomic_by_name(const std::string& name) const;

  virtual EnvState initial_state() const = 0;
  virtual bool is_terminal(const EnvState& s) const = 0;

  // Throws EnvError on terminal states.
  virtual std::vector<ActionId> valid_atomic_actions(const EnvState& s) const = 0;
  virtual bool is_valid_atomic(const EnvState& s, ActionId a) const;
  // Throws EnvError when `a` is not valid at `s`.
  virtual EnvState apply_atomic(const EnvState& s, ActionId a) const = 0;

  // The state p with apply_atomic(p, a) == s, if one exists.
  std::optional<EnvState> atomic_parent(const EnvState& s, ActionId a) const;

  // True when every atomic of `expansion` is valid in turn starting from s and
  // no constituent but the last is a terminal action.
  virtual bool expansion_feasible(const EnvState& s, std::span<const ActionId> expansion) const;
  EnvState apply_expansion(const EnvState& s, std::span<const ActionId> expansion) const;

  // Pre-exponent reward; strictly positive. Throws EnvError if not terminal.
  virtual double reward(const EnvState& x) const = 0;
  virtual bool is_mode(const EnvState& x, double reward) const = 0;

  // Strictly increases along every non-terminal atomic transition.
  virtual std::int64_t potential(const EnvState& s) const = 0;

  // Hamming-style distance between terminal states.
  virtual std::size_t distance(const EnvState& a, const EnvState& b) const = 0;

  // Terminal-stripped atomic symbols for sequence environments.
  virtual std::optional<std::vector<ActionId>> symbols(const EnvState& s) const;

  // Lossless text form; from_string(to_string(s)) == s.
  virtual std::string to_string(const EnvState& s) const = 0;
  virtual EnvState from_string(const std::string& text) const = 0;

  // Every terminal state exactly once. Throws EnvError above the enumeration
  // budget.
  virtual std::vector<TerminalState> enumerate_terminal_states() const;

  // Every reachable non-terminal state, sorted by potential.
  std::vector<EnvState> enumerate_nonterminal_states() const;

 protected:
  virtual std::optional<EnvState> undo_candidate(const EnvState& s, ActionId a) const = 0;
  virtual void check_enumerable() const = 0;
  void check_atomic(ActionId a) const;
};

// Reward floor applied where the raw reward can be zero.
inline constexpr double kRewardFloor = 1e-10;

std::string state_key(const EnvState& s);

}  // namespace chunkflow
