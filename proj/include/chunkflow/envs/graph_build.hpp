#pragma once

#include "chunkflow/envs/env.hpp"

namespace chunkflow {

// |E| - |V| + #connected components over the nodes added so far.
int graph_cycle_rank(const GraphState& g);

struct GraphBuildParams {
  int max_nodes = 7;
};

// Node-by-node graph construction with edges relative to the last node:
// ADD-EDGE-(-i) joins the last node to the node i positions before it.
// Action ids: ADD-NODE = 0, ADD-EDGE-(-i) = i for i in 1..N-1, EOG = N.
class GraphBuild final : public Environment {
 public:
  static constexpr ActionId kAddNode = 0;
  static constexpr int kMaxSupportedNodes = 11;

  explicit GraphBuild(GraphBuildParams params);

  std::string id() const override { return "graph"; }
  EnvKind kind() const override { return EnvKind::kGraph; }
  std::size_t atomic_count() const override { return static_cast<std::size_t>(params_.max_nodes) + 1; }
  std::string atomic_name(ActionId a) const override;
  ActionId terminal_action() const override { return params_.max_nodes; }
  ActionId add_edge(int offset) const;

  EnvState initial_state() const override { return GraphState{}; }
  bool is_terminal(const EnvState& s) const override;
  std::vector<ActionId> valid_atomic_actions(const EnvState& s) const override;
  bool is_valid_atomic(const EnvState& s, ActionId a) const override;
  EnvState apply_atomic(const EnvState& s, ActionId a) const override;

  double reward(const EnvState& x) const override;
  bool is_mode(const EnvState& x, double reward) const override;
  std::int64_t potential(const EnvState& s) const override;
  // Differing upper-triangular adjacency entries, padded to max_nodes.
  std::size_t distance(const EnvState& a, const EnvState& b) const override;

  std::string to_string(const EnvState& s) const override;
  EnvState from_string(const std::string& text) const override;

  int max_nodes() const { return params_.max_nodes; }
  double max_cycle_rank() const;

 protected:
  std::optional<EnvState> undo_candidate(const EnvState& s, ActionId a) const override;
  void check_enumerable() const override;

 private:
  const GraphState& graph(const EnvState& s) const;

  GraphBuildParams params_;
};

}  // namespace chunkflow
