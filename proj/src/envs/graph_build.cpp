#include "chunkflow/envs/graph_build.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace chunkflow {

int graph_cycle_rank(const GraphState& g) {
  std::vector<int> parent(static_cast<std::size_t>(g.node_count));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  int components = g.node_count;
  for (auto [a, b] : g.edge_list()) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return g.edge_count() - g.node_count + components;
}

GraphBuild::GraphBuild(GraphBuildParams params) : params_(params) {
  if (params_.max_nodes < 2 || params_.max_nodes > kMaxSupportedNodes) {
    throw EnvError("graph max_nodes must be in [2, " + std::to_string(kMaxSupportedNodes) + "]");
  }
}

std::string GraphBuild::atomic_name(ActionId a) const {
  check_atomic(a);
  if (a == kAddNode) return "ADD-NODE";
  if (a == terminal_action()) return "EOG";
  return "ADD-EDGE-(-" + std::to_string(a) + ")";
}

ActionId GraphBuild::add_edge(int offset) const {
  if (offset < 1 || offset >= params_.max_nodes) throw EnvError("edge offset out of range");
  return offset;
}

const GraphState& GraphBuild::graph(const EnvState& s) const {
  const auto* g = std::get_if<GraphState>(&s);
  if (g == nullptr) throw EnvError("graph expects a graph state");
  return *g;
}

bool GraphBuild::is_terminal(const EnvState& s) const { return graph(s).ended; }

std::vector<ActionId> GraphBuild::valid_atomic_actions(const EnvState& s) const {
  const GraphState& g = graph(s);
  if (g.ended) throw EnvError("no actions at a terminal graph state");
  std::vector<ActionId> out;
  const int n = g.node_count;
  if (n == 0) return {kAddNode};
  const bool can_add_node = n < params_.max_nodes;
  if (n == 1) {
    out.push_back(terminal_action());
    if (can_add_node) out.push_back(kAddNode);
    return out;
  }
  const int last = n - 1;
  int farthest = 0;
  for (int j = 0; j < last; ++j) {
    if (g.has_edge(last, j)) {
      farthest = last - j;
      break;
    }
  }
  if (farthest > 0) {
    out.push_back(terminal_action());
    if (can_add_node) out.push_back(kAddNode);
    const int reach = std::min(farthest + 1, last);
    for (int i = 1; i <= reach; ++i)
      if (!g.has_edge(last, last - i)) out.push_back(i);
  } else {
    for (int i = 1; i <= last; ++i) out.push_back(i);
  }
  return out;
}

bool GraphBuild::is_valid_atomic(const EnvState& s, ActionId a) const {
  if (graph(s).ended) return false;
  const auto valid = valid_atomic_actions(s);
  return std::find(valid.begin(), valid.end(), a) != valid.end();
}

EnvState GraphBuild::apply_atomic(const EnvState& s, ActionId a) const {
  if (!is_valid_atomic(s, a)) throw EnvError("action " + atomic_name(a) + " is not valid at " + to_string(s));
  GraphState g = graph(s);
  if (a == kAddNode) {
    ++g.node_count;
  } else if (a == terminal_action()) {
    g.ended = true;
  } else {
    const int last = g.node_count - 1;
    g.set_edge(last, last - a);
  }
  return g;
}

std::optional<EnvState> GraphBuild::undo_candidate(const EnvState& s, ActionId a) const {
  GraphState g = graph(s);
  if (a == terminal_action()) {
    if (!g.ended) return std::nullopt;
    g.ended = false;
    return g;
  }
  if (g.ended || g.node_count == 0) return std::nullopt;
  const int last = g.node_count - 1;
  if (a == kAddNode) {
    if (g.degree(last) != 0) return std::nullopt;
    --g.node_count;
    return g;
  }
  if (a > last || !g.has_edge(last, last - a)) return std::nullopt;
  g.clear_edge(last, last - a);
  return g;
}

double GraphBuild::max_cycle_rank() const {
  const double n = params_.max_nodes;
  return n * (n - 1.0) / 2.0 - n + 1.0;
}

double GraphBuild::reward(const EnvState& x) const {
  const GraphState& g = graph(x);
  if (!g.ended) throw EnvError("reward of a non-terminal graph state");
  return std::max(graph_cycle_rank(g) / max_cycle_rank(), kRewardFloor);
}

bool GraphBuild::is_mode(const EnvState&, double reward) const { return reward == 1.0; }

std::int64_t GraphBuild::potential(const EnvState& s) const {
  const GraphState& g = graph(s);
  return static_cast<std::int64_t>(g.node_count) * 64 + g.edge_count();
}

std::size_t GraphBuild::distance(const EnvState& a, const EnvState& b) const {
  const GraphState& p = graph(a);
  const GraphState& q = graph(b);
  if (p.node_count > params_.max_nodes || q.node_count > params_.max_nodes) {
    throw EnvError("graph larger than max_nodes cannot be compared");
  }
  return static_cast<std::size_t>(std::popcount(p.edges ^ q.edges));
}

std::string GraphBuild::to_string(const EnvState& s) const {
  const GraphState& g = graph(s);
  std::string out = std::to_string(g.node_count) + ":";
  bool first = true;
  for (auto [a, b] : g.edge_list()) {
    if (!first) out += ";";
    first = false;
    out += std::to_string(a) + "-" + std::to_string(b);
  }
  return g.ended ? out + "$" : out;
}

EnvState GraphBuild::from_string(const std::string& text) const {
  GraphState g;
  std::string body = text;
  if (!body.empty() && body.back() == '$') {
    g.ended = true;
    body.pop_back();
  }
  const auto colon = body.find(':');
  if (colon == std::string::npos) throw EnvError("bad graph state '" + text + "'");
  try {
    g.node_count = std::stoi(body.substr(0, colon));
    std::string edges = body.substr(colon + 1);
    std::istringstream in(edges);
    std::string item;
    while (std::getline(in, item, ';')) {
      if (item.empty()) continue;
      const auto dash = item.find('-');
      if (dash == std::string::npos) throw EnvError("bad edge '" + item + "'");
      const int a = std::stoi(item.substr(0, dash));
      const int b = std::stoi(item.substr(dash + 1));
      if (a < 0 || b < 0 || a >= g.node_count || b >= g.node_count || a == b) {
        throw EnvError("edge '" + item + "' references missing nodes");
      }
      g.set_edge(a, b);
    }
  } catch (const EnvError&) {
    throw;
  } catch (const std::exception&) {
    throw EnvError("bad graph state '" + text + "'");
  }
  if (g.node_count < 0 || g.node_count > params_.max_nodes) throw EnvError("graph node count out of range");
  return g;
}

void GraphBuild::check_enumerable() const {
  if (params_.max_nodes > 5) throw EnvError("graph enumeration is limited to max_nodes <= 5");
}

}  // namespace chunkflow
