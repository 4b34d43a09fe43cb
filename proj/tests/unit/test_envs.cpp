#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include "chunkflow/envs/fractal_grid.hpp"
#include "chunkflow/envs/graph_build.hpp"
#include "chunkflow/envs/sequence_env.hpp"

using namespace chunkflow;

namespace {

const std::vector<std::string> kWords = {"00000000", "11111111", "11110000", "00001111", "00111100"};

// Exhaustive search over every set of disjoint word placements.
int brute_tiling(const std::string& s, std::size_t from) {
  int best = 0;
  for (std::size_t i = from; i + 8 <= s.size(); ++i) {
    if (std::find(kWords.begin(), kWords.end(), s.substr(i, 8)) != kWords.end()) {
      best = std::max(best, 1 + brute_tiling(s, i + 8));
    }
  }
  return best;
}

GraphState graph_from_edges(int nodes, const std::vector<std::pair<int, int>>& edges, bool ended = true) {
  GraphState g;
  g.node_count = nodes;
  for (auto [a, b] : edges) g.set_edge(a, b);
  g.ended = ended;
  return g;
}

// Random walk through valid atomic actions, checking each step.
template <typename Check>
void random_walks(const Environment& env, int walks, std::uint64_t seed, Check check) {
  std::mt19937_64 rng(seed);
  for (int w = 0; w < walks; ++w) {
    EnvState s = env.initial_state();
    while (!env.is_terminal(s)) {
      const auto actions = env.valid_atomic_actions(s);
      ASSERT_FALSE(actions.empty());
      const ActionId a = actions[std::uniform_int_distribution<std::size_t>(0, actions.size() - 1)(rng)];
      EnvState next = env.apply_atomic(s, a);
      check(s, a, next);
      s = std::move(next);
    }
  }
}

}  // namespace

TEST(Envs, InitialStates) {
  FractalGrid grid({.side = 65});
  EXPECT_EQ(std::get<GridState>(grid.initial_state()), (GridState{0, 0, false}));
  BitSequence bits({.length = 16});
  EXPECT_EQ(bits.to_string(bits.initial_state()), "");
  GraphBuild graph({.max_nodes = 7});
  EXPECT_EQ(std::get<GraphState>(graph.initial_state()).node_count, 0);
  EXPECT_EQ(std::get<GraphState>(graph.initial_state()).edges, 0u);
}

TEST(Envs, GridBoundaryActions) {
  FractalGrid grid({.side = 65});
  const auto a = grid.valid_atomic_actions(GridState{64, 10, false});
  EXPECT_EQ(std::set<ActionId>(a.begin(), a.end()), (std::set<ActionId>{FractalGrid::kUp, FractalGrid::kExit}));
  EXPECT_THROW(grid.apply_atomic(GridState{64, 10, false}, FractalGrid::kRight), EnvError);
  EXPECT_THROW(grid.valid_atomic_actions(GridState{1, 1, true}), EnvError);
}

TEST(Envs, ApplyAtomic) {
  FractalGrid grid({.side = 65});
  EXPECT_EQ(std::get<GridState>(grid.apply_atomic(GridState{3, 4, false}, FractalGrid::kUp)), (GridState{3, 5, false}));
  SyntheticRna rna({});
  const EnvState ac = rna.from_string("AC");
  EXPECT_EQ(rna.to_string(rna.apply_atomic(ac, rna.atomic_by_name("G"))), "ACG");
  EXPECT_TRUE(rna.is_terminal(rna.apply_atomic(ac, rna.terminal_action())));
}

TEST(Envs, GraphActionRules) {
  GraphBuild g({.max_nodes = 7});
  const auto one = g.valid_atomic_actions(graph_from_edges(1, {}, false));
  EXPECT_EQ(std::set<ActionId>(one.begin(), one.end()), (std::set<ActionId>{g.terminal_action(), GraphBuild::kAddNode}));
  const auto empty = g.valid_atomic_actions(g.initial_state());
  EXPECT_EQ(empty, std::vector<ActionId>{GraphBuild::kAddNode});
  const auto three = g.valid_atomic_actions(graph_from_edges(3, {{1, 0}}, false));
  EXPECT_EQ(std::set<ActionId>(three.begin(), three.end()), (std::set<ActionId>{g.add_edge(1), g.add_edge(2)}));
}

TEST(Envs, GraphRelativeEdgeClosesTriangle) {
  GraphBuild g({.max_nodes = 7});
  // Nodes 0,1,2 with edges (0,1),(1,2); -2 from the last node reaches node 0.
  const EnvState s = graph_from_edges(3, {{1, 0}, {2, 1}}, false);
  const auto& next = std::get<GraphState>(g.apply_atomic(s, g.add_edge(2)));
  EXPECT_TRUE(next.has_edge(2, 0));
  EXPECT_EQ(next.edge_count(), 3);
}

TEST(Envs, Rewards) {
  BitSequence bits({.length = 16});
  EXPECT_DOUBLE_EQ(bits.reward(bits.from_string("0000000011111111$")), 1.0);
  EXPECT_DOUBLE_EQ(bits.reward(bits.from_string("1010101010101010$")), kRewardFloor);
  GraphBuild g({.max_nodes = 7});
  EXPECT_DOUBLE_EQ(g.reward(graph_from_edges(3, {{1, 0}, {2, 1}, {2, 0}})), 1.0 / 15.0);
  SyntheticRna rna({});
  const std::string motif = rna.motifs().front();
  EXPECT_DOUBLE_EQ(rna.reward(rna.from_string(motif + "$")), 1.0);
  EXPECT_DOUBLE_EQ(rna.reward(rna.from_string("ACG$")), kRewardFloor);
  EXPECT_THROW(rna.reward(rna.from_string(motif)), EnvError);
}

TEST(Envs, RnaRewardDecaysWithDistance) {
  SyntheticRna rna({.motifs = {"AAAAAAAAAAAAAA"}});
  std::string x = "AAAAAAAAAAAAAA";
  for (int d = 0; d <= 14; ++d) {
    const double expected = kRewardFloor + (1.0 - kRewardFloor) * std::exp(-0.15 * d);
    EXPECT_NEAR(rna.reward(rna.from_string(x + "$")), expected, 1e-15);
    if (d < 14) x[d] = 'C';
  }
}

TEST(Envs, RnaTaskMotifsAreDisjointAcrossTasks) {
  std::set<std::string> seen;
  for (int task = 1; task <= 3; ++task) {
    const auto motifs = rna_task_motifs(task, 4, 14);
    EXPECT_EQ(motifs.size(), 4u);
    for (const auto& m : motifs) EXPECT_TRUE(seen.insert(m).second) << m;
  }
  EXPECT_EQ(rna_task_motifs(2, 4, 14), rna_task_motifs(2, 4, 14));
}

TEST(Envs, FractalLandscapeMatchesReferenceTranscription) {
  const auto t = fractal_landscape_grid(65, 0.1, 0.5, 2.0);
  std::vector<std::pair<int, int>> peaks;
  double total = 0.0, lo = 1e9, hi = 0.0;
  for (int r = 0; r < 65; ++r) {
    for (int c = 0; c < 65; ++c) {
      const double v = t[r][c];
      total += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      if (v == 0.1 + 0.5 + 2.0) peaks.emplace_back(r, c);
      EXPECT_TRUE(v == 0.1 || v == 0.1 + 0.5 || v == 0.1 + 0.5 + 2.0) << r << "," << c;
    }
  }
  // Frozen from running the reference listing with numpy.
  const std::vector<std::pair<int, int>> expected = {{1, 1},   {33, 33}, {33, 62}, {49, 49}, {49, 62},
                                                     {57, 57}, {57, 62}, {62, 33}, {62, 49}, {62, 57}};
  EXPECT_EQ(peaks, expected);
  EXPECT_NEAR(total, 462.5, 1e-9);
  EXPECT_DOUBLE_EQ(lo, 0.1);
  EXPECT_DOUBLE_EQ(hi, 2.6);
}

TEST(Envs, FractalPeakCountsPerSide) {
  const std::vector<std::pair<int, int>> counts = {{9, 1}, {17, 4}, {33, 7}, {65, 10}, {129, 13}};
  for (auto [side, n] : counts) {
    const auto t = fractal_landscape_grid(side, 0.1, 0.5, 2.0);
    int peaks = 0;
    for (const auto& row : t) peaks += static_cast<int>(std::count(row.begin(), row.end(), 2.6));
    EXPECT_EQ(peaks, n) << side;
  }
}

TEST(Envs, FractalZeroAndInvalidSide) {
  for (const auto& row : fractal_landscape_grid(17, 0, 0, 0)) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
  EXPECT_THROW(fractal_landscape_grid(64, 0.1, 0.5, 2), EnvError);
  EXPECT_THROW(fractal_landscape_grid(5, 0.1, 0.5, 2), EnvError);
}

TEST(Envs, WordTilingExamples) {
  EXPECT_EQ(bitseq_max_word_tiling("11110000", kWords), 1);
  EXPECT_EQ(bitseq_max_word_tiling("10101010", kWords), 0);
}

TEST(Envs, WordTilingMatchesBruteForce) {
  std::mt19937_64 rng(7);
  // Biased toward runs so words actually occur.
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    while (s.size() < 32) {
      const char bit = (rng() & 1) ? '1' : '0';
      s.append(1 + rng() % 6, bit);
    }
    s.resize(32);
    ASSERT_EQ(bitseq_max_word_tiling(s, kWords), brute_tiling(s, 0)) << s;
  }
  for (int len = 0; len <= 16; ++len) {
    for (std::uint32_t bits = 0; bits < (1u << len); ++bits) {
      std::string s;
      for (int i = 0; i < len; ++i) s += ((bits >> i) & 1) ? '1' : '0';
      ASSERT_EQ(bitseq_max_word_tiling(s, kWords), brute_tiling(s, 0)) << s;
    }
  }
}

TEST(Envs, CycleRank) {
  EXPECT_EQ(graph_cycle_rank(graph_from_edges(5, {{1, 0}, {2, 1}, {3, 1}, {4, 3}})), 0);
  std::vector<std::pair<int, int>> k7;
  for (int a = 0; a < 7; ++a) {
    for (int b = 0; b < a; ++b) k7.emplace_back(a, b);
  }
  EXPECT_EQ(graph_cycle_rank(graph_from_edges(7, k7)), 15);
  EXPECT_EQ(graph_cycle_rank(graph_from_edges(6, {{1, 0}, {2, 1}, {2, 0}, {4, 3}, {5, 4}, {5, 3}})), 2);
  GraphBuild g({.max_nodes = 7});
  EXPECT_DOUBLE_EQ(g.reward(graph_from_edges(7, k7)), 1.0);
}

TEST(Envs, EnumerationCounts) {
  FractalGrid grid({.side = 9});
  EXPECT_EQ(grid.enumerate_terminal_states().size(), 81u);
  // EOS is allowed at every length, so short strings are terminal too.
  BitSequence bits({.length = 8});
  const auto all = bits.enumerate_terminal_states();
  EXPECT_EQ(all.size(), 511u);
  EXPECT_EQ(std::count_if(all.begin(), all.end(),
                          [](const TerminalState& t) { return std::get<SequenceState>(t.state).symbols.size() == 8; }),
            256);
  // By hand: one node; one edge; and on three nodes the paths via node 1 or
  // node 0 plus the triangle.
  GraphBuild g3({.max_nodes = 3});
  const auto graphs = g3.enumerate_terminal_states();
  std::set<std::string> names;
  for (const auto& t : graphs) names.insert(g3.to_string(t.state));
  EXPECT_EQ(names, (std::set<std::string>{"1:$", "2:0-1$", "3:0-1;0-2$", "3:0-1;0-2;1-2$", "3:0-1;1-2$"}));
  EXPECT_THROW(GraphBuild({.max_nodes = 8}).enumerate_terminal_states(), EnvError);
  EXPECT_THROW(SyntheticRna({.length = 14}).enumerate_terminal_states(), EnvError);
}

TEST(Envs, EnumerationSumsToPartitionFunction) {
  FractalGrid grid({.side = 65});
  double z = 0.0;
  for (const auto& t : grid.enumerate_terminal_states()) z += t.reward;
  EXPECT_NEAR(z, 462.5, 1e-9);
}

TEST(Envs, GraphEnumerationMatchesIndependentDfs) {
  // Independent DFS over the MDP that only uses valid/apply.
  for (int n : {3, 4, 5}) {
    GraphBuild g({.max_nodes = n});
    std::set<std::string> seen;
    std::function<void(const EnvState&)> dfs = [&](const EnvState& s) {
      if (g.is_terminal(s)) {
        seen.insert(g.to_string(s));
        return;
      }
      for (ActionId a : g.valid_atomic_actions(s)) dfs(g.apply_atomic(s, a));
    };
    dfs(g.initial_state());
    const auto listed = g.enumerate_terminal_states();
    std::set<std::string> names;
    for (const auto& t : listed) names.insert(g.to_string(t.state));
    EXPECT_EQ(names.size(), listed.size());
    EXPECT_EQ(names, seen) << n;
  }
}

TEST(Envs, PotentialStrictlyIncreases) {
  FractalGrid grid({.side = 17});
  BitSequence bits({.length = 16});
  GraphBuild graph({.max_nodes = 7});
  for (const Environment* env : std::vector<const Environment*>{&grid, &bits, &graph}) {
    random_walks(*env, 300, 1, [&](const EnvState& s, ActionId a, const EnvState& next) {
      if (!env->is_terminal_action(a)) {
        EXPECT_GT(env->potential(next), env->potential(s));
      }
    });
  }
}

TEST(Envs, GraphRulesNeverOfferRejectedActions) {
  GraphBuild g({.max_nodes = 8});
  random_walks(g, 2000, 2, [&](const EnvState& s, ActionId, const EnvState&) {
    for (ActionId a : g.valid_atomic_actions(s)) EXPECT_NO_THROW(g.apply_atomic(s, a));
    const auto& gs = std::get<GraphState>(s);
    for (auto [a, b] : gs.edge_list()) {
      EXPECT_NE(a, b);
      EXPECT_LT(a, gs.node_count);
    }
  });
}

TEST(Envs, SequenceForcesEosAtMaxLength) {
  BitSequence bits({.length = 8});
  const auto a = bits.valid_atomic_actions(bits.from_string("01010101"));
  EXPECT_EQ(a, std::vector<ActionId>{bits.terminal_action()});
  EXPECT_THROW(bits.apply_atomic(bits.from_string("01010101"), 0), EnvError);
  EXPECT_THROW(BitSequence({.length = 12}), EnvError);
}

TEST(Envs, TextRoundTrip) {
  GraphBuild g({.max_nodes = 6});
  SyntheticRna rna({});
  FractalGrid grid({.side = 17});
  for (const Environment* env : std::vector<const Environment*>{&g, &rna, &grid}) {
    random_walks(*env, 100, 3, [&](const EnvState& s, ActionId, const EnvState& next) {
      EXPECT_EQ(env->from_string(env->to_string(s)), s);
      EXPECT_EQ(env->from_string(env->to_string(next)), next);
    });
  }
}
