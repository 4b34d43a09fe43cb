#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "chunkflow/backward_policy.hpp"
#include "chunkflow/envs/fractal_grid.hpp"
#include "chunkflow/envs/graph_build.hpp"
#include "chunkflow/envs/sequence_env.hpp"
#include "chunkflow/tokenizer.hpp"

using namespace chunkflow;

namespace {

// Alphabet {a, b} realised as bits 0/1.
struct AbEnv {
  BitSequence env{{.length = 16}};
  ActionLibrary lib{env};
  std::vector<ActionId> str(const std::string& s) const {
    std::vector<ActionId> out;
    for (char ch : s) out.push_back(ch == 'a' ? 0 : 1);
    return out;
  }
};

// Forward trajectory following the given token split, with EOS appended.
Trajectory trajectory_from_tokens(const Environment& env, const ActionLibrary& lib,
                                  const std::vector<std::vector<ActionId>>& tokens) {
  Trajectory t;
  EnvState s = env.initial_state();
  for (const auto& tok : tokens) {
    const ActionId id = tok.size() == 1 ? tok[0] : lib.find(tok);
    t.steps.push_back({s, id});
    s = lib.apply_action(env, s, id);
  }
  t.steps.push_back({s, env.terminal_action()});
  t.terminal = env.apply_atomic(s, env.terminal_action());
  t.reward = env.reward(t.terminal);
  t.generation = lib.generation();
  return t;
}

std::string parse_key(const Trajectory& t) {
  std::string key;
  for (ActionId a : t.actions()) key += std::to_string(a) + ",";
  return key;
}

Trajectory random_forward(const Environment& env, const ActionLibrary& lib, std::mt19937_64& rng) {
  Trajectory t;
  EnvState s = env.initial_state();
  while (!env.is_terminal(s)) {
    const auto mask = lib.valid_actions(env, s);
    std::vector<std::size_t> valid, moves;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      valid.push_back(i);
      if (!lib.at(i).is_terminal) moves.push_back(i);
    }
    // Stop rarely so that parses are long and varied.
    const bool stop = moves.empty() || rng() % 8 == 0;
    const auto& pool = stop ? valid : moves;
    const ActionId id = lib.at(pool[rng() % pool.size()]).id;
    t.steps.push_back({s, id});
    s = lib.apply_action(env, s, id);
  }
  t.terminal = s;
  t.reward = env.reward(s);
  t.generation = lib.generation();
  return t;
}

}  // namespace

TEST(BackwardPolicy, CountTableExamples) {
  AbEnv ab;
  ab.lib.add_chunk(ab.str("aa"));
  const auto t = n_lambda_table(ab.str("aa"), ab.lib, 0.0);
  ASSERT_EQ(t.log_n.size(), 3u);
  EXPECT_NEAR(std::exp(t.log_n[0]), 1.0, 1e-12);
  EXPECT_NEAR(std::exp(t.log_n[1]), 1.0, 1e-12);
  EXPECT_NEAR(std::exp(t.log_n[2]), 2.0, 1e-12);

  AbEnv plain;
  for (double v : n_lambda_table(plain.str("abbabaab"), plain.lib, 0.0).log_n) EXPECT_NEAR(v, 0.0, 1e-12);

  AbEnv abab;
  abab.lib.add_chunk(abab.str("ab"));
  EXPECT_NEAR(std::exp(n_lambda_table(abab.str("abab"), abab.lib, 0.0).log_n.back()), 4.0, 1e-12);
}

TEST(BackwardPolicy, StepProbabilities) {
  AbEnv ab;
  ab.lib.add_chunk(ab.str("aa"));
  const auto s = ab.str("aa");
  const auto t0 = n_lambda_table(s, ab.lib, 0.0);
  EXPECT_NEAR(std::exp(shortparse_step_logprob(s, ab.str("a"), t0)), 0.5, 1e-12);
  EXPECT_NEAR(std::exp(shortparse_step_logprob(s, ab.str("aa"), t0)), 0.5, 1e-12);
  const auto t5 = n_lambda_table(s, ab.lib, -5.0);
  const double expected = std::exp(-5.0) / (std::exp(-10.0) + std::exp(-5.0));
  EXPECT_NEAR(std::exp(shortparse_step_logprob(s, ab.str("aa"), t5)), expected, 1e-12);
  EXPECT_NEAR(expected, 0.9933, 1e-4);
  EXPECT_THROW(shortparse_step_logprob(s, ab.str("b"), t0), std::invalid_argument);

  AbEnv plain;
  const auto tp = n_lambda_table(plain.str("abba"), plain.lib, -5.0);
  EXPECT_NEAR(shortparse_step_logprob(plain.str("abba"), plain.str("a"), tp), 0.0, 1e-12);
}

TEST(BackwardPolicy, StepProbabilitiesSumToOne) {
  std::mt19937_64 rng(6);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  for (int i = 0; i < 15; ++i) random_merge_step(lib, rng);
  for (double lambda : {0.0, -1.0, -5.0}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<ActionId> s(1 + rng() % 14);
      for (auto& v : s) v = static_cast<ActionId>(rng() % 4);
      const auto table = n_lambda_table(s, lib, lambda);
      double total = 0.0;
      for (ActionId id : suffix_tokens(lib, s, s.size())) {
        total += std::exp(shortparse_step_logprob(s, lib.expand(id), table));
      }
      EXPECT_NEAR(total, 1.0, 1e-10);
    }
  }
}

TEST(BackwardPolicy, IncrementalTableMatchesRecompute) {
  std::mt19937_64 rng(7);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  for (int i = 0; i < 10; ++i) random_merge_step(lib, rng);
  std::vector<ActionId> s(14);
  for (auto& v : s) v = static_cast<ActionId>(rng() % 4);
  auto table = n_lambda_table(std::span<const ActionId>(s).first(5), lib, -5.0);
  extend_table(table, s, lib);
  const auto fresh = n_lambda_table(s, lib, -5.0);
  ASSERT_EQ(table.log_n.size(), fresh.log_n.size());
  for (std::size_t i = 0; i < fresh.log_n.size(); ++i) EXPECT_EQ(table.log_n[i], fresh.log_n[i]);
}

TEST(BackwardPolicy, MaxEntIsUniformOverParses) {
  AbEnv ab;
  ab.lib.add_chunk(ab.str("ab"));
  const auto ab_tok = ab.str("ab"), a = ab.str("a"), b = ab.str("b");
  const std::vector<std::vector<std::vector<ActionId>>> parses = {
      {a, b, a, b}, {ab_tok, a, b}, {a, b, ab_tok}, {ab_tok, ab_tok}};
  const BackwardPolicy maxent{BackwardKind::kMaxEnt};
  for (const auto& p : parses) {
    const auto tau = trajectory_from_tokens(ab.env, ab.lib, p);
    EXPECT_NEAR(backward_traj_logprob(ab.env, ab.lib, tau, maxent), std::log(0.25), 1e-12);
  }
}

TEST(BackwardPolicy, StepwiseEqualsTrajectoryFormula) {
  std::mt19937_64 rng(9);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  for (int i = 0; i < 12; ++i) random_merge_step(lib, rng);
  for (const BackwardPolicy policy : {BackwardPolicy{BackwardKind::kMaxEnt}, BackwardPolicy{BackwardKind::kShortParse, -5.0},
                                      BackwardPolicy{BackwardKind::kShortParse, -0.7}}) {
    for (int i = 0; i < 200; ++i) {
      const auto tau = random_forward(rna, lib, rng);
      EXPECT_NEAR(backward_traj_logprob(rna, lib, tau, policy), backward_traj_logprob_stepwise(rna, lib, tau, policy),
                  1e-10);
    }
  }
}

TEST(BackwardPolicy, UniformParentOnSmallGrid) {
  // Atomic 9x9 grid: (x, y) has one parent via RIGHT if x > 0 and one via UP
  // if y > 0; the terminal copy has exactly one (via EXIT).
  FractalGrid grid({.side = 9});
  ActionLibrary lib(grid);
  const BackwardPolicy uniform{BackwardKind::kUniformParent};
  EXPECT_EQ(parent_edges(grid, lib, GridState{2, 2, false}).size(), 2u);
  EXPECT_EQ(parent_edges(grid, lib, GridState{0, 2, false}).size(), 1u);
  EXPECT_EQ(parent_edges(grid, lib, GridState{2, 2, true}).size(), 1u);
  EXPECT_TRUE(parent_edges(grid, lib, GridState{0, 0, false}).empty());
  Trajectory t;
  EnvState s = GridState{};
  for (ActionId a : {FractalGrid::kUp, FractalGrid::kRight, FractalGrid::kUp, FractalGrid::kExit}) {
    t.steps.push_back({s, a});
    s = grid.apply_atomic(s, a);
  }
  t.terminal = s;
  t.reward = grid.reward(s);
  // Parents: (1,2)->2, (1,1)->2, (0,1)->1, (0,0) reached. Exit step -> 1.
  EXPECT_NEAR(backward_traj_logprob(grid, lib, t, uniform), -2.0 * std::log(2.0), 1e-12);

  // With chunk UP,UP the state (0,2) gains a second incoming edge.
  lib.add_chunk({FractalGrid::kUp, FractalGrid::kUp});
  EXPECT_EQ(parent_edges(grid, lib, GridState{0, 2, false}).size(), 2u);
}

TEST(BackwardPolicy, UniformParentSamplesFollowEdgeProbabilities) {
  std::mt19937_64 rng(10);
  GraphBuild g({.max_nodes = 5});
  ActionLibrary lib(g);
  for (int i = 0; i < 8; ++i) random_merge_step(lib, rng);
  const BackwardPolicy uniform{BackwardKind::kUniformParent};
  for (int trial = 0; trial < 50; ++trial) {
    const auto tau = random_forward(g, lib, rng);
    const auto again = sample_backward_trajectory(g, lib, tau.terminal, uniform, rng);
    EXPECT_EQ(again.terminal, tau.terminal);
    EXPECT_NEAR(backward_traj_logprob(g, lib, again, uniform), backward_traj_logprob_stepwise(g, lib, again, uniform),
                1e-10);
    // Every backward step in the trajectory leaves a valid forward edge.
    EnvState s = g.initial_state();
    for (const auto& step : again.steps) {
      ASSERT_EQ(step.state, s);
      s = lib.apply_action(g, s, step.action);
    }
  }
}

TEST(BackwardPolicy, AtomicLibraryHasUniqueParse) {
  std::mt19937_64 rng(11);
  AbEnv ab;
  const auto x = ab.env.from_string("0110$");
  const auto t = sample_backward_trajectory(ab.env, ab.lib, x, {BackwardKind::kShortParse, -5.0}, rng);
  EXPECT_EQ(parse_key(t), "0,1,1,0,2,");
  EXPECT_NEAR(backward_traj_logprob(ab.env, ab.lib, t, {BackwardKind::kShortParse, -5.0}), 0.0, 1e-12);
}

TEST(BackwardPolicy, MaxEntSampleFrequencies) {
  std::mt19937_64 rng(12);
  AbEnv ab;
  ab.lib.add_chunk(ab.str("ab"));
  const auto x = ab.env.from_string("0101$");
  std::map<std::string, int> freq;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++freq[parse_key(sample_backward_trajectory(ab.env, ab.lib, x, {BackwardKind::kMaxEnt}, rng))];
  EXPECT_EQ(freq.size(), 4u);
  for (const auto& [k, c] : freq) EXPECT_NEAR(static_cast<double>(c) / n, 0.25, 0.01) << k;
}

TEST(BackwardPolicy, StrongLambdaPicksShortestParse) {
  std::mt19937_64 rng(13);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  const auto sym = [&](const char* s) { return rna.parse_symbols(s); };
  for (const char* c : {"AC", "ACG", "GU", "CGU", "ACGU"}) lib.add_chunk(sym(c));
  const auto x = rna.from_string("ACGUACGUAC$");
  // Minimum parse: ACGU ACGU AC -> 3 tokens (+ EOS).
  int shortest = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto t = sample_backward_trajectory(rna, lib, x, {BackwardKind::kShortParse, -50.0}, rng);
    shortest += t.length() == 4;
  }
  EXPECT_GT(static_cast<double>(shortest) / n, 0.999);
}

TEST(BackwardPolicy, KindNames) {
  EXPECT_EQ(parse_backward_kind("shortparse"), BackwardKind::kShortParse);
  EXPECT_EQ(backward_kind_name(BackwardKind::kMaxEnt), "maxent");
  EXPECT_THROW(parse_backward_kind("bogus"), std::invalid_argument);
}
