#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "chunkflow/envs/fractal_grid.hpp"
#include "chunkflow/envs/graph_build.hpp"
#include "chunkflow/envs/sequence_env.hpp"
#include "chunkflow/metrics.hpp"
#include "chunkflow/tokenizer.hpp"
#include "oracles.hpp"

using namespace chunkflow;

namespace {

const NetConfig kSmall{.hidden = 16, .embedding = 8};

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  for (auto& v : p) v = e(rng);
  const double z = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= z;
  return p;
}

std::vector<ActionId> random_string(std::mt19937_64& rng, std::size_t len, int alphabet) {
  std::vector<ActionId> s(len);
  for (auto& v : s) v = static_cast<ActionId>(rng() % static_cast<std::uint64_t>(alphabet));
  return s;
}

SequenceState bits_state(const std::string& bits) {
  SequenceState s;
  for (char c : bits) s.symbols.push_back(c == '1');
  s.terminated = true;
  return s;
}

SequenceState rna_state(const SyntheticRna& rna, const std::string& letters) {
  SequenceState s;
  s.symbols = rna.parse_symbols(letters);
  s.terminated = true;
  return s;
}

}  // namespace

TEST(Metrics, L1Examples) {
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0}, r{0.0, 1.0};
  EXPECT_DOUBLE_EQ(l1_distance(p, p), 0.0);
  EXPECT_DOUBLE_EQ(l1_distance(q, r), 2.0);
  EXPECT_DOUBLE_EQ(l1_distance(p, q), 1.0);
  EXPECT_THROW(l1_distance(p, std::vector<double>{1.0}), MetricError);
}

TEST(Metrics, JsdExamples) {
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0}, r{0.0, 1.0};
  EXPECT_NEAR(jsd(p, p), 0.0, 1e-15);
  EXPECT_NEAR(jsd(q, r), 1.0, 1e-15);
  // M = (0.75, 0.25): KL(q||M) = log2(4/3), KL(p||M) = 0.5 log2(2/3) + 0.5 log2(2).
  const double direct = 0.5 * std::log2(4.0 / 3.0) + 0.5 * (0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25));
  EXPECT_NEAR(jsd(q, p), direct, 1e-12);
  EXPECT_NEAR(direct, 0.3113, 1e-4);
  EXPECT_THROW(jsd(p, std::vector<double>{1.0}), MetricError);
}

TEST(Metrics, DistancesAreSymmetricAndBounded) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_simplex(rng, 2 + rng() % 10);
    const auto q = random_simplex(rng, p.size());
    EXPECT_NEAR(l1_distance(p, q), l1_distance(q, p), 1e-15);
    EXPECT_NEAR(jsd(p, q), jsd(q, p), 1e-12);
    EXPECT_LE(jsd(p, q), 1.0);
    EXPECT_GE(jsd(p, q), 0.0);
    EXPECT_LE(l1_distance(p, q), 2.0);
  }
}

TEST(Metrics, ModeTrackerCountsDistinctModes) {
  BitSequence bits({.length = 8});
  ModeTracker modes(bits);
  const auto mode = bits_state("00000000");
  EXPECT_TRUE(modes.observe(mode, bits.reward(mode)));
  EXPECT_FALSE(modes.observe(mode, bits.reward(mode)));
  const auto other = bits_state("01");
  EXPECT_FALSE(modes.observe(other, bits.reward(other)));
  EXPECT_EQ(modes.count(), 1u);

  FractalGrid grid({.side = 9});
  ModeTracker grid_modes(grid);
  std::size_t peaks = 0;
  for (const auto& t : grid.enumerate_terminal_states()) peaks += grid_modes.observe(t.state, t.reward);
  EXPECT_GT(peaks, 0u);
  EXPECT_EQ(grid_modes.count(), peaks);
}

TEST(Metrics, TargetDistributionNormalizes) {
  FractalGrid grid({.side = 9});
  const auto terms = grid.enumerate_terminal_states();
  for (double beta : {1.0, 3.0}) {
    const auto p = target_distribution(terms, beta);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    double z = 0.0;
    for (const auto& t : terms) z += std::pow(t.reward, beta);
    EXPECT_NEAR(exact_log_partition(terms, beta), std::log(z), 1e-10);
  }
}

TEST(Metrics, ExactTerminalDistributionSumsToOne) {
  std::mt19937_64 rng(2);
  FractalGrid grid({.side = 9});
  GraphBuild graphs({.max_nodes = 4});
  BitSequence bits({.length = 8});
  for (const Environment* env : std::vector<const Environment*>{&grid, &graphs, &bits}) {
    ActionLibrary lib(*env);
    PolicyNet policy(*env, kSmall, 3);
    for (int gen = 0; gen < 3; ++gen) {
      const auto terms = env->enumerate_terminal_states();
      const auto p = exact_terminal_distribution(policy, lib, terms);
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-8) << env->id() << " generation " << gen;
      for (double v : p) EXPECT_GE(v, 0.0);
      random_merge_step(lib, rng);
    }
  }
}

TEST(Metrics, UniqueParseEstimateIsExact) {
  SyntheticRna rna({.length = 4});
  ActionLibrary lib(rna);
  PolicyNet policy(rna, kSmall, 4);
  const auto terms = rna.enumerate_terminal_states();
  const auto exact = exact_terminal_distribution(policy, lib, terms);
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < terms.size(); i += 5) {
    for (std::size_t n : {1u, 7u}) {
      const double est = estimate_terminal_logprob(policy, lib, {.kind = BackwardKind::kMaxEnt}, terms[i].state, n, rng);
      EXPECT_NEAR(est, std::log(exact[i]), 1e-10);
    }
  }
}

TEST(Metrics, ImportanceEstimateConvergesToExactMarginal) {
  SyntheticRna rna({.length = 4});
  ActionLibrary lib(rna);
  lib.add_chunk(rna.parse_symbols("AC"));
  lib.add_chunk(rna.parse_symbols("CC"));
  PolicyNet policy(rna, kSmall, 6);
  const auto terms = rna.enumerate_terminal_states();
  const auto exact = exact_terminal_distribution(policy, lib, terms);
  std::mt19937_64 rng(7);
  for (const std::string x : {"ACAC", "ACCC", "CCAC"}) {
    const auto state = rna_state(rna, x);
    std::size_t idx = 0;
    while (!(terms[idx].state == EnvState{state})) ++idx;
    // Each estimate is unbiased for P_F(x) itself, so average on that scale.
    const int repeats = 16;
    double mean = 0.0;
    for (int r = 0; r < repeats; ++r) {
      mean += std::exp(estimate_terminal_logprob(policy, lib, {.kind = BackwardKind::kMaxEnt}, state, 10000, rng)) / repeats;
    }
    EXPECT_NEAR(mean / exact[idx], 1.0, 0.01) << x;
  }
}

TEST(Metrics, ElboEstimateRespectsJensen) {
  SyntheticRna rna({.length = 4});
  ActionLibrary lib(rna);
  lib.add_chunk(rna.parse_symbols("AA"));
  PolicyNet policy(rna, kSmall, 8);
  std::mt19937_64 rng(9);
  std::vector<double> estimates;
  double log_z = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto r = elbo_gap(policy, lib, {.kind = BackwardKind::kShortParse, .lambda = -1.0}, 1.0, 200, rng);
    estimates.push_back(r.estimate);
    log_z = r.log_z;
    EXPECT_NEAR(r.gap, std::abs(r.log_z - r.estimate), 1e-12);
  }
  const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / 50.0;
  double var = 0.0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  const double se = std::sqrt(var / 49.0 / 50.0);
  EXPECT_LT(mean, log_z + 3.0 * se);
}

TEST(Metrics, ElboNeedsEnumerableEnv) {
  GraphBuild graphs({.max_nodes = 8});
  ActionLibrary lib(graphs);
  PolicyNet policy(graphs, kSmall, 1);
  std::mt19937_64 rng(1);
  EXPECT_THROW(elbo_gap(policy, lib, {}, 1.0, 10, rng), EnvError);
}

TEST(Metrics, SpearmanExamples) {
  const std::vector<double> a{1, 2, 3}, rev{3, 2, 1}, swap{1, 3, 2};
  EXPECT_DOUBLE_EQ(spearman(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, rev), -1.0);
  EXPECT_NEAR(spearman(a, swap), 0.5, 1e-15);
  EXPECT_EQ(average_ranks(std::vector<double>{5, 1, 5, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Metrics, SpearmanThresholds) {
  const auto th = default_spearman_thresholds();
  ASSERT_EQ(th.size(), 10u);
  EXPECT_DOUBLE_EQ(th.front(), 0.0);
  EXPECT_NEAR(th.back(), 0.93, 1e-15);
  std::vector<LikelihoodSample> samples;
  for (int i = 0; i < 10; ++i) {
    const double r = 0.1 * i;
    samples.push_back({r, std::log(r + 0.01), std::log(r + 0.01) * 2.0});
  }
  const auto rho = spearman_reward_likelihood(samples, std::vector<double>{0.0, 0.5, 0.85});
  ASSERT_EQ(rho.size(), 3u);
  EXPECT_DOUBLE_EQ(*rho[0], 1.0);
  EXPECT_DOUBLE_EQ(*rho[1], 1.0);
  EXPECT_FALSE(rho[2].has_value());
}

TEST(Metrics, OccurrenceIsNonOverlapping) {
  const std::vector<ActionId> aaaa{0, 0, 0, 0};
  EXPECT_EQ(count_occurrences(aaaa, std::vector<ActionId>{0, 0}), 2u);
  EXPECT_EQ(count_occurrences(aaaa, std::vector<ActionId>{1, 0}), 0u);
}

TEST(Metrics, ChunkStatistics) {
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  for (std::vector<ActionId> e : {std::vector<ActionId>{0, 1}, {2, 3}, {0, 0}}) lib.add_chunk(e);
  const ActionId ac = lib.find(std::vector<ActionId>{0, 1});
  const ActionId gu = lib.find(std::vector<ActionId>{2, 3});
  const ActionId aa = lib.find(std::vector<ActionId>{0, 0});
  const std::vector<std::vector<ActionId>> objects{{0, 1, 2}, {2, 0, 1}, {1, 0, 1, 0, 1}};
  const auto stats = chunk_statistics(lib, objects);
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_EQ(stats[0].id, ac);
  EXPECT_DOUBLE_EQ(stats[0].occurrence_mean, 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(stats[0].occurrence_median, 1.0);
  EXPECT_DOUBLE_EQ(stats[0].coverage, 1.0);
  EXPECT_EQ(stats[1].id, gu);
  EXPECT_DOUBLE_EQ(stats[1].occurrence_mean, 0.0);
  EXPECT_DOUBLE_EQ(stats[1].coverage, 0.0);
  EXPECT_EQ(stats[2].id, aa);
  EXPECT_DOUBLE_EQ(stats[2].coverage, 0.0);
  EXPECT_THROW(chunk_statistics(lib, {}), MetricError);
}

TEST(Metrics, ShortestParseExamples) {
  const oracle::Tokens ab{{0}, {1}, {0, 1}};
  EXPECT_EQ(shortest_parse(std::vector<ActionId>{0, 1, 0, 1}, ab), 2u);
  EXPECT_EQ(oracle::min_parse({0, 1, 0, 1}, ab), 2u);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  const std::vector<std::vector<ActionId>> objects{{0, 1, 2}, {3, 3, 3, 3, 3}};
  EXPECT_DOUBLE_EQ(shortest_parse_length(lib, objects), 4.0);
  EXPECT_THROW(shortest_parse(std::vector<ActionId>{2}, ab), MetricError);
}

TEST(Metrics, ShortestParseMatchesExhaustiveSearch) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    oracle::Tokens tokens{{0}, {1}, {2}};
    const int extra = static_cast<int>(rng() % 6);
    for (int i = 0; i < extra; ++i) tokens.push_back(random_string(rng, 2 + rng() % 3, 3));
    const auto s = random_string(rng, 1 + rng() % 12, 3);
    EXPECT_EQ(shortest_parse(s, tokens), oracle::min_parse(s, tokens));
  }
}

TEST(Metrics, ShortestParseMonotoneUnderLibraryGrowth) {
  std::mt19937_64 rng(11);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  std::vector<std::vector<ActionId>> objects;
  for (int i = 0; i < 40; ++i) objects.push_back(random_string(rng, 14, 2));
  ActionCorpus corpus;
  for (const auto& o : objects) corpus.add(o, CorpusSource::kBuffer);
  std::vector<std::size_t> prev;
  for (const auto& o : objects) prev.push_back(shortest_parse(o, library_tokens(lib)));
  for (int round = 0; round < 8; ++round) {
    increment_step(lib, corpus);
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto now = shortest_parse(objects[i], library_tokens(lib));
      EXPECT_LE(now, prev[i]);
      prev[i] = now;
    }
  }
}

TEST(Metrics, BpeFloor) {
  const std::vector<std::vector<ActionId>> objects{{0, 1, 0, 1}, {0, 1}};
  EXPECT_DOUBLE_EQ(bpe_floor(4, objects, 0), 3.0);
  // Merges (0,1) then (01,01): parses of length 1 and 1.
  EXPECT_DOUBLE_EQ(bpe_floor(4, objects, 2), 1.0);
}

TEST(Metrics, TopKRewardDiversity) {
  BitSequence bits({.length = 8});
  std::vector<TerminalState> same(4, TerminalState{bits_state("0101"), 0.5});
  EXPECT_DOUBLE_EQ(topk_reward_diversity(bits, same, 3).diversity, 0.0);
  std::vector<TerminalState> two{{bits_state("000"), 1.0}, {bits_state("111"), 0.5}};
  const auto r = topk_reward_diversity(bits, two, 2);
  EXPECT_DOUBLE_EQ(r.diversity, 3.0);
  EXPECT_DOUBLE_EQ(r.mean_reward, 0.75);
  std::vector<TerminalState> three{{bits_state("000"), 0.2}, {bits_state("111"), 0.9}, {bits_state("011"), 0.9}};
  const auto top = topk_reward_diversity(bits, three, 2);
  EXPECT_DOUBLE_EQ(top.mean_reward, 0.9);
  EXPECT_DOUBLE_EQ(top.diversity, 1.0);
  EXPECT_THROW(topk_reward_diversity(bits, two, 3), MetricError);
}
