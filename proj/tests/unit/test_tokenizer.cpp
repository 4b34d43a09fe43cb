#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "chunkflow/envs/sequence_env.hpp"
#include "chunkflow/tokenizer.hpp"

using namespace chunkflow;

namespace {

ActionCorpus corpus_of(std::vector<std::vector<ActionId>> seqs) {
  ActionCorpus c;
  for (auto& s : seqs) c.add(std::move(s), CorpusSource::kPolicy);
  return c;
}

std::size_t token_count(const std::vector<std::vector<ActionId>>& corpus,
                        const std::vector<std::vector<ActionId>>& merges) {
  // Greedy re-application of the merges in order yields the BPE segmentation.
  std::size_t total = 0;
  for (const auto& seq : corpus) {
    std::vector<std::vector<ActionId>> toks;
    for (ActionId a : seq) toks.push_back({a});
    for (const auto& m : merges) {
      std::vector<std::vector<ActionId>> next;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i + 1 < toks.size()) {
          auto joined = toks[i];
          joined.insert(joined.end(), toks[i + 1].begin(), toks[i + 1].end());
          if (joined == m) {
            next.push_back(joined);
            ++i;
            continue;
          }
        }
        next.push_back(toks[i]);
      }
      toks = std::move(next);
    }
    total += toks.size();
  }
  return total;
}

bool contains_run(const std::vector<std::vector<ActionId>>& corpus, const std::vector<ActionId>& run) {
  for (const auto& seq : corpus) {
    if (std::search(seq.begin(), seq.end(), run.begin(), run.end()) != seq.end()) return true;
  }
  return false;
}

}  // namespace

TEST(Tokenizer, CorpusComposition) {
  BitSequence bits({.length = 8});
  ActionLibrary lib(bits);
  int rollouts = 0, parses = 0;
  SequenceSampler roll = [&] { ++rollouts; return std::vector<ActionId>{0, 1, bits.terminal_action()}; };
  SequenceSampler parse = [&] { ++parses; return std::vector<ActionId>{1, 1}; };
  auto c = build_corpus(lib, roll, parse, false, 100, 0.55);
  EXPECT_EQ(parses, 55);
  EXPECT_EQ(rollouts, 45);
  EXPECT_EQ(std::count(c.sources.begin(), c.sources.end(), CorpusSource::kBuffer), 55);
  for (const auto& seq : c.sequences) {
    EXPECT_EQ(std::count(seq.begin(), seq.end(), bits.terminal_action()), 0);
  }
  rollouts = parses = 0;
  build_corpus(lib, roll, parse, false, 40, 0.0);
  EXPECT_EQ(rollouts, 40);
  rollouts = parses = 0;
  build_corpus(lib, roll, parse, false, 40, 1.0);
  EXPECT_EQ(parses, 40);
  rollouts = parses = 0;
  build_corpus(lib, roll, parse, true, 40, 0.55);
  EXPECT_EQ(rollouts, 40);
  EXPECT_THROW(build_corpus(lib, roll, parse, false, 0, 0.5), std::invalid_argument);
}

TEST(Tokenizer, PairFrequencies) {
  const ActionId a = 0, b = 1;
  const auto counts = pair_frequencies(corpus_of({{a, b, a, b}}));
  EXPECT_EQ(counts, (PairCounts{{{a, b}, 2}, {{b, a}, 1}}));
  EXPECT_TRUE(pair_frequencies(ActionCorpus{}).empty());
  EXPECT_TRUE(pair_frequencies(corpus_of({{a}, {b}})).empty());
}

TEST(Tokenizer, IncrementAddsMostFrequentPair) {
  BitSequence bits({.length = 8});
  ActionLibrary lib(bits);
  const auto added = increment_step(lib, corpus_of({{0, 1, 0, 1}, {0, 1}}));
  ASSERT_TRUE(added);
  EXPECT_EQ(std::vector<ActionId>(lib.expand(*added).begin(), lib.expand(*added).end()), (std::vector<ActionId>{0, 1}));
}

TEST(Tokenizer, IncrementSkipsDuplicates) {
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  lib.add_chunk({0, 1});
  // (0,1) x3, (1,2) x2, (2,0) x1: the best novel pair is (1,2).
  const auto corpus = corpus_of({{0, 1, 2}, {0, 1, 2}, {2, 0, 1}});
  const auto ranked = ranked_merges(lib, pair_frequencies(corpus));
  ASSERT_GE(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].expansion, (std::vector<ActionId>{0, 1}));
  const auto added = increment_step(lib, corpus);
  ASSERT_TRUE(added);
  EXPECT_EQ(lib.action(*added).expansion, (std::vector<ActionId>{1, 2}));
  const auto before = lib.size();
  EXPECT_FALSE(increment_step(lib, corpus_of({{0}, {1}, {2}})));
  EXPECT_EQ(lib.size(), before);
}

TEST(Tokenizer, TiesBreakLexicographically) {
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  const auto added = increment_step(lib, corpus_of({{2, 3}, {0, 3}, {1, 0}}));
  ASSERT_TRUE(added);
  EXPECT_EQ(lib.action(*added).expansion, (std::vector<ActionId>{0, 3}));
}

TEST(Tokenizer, ReplaceRunsBpe) {
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  const ActionId a = 0, b = 1;
  replace_step(lib, corpus_of({{a, b, a, b, a, b}}), 2);
  ASSERT_EQ(lib.chunk_count(), 2u);
  EXPECT_EQ(lib.at(lib.atomic_count()).expansion, (std::vector<ActionId>{a, b}));
  EXPECT_EQ(lib.at(lib.atomic_count() + 1).expansion, (std::vector<ActionId>{a, b, a, b}));

  ActionLibrary small(rna);
  replace_step(small, corpus_of({{a, b}}), 25);
  EXPECT_EQ(small.chunk_count(), 1u);
}

TEST(Tokenizer, ReplaceIsDeterministicAndKeepsAtomics) {
  std::mt19937_64 rng(3);
  std::vector<std::vector<ActionId>> seqs(50);
  for (auto& s : seqs) {
    s.resize(14);
    for (auto& v : s) v = static_cast<ActionId>(rng() % 3);
  }
  SyntheticRna rna({});
  ActionLibrary one(rna), two(rna);
  replace_step(one, corpus_of(seqs), 25);
  replace_step(two, corpus_of(seqs), 25);
  EXPECT_TRUE(one == two);
  for (std::size_t i = 0; i < rna.atomic_count(); ++i) EXPECT_EQ(one.at(i).expansion, std::vector<ActionId>{static_cast<ActionId>(i)});
}

TEST(Tokenizer, BpeMergesAreCorpusSubstringsAndShrinkTokenCount) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<ActionId>> corpus(30);
    for (auto& s : corpus) {
      s.resize(5 + rng() % 10);
      for (auto& v : s) v = static_cast<ActionId>(rng() % 4);
    }
    const auto merges = bpe_merges(corpus, 15);
    std::size_t prev = token_count(corpus, {});
    for (std::size_t k = 0; k < merges.size(); ++k) {
      EXPECT_TRUE(contains_run(corpus, merges[k]));
      const std::size_t now = token_count(corpus, {merges.begin(), merges.begin() + k + 1});
      EXPECT_LT(now, prev);
      prev = now;
    }
  }
}

TEST(Tokenizer, IncrementChunksAppearInCorpus) {
  std::mt19937_64 rng(4);
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  for (int round = 0; round < 10; ++round) {
    ActionCorpus corpus;
    for (int i = 0; i < 20; ++i) {
      std::vector<ActionId> s;
      for (int j = 0; j < 6; ++j) s.push_back(lib.at(rng() % lib.size()).id);
      s.erase(std::remove(s.begin(), s.end(), rna.terminal_action()), s.end());
      corpus.add(s, CorpusSource::kPolicy);
    }
    const auto before = lib.size();
    const auto added = increment_step(lib, corpus);
    EXPECT_LE(lib.size(), before + 1);
    if (added) {
      EXPECT_TRUE(contains_run(flatten_corpus(lib, corpus), lib.action(*added).expansion));
    }
  }
}

TEST(Tokenizer, RandomMerge) {
  BitSequence bits({.length = 16});
  ActionLibrary a(bits), b(bits);
  std::mt19937_64 r1(5), r2(5);
  const auto x = random_merge_step(a, r1);
  const auto y = random_merge_step(b, r2);
  ASSERT_TRUE(x && y);
  EXPECT_EQ(a.action(*x).expansion, b.action(*y).expansion);
  EXPECT_EQ(a.action(*x).expansion.size(), 2u);
  std::size_t longest = 0;
  for (int i = 0; i < 100; ++i) {
    if (auto id = random_merge_step(a, r1)) longest = std::max(longest, a.action(*id).expansion.size());
  }
  EXPECT_GT(longest, 2u);
}

TEST(Tokenizer, Triggers) {
  auto every = ChunkTrigger::every_k(1000);
  EXPECT_TRUE(every.should_chunk(2000, 0.0));
  auto every1250 = ChunkTrigger::every_k(1250);
  EXPECT_FALSE(every1250.should_chunk(1251, 0.0));
  auto loss = ChunkTrigger::loss_threshold(1.0, 0.75);
  EXPECT_FALSE(loss.should_chunk(1, 1.2));
  EXPECT_TRUE(loss.should_chunk(2, 0.9));
  EXPECT_DOUBLE_EQ(loss.threshold(), 0.75);
  EXPECT_FALSE(loss.should_chunk(3, 0.8));
  EXPECT_FALSE(ChunkTrigger::never().should_chunk(1000, 0.0));
}

TEST(Tokenizer, CorpusDumpUsesActionNames) {
  SyntheticRna rna({});
  ActionLibrary lib(rna);
  lib.add_chunk({0, 1});
  std::ostringstream out;
  write_corpus(out, lib, corpus_of({{0, lib.find(std::vector<ActionId>{0, 1})}}));
  EXPECT_EQ(out.str(), "A AC\n");
}
