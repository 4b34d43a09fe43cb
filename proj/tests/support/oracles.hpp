#pragma once

// Independent reference implementations used as test oracles. They favour
// literal transcription and exhaustive search over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "chunkflow/envs/env.hpp"
#include "chunkflow/replay.hpp"

namespace oracle {

using chunkflow::ActionId;
using Tokens = std::vector<std::vector<ActionId>>;

// Every tokenization of s as a list of token lengths.
inline void tokenizations(const std::vector<ActionId>& s, const Tokens& tokens, std::size_t from,
                          std::vector<std::size_t>& current,
                          const std::function<void(const std::vector<std::size_t>&)>& visit) {
  if (from == s.size()) {
    visit(current);
    return;
  }
  for (const auto& t : tokens) {
    if (t.empty() || from + t.size() > s.size()) continue;
    if (!std::equal(t.begin(), t.end(), s.begin() + static_cast<std::ptrdiff_t>(from))) continue;
    current.push_back(t.size());
    tokenizations(s, tokens, from + t.size(), current, visit);
    current.pop_back();
  }
}

// Sum over tokenizations of exp(lambda * token count).
inline double weighted_parse_count(const std::vector<ActionId>& s, const Tokens& tokens, double lambda) {
  double total = 0.0;
  std::vector<std::size_t> cur;
  tokenizations(s, tokens, 0, cur, [&](const std::vector<std::size_t>& parse) {
    total += std::exp(lambda * static_cast<double>(parse.size()));
  });
  return total;
}

inline std::size_t min_parse(const std::vector<ActionId>& s, const Tokens& tokens) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> cur;
  tokenizations(s, tokens, 0, cur, [&](const std::vector<std::size_t>& parse) { best = std::min(best, parse.size()); });
  return best;
}

// Maximum number of disjoint word placements in s.
inline int disjoint_placements(const std::string& s, const std::vector<std::string>& words, std::size_t from = 0) {
  if (from >= s.size()) return 0;
  int best = disjoint_placements(s, words, from + 1);
  for (const auto& w : words) {
    if (s.compare(from, w.size(), w) == 0) best = std::max(best, 1 + disjoint_placements(s, words, from + w.size()));
  }
  return best;
}

// Most frequent adjacent token pair. Ties go to the lexicographically smallest
// concatenation, then to the smallest left token.
inline std::pair<std::vector<ActionId>, std::vector<ActionId>> argmax_pair(const std::vector<Tokens>& corpus,
                                                                          const Tokens& exclude_joined = {}) {
  std::map<std::pair<std::vector<ActionId>, std::vector<ActionId>>, long> counts;
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
  }
  using Key = std::tuple<long, std::vector<ActionId>, std::vector<ActionId>>;  // (-count, joined, left)
  std::optional<Key> best_key;
  std::pair<std::vector<ActionId>, std::vector<ActionId>> best;
  for (const auto& [pair, count] : counts) {
    auto joined = pair.first;
    joined.insert(joined.end(), pair.second.begin(), pair.second.end());
    if (std::find(exclude_joined.begin(), exclude_joined.end(), joined) != exclude_joined.end()) continue;
    Key key{-count, joined, pair.first};
    if (!best_key || key < *best_key) {
      best_key = key;
      best = pair;
    }
  }
  return best;
}

// Plain BPE on atomic sequences: repeatedly merge the most frequent adjacent
// token pair everywhere, left to right. Returns the merged tokens in order.
inline Tokens reference_bpe(const std::vector<std::vector<ActionId>>& sequences, int rounds) {
  std::vector<Tokens> corpus;
  for (const auto& s : sequences) {
    Tokens toks;
    for (ActionId a : s) toks.push_back({a});
    corpus.push_back(toks);
  }
  Tokens merges;
  for (int r = 0; r < rounds; ++r) {
    const auto best = argmax_pair(corpus);
    if (best.first.empty()) break;
    auto joined = best.first;
    joined.insert(joined.end(), best.second.begin(), best.second.end());
    for (auto& seq : corpus) {
      Tokens next;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
          next.push_back(joined);
          ++i;
        } else {
          next.push_back(seq[i]);
        }
      }
      seq = std::move(next);
    }
    merges.push_back(joined);
  }
  return merges;
}

// Buffer insertion transcribed step by step from the algorithm listing.
struct ReferenceBuffer {
  const chunkflow::Environment* env;
  std::size_t capacity;
  std::size_t cutoff;
  std::vector<chunkflow::BufferEntry> d;

  void sort_d() {
    std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.reward > b.reward; });
  }

  void add(std::vector<chunkflow::BufferEntry> b) {
    if (d.size() < capacity) {
      d.insert(d.end(), b.begin(), b.end());
      sort_d();
      if (d.size() > capacity) d.resize(capacity);
      return;
    }
    double min_r = d.front().reward;
    for (const auto& e : d) min_r = std::min(min_r, e.reward);
    std::vector<chunkflow::BufferEntry> kept;
    for (const auto& e : b) {
      if (e.reward >= min_r) kept.push_back(e);
    }
    for (const auto& e : kept) {
      std::vector<std::size_t> dists;
      for (const auto& x : d) dists.push_back(env->distance(e.state, x.state));
      const auto nn = static_cast<std::size_t>(std::min_element(dists.begin(), dists.end()) - dists.begin());
      if (dists[nn] > cutoff) {
        d.push_back(e);
      } else if (e.reward > d[nn].reward) {
        d[nn] = e;
      }
    }
    sort_d();
    if (d.size() > capacity) d.resize(capacity);
  }
};

}  // namespace oracle
