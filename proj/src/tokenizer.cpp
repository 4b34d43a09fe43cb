#include "chunkflow/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chunkflow {

void ActionCorpus::add(std::vector<ActionId> seq, CorpusSource source) {
  sequences.push_back(std::move(seq));
  sources.push_back(source);
}

ActionCorpus build_corpus(const ActionLibrary& library, const SequenceSampler& rollout,
                          const SequenceSampler& buffer_parse, bool buffer_empty, int n, double p) {
  if (n <= 0) throw std::invalid_argument("corpus size must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("corpus buffer fraction must lie in [0, 1]");
  const int from_buffer = buffer_empty ? 0 : static_cast<int>(std::floor(p * n));
  auto strip = [&](std::vector<ActionId> seq) {
    std::erase_if(seq, [&](ActionId a) { return library.action(a).is_terminal; });
    return seq;
  };
  ActionCorpus corpus;
  for (int i = 0; i < from_buffer; ++i) corpus.add(strip(buffer_parse()), CorpusSource::kBuffer);
  for (int i = from_buffer; i < n; ++i) corpus.add(strip(rollout()), CorpusSource::kPolicy);
  return corpus;
}

PairCounts pair_frequencies(const ActionCorpus& corpus) {
  PairCounts counts;
  for (const auto& seq : corpus.sequences)
    for (std::size_t i = 1; i < seq.size(); ++i) ++counts[{seq[i - 1], seq[i]}];
  return counts;
}

std::vector<MergeCandidate> ranked_merges(const ActionLibrary& library, const PairCounts& counts) {
  std::vector<MergeCandidate> out;
  out.reserve(counts.size());
  for (const auto& [pair, count] : counts) {
    const Action& a = library.action(pair.first);
    const Action& b = library.action(pair.second);
    if (a.is_terminal || b.is_terminal) continue;
    std::vector<ActionId> e = a.expansion;
    e.insert(e.end(), b.expansion.begin(), b.expansion.end());
    out.push_back({pair, count, std::move(e)});
  }
  std::sort(out.begin(), out.end(), [](const MergeCandidate& x, const MergeCandidate& y) {
    if (x.count != y.count) return x.count > y.count;
    return x.expansion < y.expansion;
  });
  return out;
}

std::optional<ActionId> increment_step(ActionLibrary& library, const ActionCorpus& corpus, std::int64_t iteration) {
  for (auto& cand : ranked_merges(library, pair_frequencies(corpus))) {
    if (library.add_chunk(cand.expansion, iteration) == ActionLibrary::AddResult::kAdded) {
      return library.actions().back().id;
    }
  }
  return std::nullopt;
}

std::vector<std::vector<ActionId>> flatten_corpus(const ActionLibrary& library, const ActionCorpus& corpus) {
  std::vector<std::vector<ActionId>> out;
  out.reserve(corpus.size());
  for (const auto& seq : corpus.sequences) {
    std::vector<ActionId> flat;
    for (ActionId a : seq) {
      const Action& act = library.action(a);
      if (act.is_terminal) continue;
      flat.insert(flat.end(), act.expansion.begin(), act.expansion.end());
    }
    out.push_back(std::move(flat));
  }
  return out;
}

std::vector<std::vector<ActionId>> bpe_merges(const std::vector<std::vector<ActionId>>& atomic_corpus, int rounds) {
  using Token = std::vector<ActionId>;
  // Tokens are interned so sequences hold small integers.
  std::vector<Token> vocab;
  std::map<Token, int> intern;
  auto id_of = [&](const Token& t) {
    auto [it, inserted] = intern.emplace(t, static_cast<int>(vocab.size()));
    if (inserted) vocab.push_back(t);
    return it->second;
  };
  std::vector<std::vector<int>> seqs;
  for (const auto& s : atomic_corpus) {
    std::vector<int> row;
    for (ActionId a : s) row.push_back(id_of({a}));
    seqs.push_back(std::move(row));
  }

  std::vector<Token> merges;
  for (int r = 0; r < rounds; ++r) {
    std::map<std::pair<int, int>, std::int64_t> counts;
    for (const auto& s : seqs)
      for (std::size_t i = 1; i < s.size(); ++i) ++counts[{s[i - 1], s[i]}];
    if (counts.empty()) break;
    const std::pair<int, int>* best = nullptr;
    std::int64_t best_count = 0;
    Token best_token;
    for (const auto& [pair, count] : counts) {
      Token t = vocab[pair.first];
      t.insert(t.end(), vocab[pair.second].begin(), vocab[pair.second].end());
      // Ties go to the smaller merged token, then to the smaller left token.
      const bool better = best == nullptr || count > best_count ||
                          (count == best_count && (t < best_token || (t == best_token && vocab[pair.first] < vocab[best->first])));
      if (better) {
        best = &pair;
        best_count = count;
        best_token = std::move(t);
      }
    }
    const auto [left, right] = *best;
    const int merged = id_of(best_token);
    for (auto& s : seqs) {
      std::vector<int> next;
      next.reserve(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(s[i]);
        }
      }
      s = std::move(next);
    }
    merges.push_back(std::move(best_token));
  }
  return merges;
}

void replace_step(ActionLibrary& library, const ActionCorpus& corpus, int merges, std::int64_t iteration) {
  if (merges < 1) throw std::invalid_argument("replace needs at least one merge");
  library.replace_chunks(bpe_merges(flatten_corpus(library, corpus), merges), iteration);
}

std::optional<ActionId> random_merge_step(ActionLibrary& library, std::mt19937_64& rng, std::int64_t iteration) {
  std::vector<ActionId> pool;
  for (const auto& a : library.actions())
    if (!a.is_terminal) pool.push_back(a.id);
  if (pool.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const ActionId first = pool[pick(rng)];
  const ActionId second = pool[pick(rng)];
  std::vector<ActionId> e(library.expand(first).begin(), library.expand(first).end());
  const auto tail = library.expand(second);
  e.insert(e.end(), tail.begin(), tail.end());
  if (library.add_chunk(std::move(e), iteration) == ActionLibrary::AddResult::kAdded) {
    return library.actions().back().id;
  }
  return std::nullopt;
}

ChunkTrigger ChunkTrigger::never() { return ChunkTrigger{}; }

ChunkTrigger ChunkTrigger::every_k(int k) {
  if (k < 1) throw std::invalid_argument("chunk period must be at least 1");
  ChunkTrigger t;
  t.kind_ = Kind::kEveryK;
  t.k_ = k;
  return t;
}

ChunkTrigger ChunkTrigger::loss_threshold(double initial, double decay) {
  if (!(initial > 0.0)) throw std::invalid_argument("loss threshold must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("loss threshold decay must lie in (0, 1)");
  ChunkTrigger t;
  t.kind_ = Kind::kLoss;
  t.threshold_ = initial;
  t.decay_ = decay;
  return t;
}

bool ChunkTrigger::should_chunk(std::int64_t iteration, double recent_loss) {
  if (iteration < 1) throw std::invalid_argument("iterations are counted from 1");
  switch (kind_) {
    case Kind::kNever:
      return false;
    case Kind::kEveryK:
      return iteration % k_ == 0;
    case Kind::kLoss:
      if (recent_loss < threshold_) {
        threshold_ *= decay_;
        return true;
      }
      return false;
  }
  return false;
}

void write_corpus(std::ostream& out, const ActionLibrary& library, const ActionCorpus& corpus) {
  for (const auto& seq : corpus.sequences) {
    for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << library.action_name(seq[i]);
    out << "\n";
  }
}

}  // namespace chunkflow
