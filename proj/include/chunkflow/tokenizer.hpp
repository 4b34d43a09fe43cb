#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "chunkflow/action_library.hpp"

namespace chunkflow {

enum class CorpusSource { kPolicy, kBuffer };

// Action-id sequences with terminal actions stripped.
struct ActionCorpus {
  std::vector<std::vector<ActionId>> sequences;
  std::vector<CorpusSource> sources;

  void add(std::vector<ActionId> seq, CorpusSource source);
  std::size_t size() const { return sequences.size(); }
};

using SequenceSampler = std::function<std::vector<ActionId>()>;

// floor(p*n) sequences from `buffer_parse`, the rest from `rollout`. With an
// empty buffer every sequence comes from `rollout`.
ActionCorpus build_corpus(const ActionLibrary& library, const SequenceSampler& rollout,
                          const SequenceSampler& buffer_parse, bool buffer_empty, int n, double p);

using PairCounts = std::map<std::pair<ActionId, ActionId>, std::int64_t>;

PairCounts pair_frequencies(const ActionCorpus& corpus);

// Candidate merges ordered by count (descending), then by flattened atomic
// expansion (lexicographically ascending).
struct MergeCandidate {
  std::pair<ActionId, ActionId> pair;
  std::int64_t count;
  std::vector<ActionId> expansion;
};
std::vector<MergeCandidate> ranked_merges(const ActionLibrary& library, const PairCounts& counts);

// Adds the best novel merge; returns its id, or nullopt when nothing novel exists.
std::optional<ActionId> increment_step(ActionLibrary& library, const ActionCorpus& corpus,
                                       std::int64_t iteration = 0);

// BPE over the atomic flattening of the corpus: the merged tokens, in merge order.
std::vector<std::vector<ActionId>> bpe_merges(const std::vector<std::vector<ActionId>>& atomic_corpus, int rounds);
std::vector<std::vector<ActionId>> flatten_corpus(const ActionLibrary& library, const ActionCorpus& corpus);

// Rebuilds the chunk set from up to `merges` BPE merges.
void replace_step(ActionLibrary& library, const ActionCorpus& corpus, int merges, std::int64_t iteration = 0);

std::optional<ActionId> random_merge_step(ActionLibrary& library, std::mt19937_64& rng, std::int64_t iteration = 0);

class ChunkTrigger {
 public:
  static ChunkTrigger never();
  static ChunkTrigger every_k(int k);
  static ChunkTrigger loss_threshold(double initial, double decay);

  // Decays the loss threshold whenever it fires.
  bool should_chunk(std::int64_t iteration, double recent_loss);

  bool is_loss_based() const { return kind_ == Kind::kLoss; }
  double threshold() const { return threshold_; }
  int period() const { return k_; }

 private:
  enum class Kind { kNever, kEveryK, kLoss };
  Kind kind_ = Kind::kNever;
  int k_ = 0;
  double threshold_ = 0.0;
  double decay_ = 1.0;
};

// One sequence per line, action names separated by spaces.
void write_corpus(std::ostream& out, const ActionLibrary& library, const ActionCorpus& corpus);

}  // namespace chunkflow
