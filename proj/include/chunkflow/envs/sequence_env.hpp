#pragma once

#include <string>
#include <vector>

#include "chunkflow/envs/env.hpp"

namespace chunkflow {

// Left-to-right string construction over a fixed alphabet. Symbol ids are
// 0..|alphabet|-1 and EOS is |alphabet|. EOS is offered at every state and
// is the only action once the string reaches max_len.
class SequenceEnv : public Environment {
 public:
  SequenceEnv(std::vector<std::string> alphabet, int max_len);

  EnvKind kind() const override { return EnvKind::kSequence; }
  std::size_t atomic_count() const override { return alphabet_.size() + 1; }
  std::string atomic_name(ActionId a) const override;
  ActionId terminal_action() const override { return static_cast<ActionId>(alphabet_.size()); }

  EnvState initial_state() const override { return SequenceState{}; }
  bool is_terminal(const EnvState& s) const override;
  std::vector<ActionId> valid_atomic_actions(const EnvState& s) const override;
  bool is_valid_atomic(const EnvState& s, ActionId a) const override;
  EnvState apply_atomic(const EnvState& s, ActionId a) const override;
  bool expansion_feasible(const EnvState& s, std::span<const ActionId> expansion) const override;

  double reward(const EnvState& x) const override;
  std::int64_t potential(const EnvState& s) const override;
  // Position-wise mismatches; a length difference counts once per missing symbol.
  std::size_t distance(const EnvState& a, const EnvState& b) const override;
  std::optional<std::vector<ActionId>> symbols(const EnvState& s) const override;

  std::string to_string(const EnvState& s) const override;
  EnvState from_string(const std::string& text) const override;
  std::string symbols_to_string(std::span<const ActionId> symbols) const;
  std::vector<ActionId> parse_symbols(const std::string& text) const;

  int max_len() const { return max_len_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }

  virtual double symbols_reward(std::span<const ActionId> symbols) const = 0;

 protected:
  const SequenceState& seq(const EnvState& s) const;
  std::optional<EnvState> undo_candidate(const EnvState& s, ActionId a) const override;
  void check_enumerable() const override;

 private:
  std::vector<std::string> alphabet_;
  int max_len_;
  bool single_char_;
};

// Maximum number of non-overlapping word occurrences in `s`.
int bitseq_max_word_tiling(std::span<const ActionId> s, const std::vector<std::vector<ActionId>>& words);
int bitseq_max_word_tiling(const std::string& s, const std::vector<std::string>& words);

struct BitSequenceParams {
  int length = 64;
  std::vector<std::string> words = {"00000000", "11111111", "11110000", "00001111", "00111100"};
};

class BitSequence final : public SequenceEnv {
 public:
  explicit BitSequence(BitSequenceParams params);

  std::string id() const override { return "bitseq"; }
  double symbols_reward(std::span<const ActionId> symbols) const override;
  bool is_mode(const EnvState&, double reward) const override { return reward == 1.0; }
  const BitSequenceParams& params() const { return params_; }

 private:
  BitSequenceParams params_;
  std::vector<std::vector<ActionId>> words_;
};

// Motif sets for tasks 1..3: disjoint across tasks, all assembled from one
// shared pool of 3-symbol codons so that tasks are structurally related.
std::vector<std::string> rna_task_motifs(int task, int count, int length);

struct SyntheticRnaParams {
  int length = 14;
  int task = 1;
  int motif_count = 4;
  double decay = 0.15;
  double mode_threshold = 0.85;
  std::vector<std::string> motifs{};  // overrides task-generated motifs when non-empty
};

class SyntheticRna final : public SequenceEnv {
 public:
  explicit SyntheticRna(SyntheticRnaParams params);

  std::string id() const override { return "rna"; }
  double symbols_reward(std::span<const ActionId> symbols) const override;
  bool is_mode(const EnvState&, double reward) const override { return reward >= params_.mode_threshold; }
  const SyntheticRnaParams& params() const { return params_; }
  const std::vector<std::string>& motifs() const { return params_.motifs; }

 private:
  SyntheticRnaParams params_;
  std::vector<std::vector<ActionId>> motif_ids_;
};

}  // namespace chunkflow
