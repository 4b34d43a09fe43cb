#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "chunkflow/action_library.hpp"
#include "chunkflow/trajectory.hpp"

namespace chunkflow {

enum class BackwardKind { kUniformParent, kMaxEnt, kShortParse };

struct BackwardPolicy {
  BackwardKind kind = BackwardKind::kUniformParent;
  double lambda = -5.0;  // used by kShortParse only

  double effective_lambda() const { return kind == BackwardKind::kMaxEnt ? 0.0 : lambda; }
  bool is_parse_based() const { return kind != BackwardKind::kUniformParent; }
};

BackwardKind parse_backward_kind(const std::string& name);
std::string backward_kind_name(BackwardKind kind);

// log N_lambda(s[:i]) for i = 0..prefix_length, where N_lambda counts the
// tokenizations of a prefix weighted by e^{lambda * token count}.
struct TokenizationCountTable {
  double lambda = 0.0;
  std::uint64_t generation = 0;
  std::vector<double> log_n;

  std::size_t prefix_length() const { return log_n.size() - 1; }
};

// Non-terminal library expansions that end exactly at position `end` of s.
std::vector<ActionId> suffix_tokens(const ActionLibrary& library, std::span<const ActionId> s, std::size_t end);

TokenizationCountTable n_lambda_table(std::span<const ActionId> s, const ActionLibrary& library, double lambda);
// Extends `table` from its current prefix length to s.size().
void extend_table(TokenizationCountTable& table, std::span<const ActionId> s, const ActionLibrary& library);

// log P_B(s | s.t) = lambda + log N(s) - log N(s.t). `st` is the child string
// and `table` must cover it.
double shortparse_step_logprob(std::span<const ActionId> st, std::span<const ActionId> token,
                               const TokenizationCountTable& table);

// Incoming (parent, action) edges of `s` under the library.
struct ParentEdge {
  EnvState parent;
  ActionId action;
};
std::vector<ParentEdge> parent_edges(const Environment& env, const ActionLibrary& library, const EnvState& s);

// log P_B(tau | x). Throws std::invalid_argument if tau does not end at x or is
// inconsistent with the library.
double backward_traj_logprob(const Environment& env, const ActionLibrary& library, const Trajectory& tau,
                             const BackwardPolicy& policy);

// Stepwise product of backward transition probabilities; agrees with
// backward_traj_logprob.
double backward_traj_logprob_stepwise(const Environment& env, const ActionLibrary& library, const Trajectory& tau,
                                      const BackwardPolicy& policy);

// Draws a trajectory ending at the terminal state x, returned in forward order
// with reward set from the environment.
Trajectory sample_backward_trajectory(const Environment& env, const ActionLibrary& library, const EnvState& x,
                                      const BackwardPolicy& policy, std::mt19937_64& rng);

}  // namespace chunkflow
