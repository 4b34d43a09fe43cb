#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chunkflow/action_library.hpp"
#include "chunkflow/nn/layers.hpp"
#include "chunkflow/trajectory.hpp"

namespace chunkflow {

using nn::Var;

struct NetConfig {
  std::size_t hidden = 128;
  std::size_t embedding = 128;  // d, shared by state and action embeddings
};

// Batched inference helper for lock-step rollouts; implementations may cache
// per-row work (the sequence encoder keeps one recurrent state per row).
class RolloutEncoder {
 public:
  virtual ~RolloutEncoder() = default;
  // rows[i] names the rollout that states[i] belongs to; each row's states
  // must only grow between calls.
  virtual nn::Tensor encode(std::span<const EnvState> states, std::span<const std::size_t> rows) = 0;
};

class StateEncoder {
 public:
  virtual ~StateEncoder() = default;
  virtual Var encode(nn::Tape& tape, std::span<const EnvState> states) const = 0;
  // Every decision state of every trajectory, trajectory-major.
  virtual Var encode_trajectories(nn::Tape& tape, std::span<const Trajectory> trajectories) const;
  virtual std::unique_ptr<RolloutEncoder> rollout_encoder(std::size_t rows) const;
};

std::unique_ptr<StateEncoder> make_state_encoder(const Environment& env, nn::ParameterSet& params,
                                                 const std::string& name, const NetConfig& config, nn::Rng& rng);

// Recurrent encoder over the atomic expansion of each library action.
class ActionEncoder {
 public:
  ActionEncoder(nn::ParameterSet& params, const std::string& name, std::size_t atomic_count, const NetConfig& config,
                nn::Rng& rng);

  // (library size, d), rows in library position order.
  Var encode(nn::Tape& tape, const ActionLibrary& library) const;

 private:
  nn::Parameter* embedding_;
  nn::Lstm lstm_;
  nn::LayerNorm norm_;
  nn::Linear head_;
};

struct PolicyOutput {
  std::vector<double> logits;     // one per library position
  ActionMask mask;
  std::vector<double> log_probs;  // -inf where masked
};

// State and action encoders whose embeddings are combined by dot product.
class EmbeddingNet {
 public:
  EmbeddingNet(const Environment& env, const NetConfig& config, std::uint64_t seed, const std::string& name);
  EmbeddingNet(const EmbeddingNet&) = delete;
  EmbeddingNet& operator=(const EmbeddingNet&) = delete;

  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const NetConfig& config() const { return config_; }
  const StateEncoder& state_encoder() const { return *states_; }
  const ActionEncoder& action_encoder() const { return actions_; }

  // (states, actions) score matrix: state_emb * action_emb^T * factor.
  Var scores(nn::Tape& tape, Var state_embeddings, Var action_embeddings) const;
  double score_factor() const { return factor_; }
  void set_score_factor(double f) { factor_ = f; }

 private:
  NetConfig config_;
  nn::ParameterSet params_;
  nn::Rng init_rng_;
  std::unique_ptr<StateEncoder> states_;
  ActionEncoder actions_;
  double factor_ = 1.0;
};

nn::Mask stack_masks(const Environment& env, const ActionLibrary& library, std::span<const EnvState> states);

class PolicyNet {
 public:
  PolicyNet(const Environment& env, const NetConfig& config, std::uint64_t seed, const std::string& name = "policy");

  nn::ParameterSet& parameters() { return net_.parameters(); }
  const nn::ParameterSet& parameters() const { return net_.parameters(); }
  const EmbeddingNet& net() const { return net_; }
  const Environment& env() const { return *env_; }

  PolicyOutput output(const EnvState& s, const ActionLibrary& library) const;
  ActionId sample_action(const EnvState& s, const ActionLibrary& library, std::mt19937_64& rng, double epsilon) const;

  // Lock-step batch of complete rollouts under the epsilon-mixed policy.
  std::vector<Trajectory> sample_trajectories(const ActionLibrary& library, std::size_t n, double epsilon,
                                              std::mt19937_64& rng) const;

  // log P_F(tau) under the unmixed policy, one row per trajectory.
  Var traj_logprobs(nn::Tape& tape, const ActionLibrary& library, std::span<const Trajectory> trajectories) const;
  double traj_logprob(const Trajectory& tau, const ActionLibrary& library) const;
  // Reference path: sums single-state outputs step by step.
  double traj_logprob_stepwise(const Trajectory& tau, const ActionLibrary& library) const;

  // Row-wise masked log-probabilities (states, library size) for the
  // decision states of `trajectories`, plus the taken-action positions.
  struct StepLogProbs {
    Var log_probs;
    nn::Mask mask;
    std::vector<std::size_t> taken;
    std::vector<std::size_t> trajectory_of_row;
  };
  StepLogProbs step_log_probs(nn::Tape& tape, const ActionLibrary& library,
                              std::span<const Trajectory> trajectories) const;

 private:
  const Environment* env_;
  EmbeddingNet net_;
};

// Q(s, a) = critic_state(s) . critic_action(a), over the whole library.
class CriticNet {
 public:
  CriticNet(const Environment& env, const NetConfig& config, std::uint64_t seed, const std::string& name = "critic");

  nn::ParameterSet& parameters() { return net_.parameters(); }
  const nn::ParameterSet& parameters() const { return net_.parameters(); }

  // (states, library size)
  Var q_values(nn::Tape& tape, const ActionLibrary& library, std::span<const EnvState> states) const;
  Var q_values_for(nn::Tape& tape, const ActionLibrary& library, std::span<const Trajectory> trajectories) const;
  double critic_value(const EnvState& s, ActionId a, const ActionLibrary& library) const;
  // E_{a ~ pi}[Q(s, a)] for a given action distribution over library positions.
  double baseline(const EnvState& s, const ActionLibrary& library, std::span<const double> probs) const;

 private:
  EmbeddingNet net_;
};

}  // namespace chunkflow
