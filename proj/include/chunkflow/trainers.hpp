#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chunkflow/backward_policy.hpp"
#include "chunkflow/config.hpp"
#include "chunkflow/nn/adam.hpp"
#include "chunkflow/policy_net.hpp"
#include "chunkflow/replay.hpp"
#include "chunkflow/tokenizer.hpp"

namespace chunkflow {

class ModeTracker;

// Raised when a loss or one of its inputs is not finite; the message carries
// a dump of the offending trajectory.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string dump_trajectory(const Environment& env, const ActionLibrary& library, const Trajectory& tau);

// Per-trajectory squared residuals (B, 1) of
//   log Z + log P_F(tau) - log P_B(tau | x) - beta log R(x).
// `log_pf` is (B, 1); `log_z` is a scalar or (1, 1).
Var tb_losses(Var log_z, Var log_pf, std::span<const double> log_pb, std::span<const double> log_reward, double beta);
Var tb_loss(Var log_z, Var log_pf, std::span<const double> log_pb, std::span<const double> log_reward, double beta);

// Linear from `start` at iteration 1 to `end` at the last iteration.
double epsilon_at(std::int64_t iteration, std::int64_t iterations, double start, double end);

// target <- tau * target + (1 - tau) * live
void polyak_update(nn::ParameterSet& target, const nn::ParameterSet& live, double tau);

struct StepStats {
  double loss = 0.0;         // mean training loss (actor loss for A2C/SAC)
  double critic_loss = std::numeric_limits<double>::quiet_NaN();  // A2C/SAC only
  bool updated = false;
};

struct SamplerConfig {
  NetConfig net;
  BackwardPolicy backward;
  double beta = 1.0;
  double lr = 1e-4;
  double logz_lr = 1e-3;
  double critic_lr = 1e-4;
  double logz_init = 0.0;
  double entropy_coef = 0.0;
  double polyak = 0.995;
};

class Sampler {
 public:
  Sampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed);
  virtual ~Sampler() = default;
  Sampler(const Sampler&) = delete;
  Sampler& operator=(const Sampler&) = delete;

  virtual std::string kind() const = 0;
  // Off-policy samplers train on a mixture of fresh rollouts and replayed
  // terminal states.
  virtual bool uses_replay() const { return false; }
  virtual std::vector<Trajectory> rollouts(const ActionLibrary& library, std::size_t n, double epsilon,
                                           std::mt19937_64& rng) const;
  virtual StepStats update(const ActionLibrary& library, std::span<const Trajectory> batch) = 0;
  virtual double log_z() const;  // NaN for samplers without one

  virtual std::vector<const nn::ParameterSet*> parameter_sets() const;
  virtual std::vector<nn::ParameterSet*> parameter_sets();

  PolicyNet& policy() { return policy_; }
  const PolicyNet& policy() const { return policy_; }
  const SamplerConfig& config() const { return config_; }
  const Environment& env() const { return *env_; }

 protected:
  const Environment* env_;
  SamplerConfig config_;
  PolicyNet policy_;
};

class GfnSampler final : public Sampler {
 public:
  GfnSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed);
  std::string kind() const override { return "gfn"; }
  bool uses_replay() const override { return true; }
  StepStats update(const ActionLibrary& library, std::span<const Trajectory> batch) override;
  double log_z() const override;
  void set_log_z(double v);
  std::vector<const nn::ParameterSet*> parameter_sets() const override;
  std::vector<nn::ParameterSet*> parameter_sets() override;
  // Mean TB loss over `batch` without updating anything.
  double evaluate_loss(const ActionLibrary& library, std::span<const Trajectory> batch) const;

 private:
  nn::ParameterSet logz_params_;
  nn::Adam policy_opt_;
  nn::Adam logz_opt_;
};

// On-policy advantage actor-critic with a Q critic bootstrapped SARSA-style.
class A2cSampler final : public Sampler {
 public:
  A2cSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed);
  std::string kind() const override { return "a2c"; }
  StepStats update(const ActionLibrary& library, std::span<const Trajectory> batch) override;
  std::vector<const nn::ParameterSet*> parameter_sets() const override;
  std::vector<nn::ParameterSet*> parameter_sets() override;
  const CriticNet& critic() const { return critic_; }

 private:
  CriticNet critic_;
  nn::Adam policy_opt_;
  nn::Adam critic_opt_;
};

// Discrete soft actor-critic with a Polyak-averaged target critic.
class SacSampler final : public Sampler {
 public:
  SacSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed);
  std::string kind() const override { return "sac"; }
  bool uses_replay() const override { return true; }
  StepStats update(const ActionLibrary& library, std::span<const Trajectory> batch) override;
  std::vector<const nn::ParameterSet*> parameter_sets() const override;
  std::vector<nn::ParameterSet*> parameter_sets() override;
  const CriticNet& critic() const { return critic_; }
  const CriticNet& target() const { return target_; }
  CriticNet& critic() { return critic_; }
  CriticNet& target() { return target_; }

 private:
  CriticNet critic_;
  CriticNet target_;
  nn::Adam policy_opt_;
  nn::Adam critic_opt_;
};

// Uniform over valid library actions; never updates.
class RandomSampler final : public Sampler {
 public:
  RandomSampler(const Environment& env, const SamplerConfig& config, std::uint64_t seed);
  std::string kind() const override { return "random"; }
  std::vector<Trajectory> rollouts(const ActionLibrary& library, std::size_t n, double epsilon,
                                   std::mt19937_64& rng) const override;
  StepStats update(const ActionLibrary&, std::span<const Trajectory>) override { return {}; }
};

SamplerConfig sampler_config(const RunConfig& config);
std::unique_ptr<Sampler> make_sampler(const Environment& env, const RunConfig& config);

// Independent, reproducible generator for one consumer of randomness.
std::mt19937_64 split_rng(std::uint64_t seed, const std::string& consumer);
std::uint64_t split_seed(std::uint64_t seed, const std::string& consumer);

struct IterationRecord {
  std::int64_t iteration = 0;
  std::int64_t visited_states = 0;
  double loss = 0.0;
  double critic_loss = 0.0;
  double log_z = 0.0;
  double epsilon = 0.0;
  std::size_t library_size = 0;
  std::size_t modes_cumulative = 0;
  std::size_t chunk_uses = 0;  // chunk actions taken by this iteration's fresh rollouts
  double mean_reward = 0.0;    // over fresh rollouts
  bool chunk_event = false;
};

struct TrainingResult {
  std::vector<IterationRecord> records;
  std::vector<std::size_t> mode_curve;  // modes after each iteration
  std::vector<std::int64_t> chunk_events;
  // Actions taken by fresh rollouts, with the name each had when first used
  // (a replace step may later remove it from the library).
  std::map<ActionId, std::int64_t> action_usage;
  std::map<ActionId, std::string> action_names;
};

// Everything a run owns, exposed to observers for evaluation and persistence.
struct TrainingState {
  const RunConfig* config = nullptr;
  const Environment* env = nullptr;
  ActionLibrary* library = nullptr;
  Sampler* sampler = nullptr;
  DiversityBuffer* buffer = nullptr;
  const ModeTracker* modes = nullptr;
  const TrainingResult* result = nullptr;
  std::int64_t iteration = 0;
};

class TrainingObserver {
 public:
  virtual ~TrainingObserver() = default;
  virtual void on_start(const TrainingState&) {}
  virtual void on_iteration(const IterationRecord&, const TrainingState&) {}
  virtual void on_chunk_event(std::int64_t, const ActionCorpus&, const TrainingState&) {}
  virtual void on_evaluation(const TrainingState&) {}
  virtual void on_finish(const TrainingState&) {}
};

// Wraps any error raised during training with the iteration it occurred at.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(std::int64_t iteration, const std::string& cause);
  std::int64_t iteration() const { return iteration_; }
  const std::string& cause() const { return cause_; }

 private:
  std::int64_t iteration_;
  std::string cause_;
};


ChunkTrigger make_trigger(const RunConfig& config);

// The chunking training loop. `library` is the initial library (atomic or
// transferred); `sampler` defaults to make_sampler(env, config).
TrainingResult run_training(const RunConfig& config, const Environment& env, ActionLibrary& library,
                            TrainingObserver* observer = nullptr, Sampler* sampler = nullptr);

}  // namespace chunkflow
