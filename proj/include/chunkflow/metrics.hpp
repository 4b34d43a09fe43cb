#pragma once

#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "chunkflow/backward_policy.hpp"
#include "chunkflow/policy_net.hpp"

namespace chunkflow {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Distinct modes seen so far; each mode is counted once.
class ModeTracker {
 public:
  explicit ModeTracker(const Environment& env) : env_(&env) {}

  // True when x is a mode not seen before.
  bool observe(const EnvState& x, double reward);
  std::size_t count() const { return seen_.size(); }
  const std::set<std::string>& modes() const { return seen_; }

 private:
  const Environment* env_;
  std::set<std::string> seen_;
};

double l1_distance(std::span<const double> p, std::span<const double> q);
// Base-2 Jensen-Shannon divergence, in [0, 1].
double jsd(std::span<const double> p, std::span<const double> q);

// R(x)^beta / Z over `terminals`.
std::vector<double> target_distribution(std::span<const TerminalState> terminals, double beta);
double exact_log_partition(std::span<const TerminalState> terminals, double beta);

// P_F^T(x) for each of `terminals`, by forward dynamic programming over every
// reachable state.
std::vector<double> exact_terminal_distribution(const PolicyNet& policy, const ActionLibrary& library,
                                                std::span<const TerminalState> terminals);

struct ElboResult {
  double log_z = 0.0;
  double estimate = 0.0;   // mean of beta log R + log P_B - log P_F
  double std_error = 0.0;
  double gap = 0.0;        // |log_z - estimate|
};

ElboResult elbo_gap(const PolicyNet& policy, const ActionLibrary& library, const BackwardPolicy& backward,
                    double beta, std::size_t k, std::mt19937_64& rng);

// log of the importance-sampled mean of P_F(tau) / P_B(tau | x), tau ~ P_B.
double estimate_terminal_logprob(const PolicyNet& policy, const ActionLibrary& library,
                                 const BackwardPolicy& backward, const EnvState& x, std::size_t n,
                                 std::mt19937_64& rng);

std::vector<double> average_ranks(std::span<const double> v);
double spearman(std::span<const double> a, std::span<const double> b);

struct LikelihoodSample {
  double reward = 0.0;      // base reward
  double log_reward = 0.0;  // beta * log R
  double log_likelihood = 0.0;
};

// Ten thresholds spaced evenly from 0 to 0.93.
std::vector<double> default_spearman_thresholds();
// nullopt where fewer than three samples reach the threshold.
std::vector<std::optional<double>> spearman_reward_likelihood(std::span<const LikelihoodSample> samples,
                                                              std::span<const double> thresholds);

// Non-overlapping left-to-right occurrences of `pattern` in `s`.
std::size_t count_occurrences(std::span<const ActionId> s, std::span<const ActionId> pattern);

struct ChunkStats {
  ActionId id = 0;
  std::string name;
  double occurrence_mean = 0.0;
  double occurrence_median = 0.0;
  double occurrence_sd = 0.0;
  double coverage = 0.0;
};

std::vector<ChunkStats> chunk_statistics(const ActionLibrary& library,
                                         const std::vector<std::vector<ActionId>>& objects);

// Minimum number of tokens concatenating to s; throws if s has no parse.
std::size_t shortest_parse(std::span<const ActionId> s, const std::vector<std::vector<ActionId>>& tokens);
std::vector<std::vector<ActionId>> library_tokens(const ActionLibrary& library);
double shortest_parse_length(const ActionLibrary& library, const std::vector<std::vector<ActionId>>& objects);
// The same average under atomics plus `rounds` BPE merges learned on the objects themselves.
double bpe_floor(std::size_t alphabet, const std::vector<std::vector<ActionId>>& objects, int rounds);

struct TopKResult {
  double mean_reward = 0.0;
  double diversity = 0.0;
};
TopKResult topk_reward_diversity(const Environment& env, std::span<const TerminalState> samples, std::size_t k);

}  // namespace chunkflow
