#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "chunkflow/backward_policy.hpp"
#include "chunkflow/envs/env.hpp"

namespace chunkflow {

// Collects every problem found while parsing or validating a configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct RunConfig {
  // environment
  std::string env = "fractal";  // fractal | bitseq | rna | graph
  int side = 65;
  double r0 = 0.1, r1 = 0.5, r2 = 2.0;
  int length = 64;
  int task = 1;
  int motif_count = 4;
  double rna_decay = 0.15;
  double mode_threshold = 0.85;
  int max_nodes = 7;

  // sampler and backward policy
  std::string sampler = "gfn";  // gfn | a2c | sac | random
  std::string backward = "uniform";
  double lambda = -5.0;

  // chunking
  std::string chunker = "atomic";  // atomic | increment | replace | random_merge
  std::string trigger = "every_k";  // every_k | loss
  int chunk_every = 125;
  double loss_threshold = 1.0;
  double loss_decay = 0.75;
  int loss_window = 100;
  int merges = 25;
  int corpus_size = 256;
  double corpus_p = 0.55;

  // optimisation and schedules
  int iterations = 3125;
  int batch = 64;
  double lr = 1e-4;
  double logz_lr = 1e-3;
  double critic_lr = 1e-4;
  double logz_init = 90.0;
  double beta = 1.0;
  double epsilon_start = 0.5;
  double epsilon_end = 0.1;
  double entropy_coef = 0.5;
  double polyak = 0.995;
  double buffer_fraction = 0.55;
  int buffer_capacity = 1000;
  int buffer_cutoff = 1;
  int hidden = 128;
  int embedding = 128;

  // evaluation
  int eval_every = 0;  // 0: final evaluation only
  int elbo_samples = 10000;
  int parse_samples = 40;
  int spearman_samples = 0;

  std::uint64_t seed = 0;
  std::string out_dir;
  std::string initial_library;
  bool paper_scale = false;

  BackwardPolicy backward_policy() const;
  bool operator==(const RunConfig&) const = default;
};

// Parses "key = value" lines ('#' starts a comment), applies per-environment
// defaults for keys the text leaves unset, then the overrides. Throws
// ConfigError listing every bad key or value.
RunConfig parse_config(const std::string& text, const std::map<std::string, std::string>& overrides = {});
RunConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides = {});

// Keys given explicitly in the text or the overrides.
std::set<std::string> explicit_keys(const std::string& text, const std::map<std::string, std::string>& overrides);

// Parses "--key=value" arguments.
std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& args);

// Every key, one "key=value" line each, in a fixed order.
std::string echo_config(const RunConfig& config);

void validate(const RunConfig& config);

std::unique_ptr<Environment> make_environment(const RunConfig& config);

// Default output root: $CHUNKFLOW_OUT, else "runs".
std::string default_output_root();

}  // namespace chunkflow
