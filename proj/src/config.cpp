#include "chunkflow/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "chunkflow/envs/fractal_grid.hpp"
#include "chunkflow/envs/graph_build.hpp"
#include "chunkflow/envs/sequence_env.hpp"

namespace chunkflow {
namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid configuration";
  for (const auto& p : problems) out += "\n  " + p;
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && !text.empty();
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  // Returns false when the text is not a valid value for the field.
  std::function<bool(RunConfig&, const std::string&)> set;
};

template <typename T>
Field number_field(const char* key, T RunConfig::*member) {
  return Field{key,
               [member](const RunConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) {
                   return format_double(c.*member);
                 } else {
                   return std::to_string(c.*member);
                 }
               },
               [member](RunConfig& c, const std::string& v) {
                 T parsed{};
                 if (!parse_number(v, parsed)) return false;
                 c.*member = parsed;
                 return true;
               }};
}

Field string_field(const char* key, std::string RunConfig::*member) {
  return Field{key, [member](const RunConfig& c) { return c.*member; },
               [member](RunConfig& c, const std::string& v) {
                 c.*member = v;
                 return true;
               }};
}

Field bool_field(const char* key, bool RunConfig::*member) {
  return Field{key, [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
               [member](RunConfig& c, const std::string& v) {
                 if (v == "true" || v == "1") {
                   c.*member = true;
                 } else if (v == "false" || v == "0") {
                   c.*member = false;
                 } else {
                   return false;
                 }
                 return true;
               }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      string_field("env", &RunConfig::env),
      number_field("side", &RunConfig::side),
      number_field("r0", &RunConfig::r0),
      number_field("r1", &RunConfig::r1),
      number_field("r2", &RunConfig::r2),
      number_field("length", &RunConfig::length),
      number_field("task", &RunConfig::task),
      number_field("motif_count", &RunConfig::motif_count),
      number_field("rna_decay", &RunConfig::rna_decay),
      number_field("mode_threshold", &RunConfig::mode_threshold),
      number_field("max_nodes", &RunConfig::max_nodes),
      string_field("sampler", &RunConfig::sampler),
      string_field("backward_policy", &RunConfig::backward),
      number_field("lambda", &RunConfig::lambda),
      string_field("chunker", &RunConfig::chunker),
      string_field("trigger", &RunConfig::trigger),
      number_field("chunk_every", &RunConfig::chunk_every),
      number_field("loss_threshold", &RunConfig::loss_threshold),
      number_field("loss_decay", &RunConfig::loss_decay),
      number_field("loss_window", &RunConfig::loss_window),
      number_field("merges", &RunConfig::merges),
      number_field("corpus_size", &RunConfig::corpus_size),
      number_field("corpus_p", &RunConfig::corpus_p),
      number_field("iterations", &RunConfig::iterations),
      number_field("batch", &RunConfig::batch),
      number_field("lr", &RunConfig::lr),
      number_field("logz_lr", &RunConfig::logz_lr),
      number_field("critic_lr", &RunConfig::critic_lr),
      number_field("logz_init", &RunConfig::logz_init),
      number_field("beta", &RunConfig::beta),
      number_field("epsilon_start", &RunConfig::epsilon_start),
      number_field("epsilon_end", &RunConfig::epsilon_end),
      number_field("entropy_coef", &RunConfig::entropy_coef),
      number_field("polyak", &RunConfig::polyak),
      number_field("buffer_fraction", &RunConfig::buffer_fraction),
      number_field("buffer_capacity", &RunConfig::buffer_capacity),
      number_field("buffer_cutoff", &RunConfig::buffer_cutoff),
      number_field("hidden", &RunConfig::hidden),
      number_field("embedding", &RunConfig::embedding),
      number_field("eval_every", &RunConfig::eval_every),
      number_field("elbo_samples", &RunConfig::elbo_samples),
      number_field("parse_samples", &RunConfig::parse_samples),
      number_field("spearman_samples", &RunConfig::spearman_samples),
      number_field("seed", &RunConfig::seed),
      string_field("out_dir", &RunConfig::out_dir),
      string_field("initial_library", &RunConfig::initial_library),
      bool_field("paper_scale", &RunConfig::paper_scale),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

struct ParsedText {
  std::vector<std::pair<std::string, std::string>> entries;  // in file order
  std::vector<std::string> problems;
};

ParsedText parse_lines(const std::string& text) {
  ParsedText out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      out.problems.push_back("line " + std::to_string(number) + ": expected key = value");
      continue;
    }
    out.entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

// Hyperparameters per environment family and size. Desk budgets are a tenth
// of the full ones; chunking periods scale with them so that both yield the
// same number of chunk events.
void apply_family_defaults(RunConfig& c) {
  const bool gfn = c.sampler == "gfn";
  const bool sac = c.sampler == "sac";
  const int scale = c.paper_scale ? 1 : 10;
  c.lr = sac ? 3e-4 : 1e-4;
  c.critic_lr = sac ? 3e-4 : 1e-4;
  c.logz_lr = 1e-3;
  c.batch = 64;
  c.buffer_fraction = 0.55;
  c.trigger = "every_k";
  c.backward = c.env == "bitseq" || c.env == "rna" ? "shortparse" : "uniform";
  if (c.env == "fractal") {
    c.iterations = 31250 / scale;
    c.chunk_every = 1250 / scale;
    c.buffer_capacity = 1000;
    c.buffer_cutoff = 1;
    c.epsilon_start = 0.5;
    c.epsilon_end = 0.1;
    c.entropy_coef = sac ? 0.2 : 0.5;
    c.beta = 1.0;
    c.logz_init = 90.0;
    return;
  }
  c.iterations = 25000 / scale;
  c.chunk_every = 1000 / scale;
  c.buffer_capacity = 10000;
  c.epsilon_start = 0.1;
  c.epsilon_end = 0.01;
  if (c.env == "rna") {
    const bool small = c.length <= 14;
    c.buffer_cutoff = small ? 3 : 10;
    c.entropy_coef = sac ? (small ? 0.1 : 0.025) : (small ? 0.05 : 0.005);
    c.beta = small ? 10.0 : 75.0;
    c.logz_init = small ? 11.0 : 22.0;
    if (gfn) {
      c.trigger = "loss";
      c.loss_threshold = small ? 1.0 : 5.0;
      c.loss_decay = 0.75;
    }
  } else if (c.env == "bitseq") {
    const bool small = c.length <= 64;
    c.buffer_cutoff = small ? 8 : 16;
    c.entropy_coef = sac ? (small ? 0.01 : 0.005) : (small ? 0.05 : 0.01);
    c.beta = small ? 100.0 : 200.0;
    c.logz_init = small ? 40.0 : 30.0;
  } else if (c.env == "graph") {
    const bool small = c.max_nodes <= 7;
    c.buffer_cutoff = small ? 3 : 5;
    c.entropy_coef = sac ? 0.1 : 0.05;
    c.beta = 1.0;
    c.logz_init = small ? 10.0 : 30.0;
  }
}

void apply_env_defaults(RunConfig& c) {
  apply_family_defaults(c);
  // Only GFlowNet explores with epsilon-greedy mixing.
  if (c.sampler != "gfn") c.epsilon_start = c.epsilon_end = 0.0;
}

bool is_one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (v == o) return true;
  }
  return false;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

BackwardPolicy RunConfig::backward_policy() const {
  return BackwardPolicy{parse_backward_kind(backward), lambda};
}

std::set<std::string> explicit_keys(const std::string& text, const std::map<std::string, std::string>& overrides) {
  std::set<std::string> keys;
  for (const auto& [k, v] : parse_lines(text).entries) keys.insert(k);
  for (const auto& [k, v] : overrides) keys.insert(k);
  return keys;
}

RunConfig parse_config(const std::string& text, const std::map<std::string, std::string>& overrides) {
  ParsedText parsed = parse_lines(text);
  std::vector<std::string> problems = parsed.problems;
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : parsed.entries) values[k] = v;
  for (const auto& [k, v] : overrides) values[k] = v;

  for (const auto& [k, v] : values) {
    if (!find_field(k)) problems.push_back("unknown key '" + k + "'");
  }

  // Keys that select the defaults are applied first, then the defaults, then
  // every explicit value (so explicit values always win).
  RunConfig config;
  auto assign = [&](const std::string& key) {
    auto it = values.find(key);
    if (it == values.end()) return;
    if (!find_field(key)->set(config, it->second)) {
      problems.push_back("bad value for '" + key + "': '" + it->second + "'");
    }
  };
  for (const char* key : {"env", "sampler", "length", "max_nodes", "paper_scale"}) assign(key);
  apply_env_defaults(config);
  for (const auto& [k, v] : values) {
    if (find_field(k)) assign(k);
  }
  if (!problems.empty()) throw ConfigError(problems);
  validate(config);
  return config;
}

RunConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& args) {
  std::map<std::string, std::string> out;
  std::vector<std::string> problems;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    if (a.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2) {
      problems.push_back("override '" + a + "' is not of the form --key=value");
      continue;
    }
    std::string key = a.substr(2, eq - 2);
    for (char& ch : key) {
      if (ch == '-') ch = '_';
    }
    out[key] = a.substr(eq + 1);
  }
  if (!problems.empty()) throw ConfigError(problems);
  return out;
}

std::string echo_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

void validate(const RunConfig& c) {
  std::vector<std::string> problems;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  require(is_one_of(c.env, {"fractal", "bitseq", "rna", "graph"}),
          "env: unknown environment '" + c.env + "' (fractal|bitseq|rna|graph)");
  require(is_one_of(c.sampler, {"gfn", "a2c", "sac", "random"}),
          "sampler: unknown sampler '" + c.sampler + "' (gfn|a2c|sac|random)");
  require(is_one_of(c.chunker, {"atomic", "increment", "replace", "random_merge"}),
          "chunker: unknown chunker '" + c.chunker + "' (atomic|increment|replace|random_merge)");
  require(is_one_of(c.trigger, {"every_k", "loss"}), "trigger: expected every_k or loss");
  const bool sequence = c.env == "bitseq" || c.env == "rna";
  if (is_one_of(c.backward, {"uniform", "maxent", "shortparse"})) {
    require(sequence || c.backward == "uniform",
            "backward_policy: " + c.backward + " needs a string environment; use uniform for " + c.env);
  } else {
    problems.push_back("backward_policy: unknown kind '" + c.backward + "' (uniform|maxent|shortparse)");
  }
  require(c.lambda <= 0.0, "lambda: must be <= 0");
  require(c.trigger != "loss" || c.sampler != "random", "trigger: the random sampler has no loss to threshold");

  if (c.env == "fractal") {
    bool ok = c.side >= 9;
    for (int s = c.side - 1; ok && s > 1; s /= 2) ok = s % 2 == 0;
    require(ok, "side: must be 2^k + 1 with k >= 3");
    require(c.r0 > 0.0 && c.r1 >= 0.0 && c.r2 >= 0.0, "r0, r1, r2: r0 must be positive and r1, r2 non-negative");
  }
  if (sequence) require(c.length >= 1, "length: must be positive");
  if (c.env == "rna") {
    require(c.task >= 1 && c.task <= 3, "task: must be 1, 2 or 3");
    require(c.motif_count >= 1, "motif_count: must be positive");
    require(c.rna_decay > 0.0, "rna_decay: must be positive");
    require(c.mode_threshold > 0.0 && c.mode_threshold <= 1.0, "mode_threshold: must be in (0, 1]");
  }
  if (c.env == "graph") {
    require(c.max_nodes >= 2 && c.max_nodes <= GraphBuild::kMaxSupportedNodes, "max_nodes: must be in 2..11");
  }

  require(c.chunk_every >= 1, "chunk_every: must be positive");
  require(c.loss_threshold > 0.0, "loss_threshold: must be positive");
  require(c.loss_decay > 0.0 && c.loss_decay <= 1.0, "loss_decay: must be in (0, 1]");
  require(c.loss_window >= 1, "loss_window: must be positive");
  require(c.merges >= 1, "merges: must be positive");
  require(c.corpus_size >= 1, "corpus_size: must be positive");
  require(c.corpus_p >= 0.0 && c.corpus_p <= 1.0, "corpus_p: must be in [0, 1]");
  require(c.iterations >= 1, "iterations: must be positive");
  require(c.batch >= 1, "batch: must be positive");
  require(c.lr > 0.0 && c.logz_lr > 0.0 && c.critic_lr > 0.0, "lr, logz_lr, critic_lr: must be positive");
  require(c.beta > 0.0, "beta: must be positive");
  require(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0 && c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0,
          "epsilon_start, epsilon_end: must be in [0, 1]");
  require(c.epsilon_end <= c.epsilon_start, "epsilon_end: must not exceed epsilon_start");
  require(c.entropy_coef >= 0.0, "entropy_coef: must be non-negative");
  require(c.polyak >= 0.0 && c.polyak <= 1.0, "polyak: must be in [0, 1]");
  require(c.buffer_fraction >= 0.0 && c.buffer_fraction < 1.0, "buffer_fraction: must be in [0, 1)");
  require(c.buffer_capacity >= 1, "buffer_capacity: must be positive");
  require(c.buffer_cutoff >= 0, "buffer_cutoff: must be non-negative");
  require(c.hidden >= 1 && c.embedding >= 1, "hidden, embedding: must be positive");
  require(c.eval_every >= 0, "eval_every: must be non-negative");
  require(c.elbo_samples >= 1, "elbo_samples: must be positive");
  require(c.parse_samples >= 1, "parse_samples: must be positive");
  require(c.spearman_samples >= 0, "spearman_samples: must be non-negative");
  if (!problems.empty()) throw ConfigError(problems);
}

std::unique_ptr<Environment> make_environment(const RunConfig& c) {
  if (c.env == "fractal") return std::make_unique<FractalGrid>(FractalGridParams{c.side, c.r0, c.r1, c.r2});
  if (c.env == "bitseq") {
    BitSequenceParams p;
    p.length = c.length;
    return std::make_unique<BitSequence>(p);
  }
  if (c.env == "rna") {
    SyntheticRnaParams p;
    p.length = c.length;
    p.task = c.task;
    p.motif_count = c.motif_count;
    p.decay = c.rna_decay;
    p.mode_threshold = c.mode_threshold;
    return std::make_unique<SyntheticRna>(p);
  }
  if (c.env == "graph") return std::make_unique<GraphBuild>(GraphBuildParams{c.max_nodes});
  throw ConfigError({"env: unknown environment '" + c.env + "'"});
}

std::string default_output_root() {
  const char* root = std::getenv("CHUNKFLOW_OUT");
  return root && *root ? std::string(root) : std::string("runs");
}

}  // namespace chunkflow
