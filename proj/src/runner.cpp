#include "chunkflow/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "chunkflow/envs/fractal_grid.hpp"
#include "chunkflow/envs/sequence_env.hpp"
#include "chunkflow/metrics.hpp"
#include "chunkflow/nn/checkpoint.hpp"

namespace chunkflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_cell(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "";
  std::ostringstream out;
  out << std::setprecision(10) << *v;
  return out.str();
}

std::string iteration_tag(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "iter_%07lld", static_cast<long long>(iteration));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Library JSON plus the iteration it was taken at and the run's configuration,
// so a snapshot can rebuild its environment on its own.
void write_snapshot(const fs::path& path, const ActionLibrary& library, std::int64_t iteration,
                    const RunConfig& config) {
  json j = json::parse(library.to_json());
  j["iteration"] = iteration;
  j["config"] = echo_config(config);
  write_text(path, j.dump(2) + "\n");
}

std::vector<TerminalState> buffer_top(const DiversityBuffer& buffer, std::size_t k) {
  std::vector<TerminalState> out;
  for (const auto& e : buffer.entries()) {
    if (out.size() >= k) break;
    out.push_back({e.state, e.reward});
  }
  return out;
}

class ArtifactWriter final : public TrainingObserver {
 public:
  ArtifactWriter(fs::path dir, RunArtifacts& artifacts)
      : dir_(std::move(dir)), artifacts_(&artifacts), eval_rng_() {}

  std::int64_t last_iteration() const { return last_iteration_; }

  void on_start(const TrainingState& st) override {
    eval_rng_ = split_rng(st.config->seed, "evaluation");
    fs::create_directories(dir_ / artifact::kLibraryDir);
    fs::create_directories(dir_ / artifact::kCorpusDir);
    fs::remove(dir_ / artifact::kFailure);
    fs::remove(dir_ / artifact::kDone);
    write_text(dir_ / artifact::kConfig, echo_config(*st.config));
    write_snapshot(dir_ / artifact::kInitialLibrary, *st.library, 0, *st.config);
    if (const auto* grid = dynamic_cast<const FractalGrid*>(st.env)) grid->write_reward_csv(dir_ / "reward.csv");
    metrics_.open(dir_ / artifact::kMetrics, std::ios::binary | std::ios::trunc);
    eval_.open(dir_ / artifact::kEval, std::ios::binary | std::ios::trunc);
    std::string header;
    for (const auto& c : eval_columns()) header += (header.empty() ? "" : ",") + c;
    eval_ << header << "\n" << std::flush;
  }

  void on_iteration(const IterationRecord& r, const TrainingState&) override {
    last_iteration_ = r.iteration;
    json j;
    j["iteration"] = r.iteration;
    j["visited_states"] = r.visited_states;
    j["loss"] = r.loss;
    j["critic_loss"] = r.critic_loss;
    j["logZ"] = r.log_z;
    j["epsilon"] = r.epsilon;
    j["library_size"] = r.library_size;
    j["modes_cumulative"] = r.modes_cumulative;
    j["chunk_uses"] = r.chunk_uses;
    j["mean_reward"] = r.mean_reward;
    j["chunk_event"] = r.chunk_event;
    metrics_ << j.dump() << "\n" << std::flush;
  }

  void on_chunk_event(std::int64_t iteration, const ActionCorpus& corpus, const TrainingState& st) override {
    write_snapshot(snapshot_path(dir_, iteration), *st.library, iteration, *st.config);
    if (corpus.size() > 0) {
      std::ofstream out(dir_ / artifact::kCorpusDir / (iteration_tag(iteration) + ".txt"), std::ios::binary);
      write_corpus(out, *st.library, corpus);
    }
  }

  void on_evaluation(const TrainingState& st) override {
    EvalRow row = evaluate(st, eval_rng_);
    eval_ << eval_csv_line(row) << "\n" << std::flush;
    artifacts_->evaluations.push_back(std::move(row));
  }

  void on_finish(const TrainingState& st) override {
    write_snapshot(dir_ / artifact::kFinalLibrary, *st.library, st.iteration, *st.config);
    std::map<std::string, std::string> meta{{"iteration", std::to_string(st.iteration)},
                                            {"library_generation", std::to_string(st.library->generation())},
                                            {"library_size", std::to_string(st.library->size())},
                                            {"env", st.env->id()},
                                            {"sampler", st.sampler->kind()}};
    const auto sets = static_cast<const Sampler*>(st.sampler)->parameter_sets();
    nn::save_checkpoint(dir_ / artifact::kCheckpoint, sets, meta);

    // Every action in the final library plus any used action a replace step removed.
    const auto& used = st.result->action_usage;
    std::ofstream usage(dir_ / artifact::kUsage, std::ios::binary);
    usage << "id,name,is_chunk,count\n";
    for (const auto& a : st.library->actions()) {
      const auto it = used.find(a.id);
      usage << a.id << "," << st.library->action_name(a.id) << "," << (a.is_chunk() ? 1 : 0) << ","
            << (it == used.end() ? 0 : it->second) << "\n";
    }
    for (const auto& [id, count] : used) {
      if (!st.library->contains(id)) usage << id << "," << st.result->action_names.at(id) << ",1," << count << "\n";
    }
    std::ofstream modes(dir_ / artifact::kModes, std::ios::binary);
    for (const auto& m : st.modes->modes()) modes << m << "\n";
    std::ofstream buffer(dir_ / artifact::kBuffer, std::ios::binary);
    st.buffer->dump(buffer);
    write_text(dir_ / artifact::kDone, "ok\n");
  }

 private:
  fs::path dir_;
  RunArtifacts* artifacts_;
  std::mt19937_64 eval_rng_;
  std::ofstream metrics_;
  std::ofstream eval_;
  std::int64_t last_iteration_ = 0;
};

RunArtifacts run_with_library(const RunConfig& config, const Environment& env, ActionLibrary library) {
  validate(config);
  RunArtifacts artifacts;
  artifacts.dir = run_directory(config);
  fs::create_directories(artifacts.dir);
  ArtifactWriter writer(artifacts.dir, artifacts);
  try {
    artifacts.result = run_training(config, env, library, &writer);
  } catch (const TrainingFailure& f) {
    json j{{"iteration", f.iteration()}, {"cause", f.cause()}};
    write_text(artifacts.dir / artifact::kFailure, j.dump(2) + "\n");
    throw;
  } catch (const std::exception& e) {
    json j{{"iteration", writer.last_iteration()}, {"cause", e.what()}};
    write_text(artifacts.dir / artifact::kFailure, j.dump(2) + "\n");
    throw;
  }
  return artifacts;
}

}  // namespace

fs::path snapshot_path(const fs::path& run_dir, std::int64_t iteration) {
  return run_dir / artifact::kLibraryDir / (iteration_tag(iteration) + ".json");
}

std::vector<std::string> eval_columns() {
  std::vector<std::string> cols = {"iteration",     "visited_states", "modes",          "library_size",
                                   "l1",            "jsd",            "elbo_gap",       "elbo_log_z",
                                   "elbo_estimate", "shortest_parse", "bpe_floor",      "topk_reward",
                                   "topk_diversity"};
  const auto thresholds = default_spearman_thresholds();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    std::ostringstream name;
    name << "spearman_" << std::setprecision(3) << thresholds[i];
    cols.push_back(name.str());
  }
  return cols;
}

std::string eval_csv_line(const EvalRow& row) {
  std::ostringstream out;
  out << row.iteration << "," << row.visited_states << "," << row.modes << "," << row.library_size;
  for (const auto& v : {row.l1, row.jsd, row.elbo_gap, row.elbo_log_z, row.elbo_estimate, row.shortest_parse,
                        row.bpe_floor, row.topk_reward, row.topk_diversity}) {
    out << "," << format_cell(v);
  }
  const std::size_t n = default_spearman_thresholds().size();
  for (std::size_t i = 0; i < n; ++i) out << "," << (i < row.spearman.size() ? format_cell(row.spearman[i]) : "");
  return out.str();
}

EvalRow evaluate(const TrainingState& st, std::mt19937_64& rng) {
  const RunConfig& config = *st.config;
  const Environment& env = *st.env;
  const ActionLibrary& library = *st.library;
  EvalRow row;
  row.iteration = st.iteration;
  row.visited_states = st.iteration * config.batch;
  row.modes = st.modes->count();
  row.library_size = library.size();
  const BackwardPolicy backward = config.backward_policy();
  const bool learned = st.sampler->kind() != "random";

  std::optional<std::vector<TerminalState>> terminals;
  try {
    terminals = env.enumerate_terminal_states();
  } catch (const EnvError&) {
    terminals.reset();
  }
  if (terminals && learned) {
    const auto model = exact_terminal_distribution(st.sampler->policy(), library, *terminals);
    const auto target = target_distribution(*terminals, config.beta);
    row.l1 = l1_distance(model, target);
    row.jsd = jsd(model, target);
    const ElboResult elbo = elbo_gap(st.sampler->policy(), library, backward, config.beta,
                                     static_cast<std::size_t>(config.elbo_samples), rng);
    row.elbo_gap = elbo.gap;
    row.elbo_log_z = elbo.log_z;
    row.elbo_estimate = elbo.estimate;
  }

  const auto top = buffer_top(*st.buffer, 100);
  if (!top.empty()) {
    const auto tk = topk_reward_diversity(env, top, top.size());
    row.topk_reward = tk.mean_reward;
    row.topk_diversity = tk.diversity;
  }
  if (env.kind() == EnvKind::kSequence && !top.empty()) {
    std::vector<std::vector<ActionId>> objects;
    for (const auto& t : top) objects.push_back(*env.symbols(t.state));
    row.shortest_parse = shortest_parse_length(library, objects);
    const std::size_t alphabet = env.atomic_count() - 1;
    row.bpe_floor = bpe_floor(alphabet, objects, config.merges);
  }
  if (config.spearman_samples > 0 && learned && !st.buffer->empty()) {
    std::vector<LikelihoodSample> samples;
    for (const auto& e : st.buffer->sample(static_cast<std::size_t>(config.spearman_samples), rng)) {
      LikelihoodSample s;
      s.reward = e.reward;
      s.log_reward = config.beta * std::log(e.reward);
      s.log_likelihood = estimate_terminal_logprob(st.sampler->policy(), library, backward, e.state,
                                                   static_cast<std::size_t>(config.parse_samples), rng);
      samples.push_back(s);
    }
    row.spearman = spearman_reward_likelihood(samples, default_spearman_thresholds());
  }
  return row;
}

fs::path run_directory(const RunConfig& config) {
  if (!config.out_dir.empty()) return config.out_dir;
  return fs::path(default_output_root()) /
         (config.env + "-" + config.sampler + "-" + config.chunker + "-s" + std::to_string(config.seed));
}

RunArtifacts run(const RunConfig& config) {
  auto env = make_environment(config);
  ActionLibrary library = config.initial_library.empty() ? ActionLibrary(*env)
                                                         : ActionLibrary::load(config.initial_library, *env);
  return run_with_library(config, *env, std::move(library));
}

RunArtifacts transfer(const fs::path& snapshot, RunConfig config, bool keep_chunker) {
  config.initial_library = snapshot.string();
  if (!keep_chunker) config.chunker = "atomic";
  return run(config);
}

// ---------------------------------------------------------------- report

namespace {

struct Stat {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

Stat summarize(const std::vector<double>& v) {
  Stat s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::map<std::string, std::string> config_map(const std::string& echo) {
  std::map<std::string, std::string> out;
  std::istringstream in(echo);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct RunData {
  std::vector<json> metrics;
  std::vector<std::vector<std::string>> eval;  // rows without header
  std::map<std::string, std::int64_t> chunk_usage;
};

RunData load_run(const fs::path& dir) {
  RunData d;
  std::ifstream metrics(dir / artifact::kMetrics);
  if (!metrics) throw std::runtime_error("run directory " + dir.string() + " has no metrics stream");
  std::string line;
  while (std::getline(metrics, line)) {
    if (!line.empty()) d.metrics.push_back(json::parse(line));
  }
  if (d.metrics.empty()) throw std::runtime_error("run directory " + dir.string() + " has an empty metrics stream");
  std::ifstream eval(dir / artifact::kEval);
  bool header = true;
  while (std::getline(eval, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (!line.empty()) d.eval.push_back(split_csv(line));
  }
  std::ifstream usage(dir / artifact::kUsage);
  header = true;
  while (std::getline(usage, line)) {
    if (header) {
      header = false;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() == 4 && cells[2] == "1") d.chunk_usage[cells[1]] += std::stoll(cells[3]);
  }
  return d;
}

double json_number(const json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

}  // namespace

void report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("report needs at least one run directory");
  std::map<std::string, std::string> reference;
  std::vector<RunData> runs;
  for (const auto& dir : run_dirs) {
    auto cfg = config_map(read_text(dir / artifact::kConfig));
    for (const char* ignored : {"seed", "out_dir"}) cfg.erase(ignored);
    if (runs.empty()) {
      reference = cfg;
    } else if (cfg != reference) {
      std::string diff;
      for (const auto& [k, v] : cfg) {
        auto it = reference.find(k);
        if (it == reference.end() || it->second != v) diff += " " + k;
      }
      throw std::invalid_argument("run " + dir.string() + " is incompatible with " + run_dirs.front().string() +
                                  " (differs in:" + diff + ")");
    }
    runs.push_back(load_run(dir));
  }
  fs::create_directories(out_dir);

  std::size_t steps = runs.front().metrics.size();
  for (const auto& r : runs) steps = std::min(steps, r.metrics.size());
  {
    std::ofstream modes(out_dir / "mode_curve.csv");
    std::ofstream loss(out_dir / "loss_curve.csv");
    modes << "iteration,visited_states,modes_mean,modes_sd,n\n";
    loss << "iteration,loss_mean,loss_sd,logZ_mean,logZ_sd,n\n";
    for (std::size_t i = 0; i < steps; ++i) {
      std::vector<double> m, l, z;
      for (const auto& r : runs) {
        m.push_back(json_number(r.metrics[i]["modes_cumulative"]));
        const double lv = json_number(r.metrics[i]["loss"]);
        if (std::isfinite(lv)) l.push_back(lv);
        const double zv = json_number(r.metrics[i]["logZ"]);
        if (std::isfinite(zv)) z.push_back(zv);
      }
      const auto& rec = runs.front().metrics[i];
      const Stat sm = summarize(m), sl = summarize(l), sz = summarize(z);
      modes << rec["iteration"].get<std::int64_t>() << "," << rec["visited_states"].get<std::int64_t>() << ","
            << sm.mean << "," << sm.sd << "," << sm.n << "\n";
      loss << rec["iteration"].get<std::int64_t>() << ",";
      loss << (sl.n ? format_cell(sl.mean) : "") << "," << (sl.n ? format_cell(sl.sd) : "") << ",";
      loss << (sz.n ? format_cell(sz.mean) : "") << "," << (sz.n ? format_cell(sz.sd) : "") << "," << runs.size()
           << "\n";
    }
  }

  const auto columns = eval_columns();
  std::size_t eval_rows = runs.front().eval.size();
  for (const auto& r : runs) eval_rows = std::min(eval_rows, r.eval.size());
  auto eval_stat = [&](std::size_t row, std::size_t col) {
    std::vector<double> v;
    for (const auto& r : runs) {
      const auto& cells = r.eval[row];
      if (col < cells.size() && !cells[col].empty()) v.push_back(std::stod(cells[col]));
    }
    return summarize(v);
  };
  {
    std::ofstream curve(out_dir / "eval_curve.csv");
    curve << "iteration,visited_states";
    for (std::size_t c = 2; c < columns.size(); ++c) curve << "," << columns[c] << "_mean," << columns[c] << "_sd";
    curve << "\n";
    for (std::size_t i = 0; i < eval_rows; ++i) {
      curve << runs.front().eval[i][0] << "," << runs.front().eval[i][1];
      for (std::size_t c = 2; c < columns.size(); ++c) {
        const Stat s = eval_stat(i, c);
        curve << "," << (s.n ? format_cell(s.mean) : "") << "," << (s.n ? format_cell(s.sd) : "");
      }
      curve << "\n";
    }
    std::ofstream summary(out_dir / "eval_summary.csv");
    summary << "metric,mean,sd,n\n";
    if (eval_rows > 0) {
      for (std::size_t c = 2; c < columns.size(); ++c) {
        const Stat s = eval_stat(eval_rows - 1, c);
        if (s.n) summary << columns[c] << "," << format_cell(s.mean) << "," << format_cell(s.sd) << "," << s.n << "\n";
      }
    }
  }
  {
    std::map<std::string, std::vector<double>> per_chunk;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      for (const auto& [name, count] : runs[i].chunk_usage) {
        auto& v = per_chunk[name];
        v.resize(runs.size(), 0.0);
        v[i] = static_cast<double>(count);
      }
    }
    std::ofstream hist(out_dir / "chunk_frequency.csv");
    hist << "chunk,count_mean,count_sd,total\n";
    for (auto& [name, v] : per_chunk) {
      v.resize(runs.size(), 0.0);
      const Stat s = summarize(v);
      double total = 0.0;
      for (double x : v) total += x;
      hist << name << "," << format_cell(s.mean) << "," << format_cell(s.sd) << ","
           << static_cast<std::int64_t>(total) << "\n";
    }
  }
}

// ---------------------------------------------------------------- tools

std::unique_ptr<Environment> environment_for_snapshot(const fs::path& snapshot) {
  const json j = json::parse(read_text(snapshot));
  if (j.contains("config")) return make_environment(parse_config(j.at("config").get<std::string>()));
  const std::string id = j.at("env").get<std::string>();
  const auto alphabet = j.at("alphabet").get<std::vector<std::string>>();
  RunConfig c;
  if (id == "fractal_grid") {
    c.env = "fractal";
  } else if (id == "bitseq" || id == "rna") {
    c.env = id;
    c.length = 128;
  } else if (id == "graph") {
    c.env = "graph";
    c.max_nodes = static_cast<int>(alphabet.size()) - 1;
  } else {
    throw LibraryError("snapshot names unknown environment '" + id + "'");
  }
  return make_environment(c);
}

void inspect_library(const fs::path& snapshot, std::ostream& out) {
  const json j = json::parse(read_text(snapshot));
  auto env = environment_for_snapshot(snapshot);
  const ActionLibrary library = ActionLibrary::load(snapshot, *env);
  out << "env " << library.env_id() << ", generation " << library.generation();
  if (j.contains("iteration")) out << ", iteration " << j.at("iteration").get<std::int64_t>();
  out << "\n" << library.atomic_count() << " atomic actions, " << library.chunk_count() << " chunks\n";
  for (const auto& a : library.actions()) {
    out << std::setw(4) << a.id << "  " << (a.is_chunk() ? "chunk " : a.is_terminal ? "exit  " : "atomic") << "  "
        << library.action_name(a.id);
    if (a.is_chunk()) out << "  (length " << a.expansion.size() << ", added at " << a.added_at << ")";
    out << "\n";
  }
}

void parse_objects(const fs::path& snapshot, const fs::path& objects, std::ostream& out) {
  auto env = environment_for_snapshot(snapshot);
  const auto* seq = dynamic_cast<const SequenceEnv*>(env.get());
  if (seq == nullptr) throw std::invalid_argument("shortest parses are defined for string environments only");
  const ActionLibrary library = ActionLibrary::load(snapshot, *env);
  const auto tokens = library_tokens(library);
  std::ifstream in(objects);
  if (!in) throw std::runtime_error("cannot read " + objects.string());
  std::string line;
  double total = 0.0;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '$')) line.pop_back();
    if (line.empty()) continue;
    const auto symbols = seq->parse_symbols(line);
    const std::size_t n = shortest_parse(symbols, tokens);
    out << line << "\t" << n << "\n";
    total += static_cast<double>(n);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("objects file " + objects.string() + " is empty");
  out << "mean\t" << std::setprecision(6) << total / static_cast<double>(count) << "\n";
}

}  // namespace chunkflow
