#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "chunkflow/config.hpp"
#include "chunkflow/trainers.hpp"

namespace chunkflow {

// Output layout of one run directory.
namespace artifact {
inline constexpr const char* kConfig = "config.txt";
inline constexpr const char* kMetrics = "metrics.jsonl";
inline constexpr const char* kEval = "eval.csv";
inline constexpr const char* kLibraryDir = "library";
inline constexpr const char* kCorpusDir = "corpus";
inline constexpr const char* kFinalLibrary = "library/final.json";
inline constexpr const char* kInitialLibrary = "library/initial.json";
inline constexpr const char* kCheckpoint = "checkpoint.bin";
inline constexpr const char* kUsage = "action_usage.csv";
inline constexpr const char* kModes = "modes.txt";
inline constexpr const char* kBuffer = "buffer.jsonl";
inline constexpr const char* kFailure = "failure.json";
inline constexpr const char* kDone = "done";
}  // namespace artifact

// Snapshot file for the chunk event at `iteration`.
std::filesystem::path snapshot_path(const std::filesystem::path& run_dir, std::int64_t iteration);

// Evaluation columns; absent values are written as empty cells.
struct EvalRow {
  std::int64_t iteration = 0;
  std::int64_t visited_states = 0;
  std::size_t modes = 0;
  std::size_t library_size = 0;
  std::optional<double> l1, jsd;
  std::optional<double> elbo_gap, elbo_log_z, elbo_estimate;
  std::optional<double> shortest_parse, bpe_floor;
  std::optional<double> topk_reward, topk_diversity;
  std::vector<std::optional<double>> spearman;  // one per default threshold, when requested
};

std::vector<std::string> eval_columns();
std::string eval_csv_line(const EvalRow& row);

// Metrics computed from a live training state.
EvalRow evaluate(const TrainingState& state, std::mt19937_64& rng);

struct RunArtifacts {
  std::filesystem::path dir;
  TrainingResult result;
  std::vector<EvalRow> evaluations;
  std::optional<std::string> failure;
};

// Resolves the run directory: out_dir, else <output root>/<env>-<sampler>-<chunker>-s<seed>.
std::filesystem::path run_directory(const RunConfig& config);

// Trains one run, writing artifacts incrementally. A failing run leaves a
// failure record and rethrows the TrainingFailure.
RunArtifacts run(const RunConfig& config);

// Starts a run from the chunks of `snapshot`. The library stays frozen unless
// `keep_chunker` is set, in which case the configured chunker keeps growing it.
RunArtifacts transfer(const std::filesystem::path& snapshot, RunConfig config, bool keep_chunker = false);

// Aggregates completed runs into per-figure CSV files under `out_dir`:
// mode_curve.csv, loss_curve.csv, eval_curve.csv, eval_summary.csv,
// chunk_frequency.csv. Throws if the runs differ in anything but seed and
// output location.
void report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

// Human-readable listing of a library snapshot.
void inspect_library(const std::filesystem::path& snapshot, std::ostream& out);

// Shortest parse of each object (one per line, in the environment's text
// form) under the snapshot's library; prints "<object>\t<tokens>" and the mean.
void parse_objects(const std::filesystem::path& snapshot, const std::filesystem::path& objects, std::ostream& out);

// Environment matching a snapshot's id and alphabet, for the tools above.
std::unique_ptr<Environment> environment_for_snapshot(const std::filesystem::path& snapshot);

}  // namespace chunkflow
