#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "chunkflow/config.hpp"
#include "chunkflow/runner.hpp"

namespace fs = std::filesystem;
using namespace chunkflow;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_summary(const RunArtifacts& a) {
  std::cout << "run directory: " << a.dir.string() << "\n";
  if (!a.result.records.empty()) {
    const auto& last = a.result.records.back();
    std::cout << "iterations " << last.iteration << ", visited states " << last.visited_states << ", modes "
              << last.modes_cumulative << ", library size " << last.library_size << ", chunk events "
              << a.result.chunk_events.size() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Samplers with online action chunking"};
  app.require_subcommand(1);

  std::string config_path;
  bool paper_scale = false;
  auto* train = app.add_subcommand("train", "Train one run from a key=value config; extra --key=value override it");
  train->add_option("config", config_path, "Config file")->required();
  train->add_flag("--paper-scale", paper_scale, "Use the full iteration budgets");
  train->allow_extras();

  std::string snapshot;
  bool keep_chunker = false;
  auto* transfer_cmd = app.add_subcommand("transfer", "Train with the chunks of a library snapshot, frozen by default");
  transfer_cmd->add_option("snapshot", snapshot, "Library snapshot (json)")->required();
  transfer_cmd->add_option("config", config_path, "Config file")->required();
  transfer_cmd->add_flag("--paper-scale", paper_scale, "Use the full iteration budgets");
  transfer_cmd->add_flag("--keep-chunker", keep_chunker, "Keep growing the library with the configured chunker");
  transfer_cmd->allow_extras();

  std::vector<std::string> run_dirs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Aggregate completed runs into per-figure CSV files");
  report_cmd->add_option("dirs", run_dirs, "Run directories")->required();
  report_cmd->add_option("-o,--out", report_out, "Output directory (default: <output root>/report)");

  auto* inspect_cmd = app.add_subcommand("inspect-library", "List the actions of a library snapshot");
  inspect_cmd->add_option("snapshot", snapshot, "Library snapshot (json)")->required();

  std::string objects;
  auto* parse_cmd = app.add_subcommand("parse", "Shortest parse of each object under a library snapshot");
  parse_cmd->add_option("snapshot", snapshot, "Library snapshot (json)")->required();
  parse_cmd->add_option("objects", objects, "One object per line")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed() || transfer_cmd->parsed()) {
      auto* cmd = train->parsed() ? train : transfer_cmd;
      auto overrides = parse_overrides(cmd->remaining());
      if (paper_scale) overrides["paper_scale"] = "true";
      const std::string text = read_file(config_path);
      const RunConfig config = parse_config(text, overrides);
      if (train->parsed()) {
        print_summary(run(config));
      } else {
        const bool keep = keep_chunker || explicit_keys(text, overrides).count("chunker") > 0;
        print_summary(transfer(snapshot, config, keep));
      }
    } else if (report_cmd->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const fs::path out = report_out.empty() ? fs::path(default_output_root()) / "report" : fs::path(report_out);
      report(dirs, out);
      std::cout << "report written to " << out.string() << "\n";
    } else if (inspect_cmd->parsed()) {
      inspect_library(snapshot, std::cout);
    } else if (parse_cmd->parsed()) {
      parse_objects(snapshot, objects, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
