#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "chunkflow/config.hpp"
#include "chunkflow/envs/sequence_env.hpp"
#include "chunkflow/metrics.hpp"
#include "chunkflow/runner.hpp"

namespace py = pybind11;
using namespace chunkflow;

namespace {

using Overrides = std::map<std::string, std::string>;

// "key=value" lines of the normalized configuration as a dict.
py::dict config_dict(const RunConfig& c) {
  py::dict out;
  std::istringstream in(echo_config(c));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    out[py::str(line.substr(0, eq))] = line.substr(eq + 1);
  }
  return out;
}

py::dict summary(const RunArtifacts& a) {
  py::dict out;
  out["dir"] = a.dir.string();
  const auto& records = a.result.records;
  out["iterations"] = records.empty() ? 0 : records.back().iteration;
  out["visited_states"] = records.empty() ? 0 : records.back().visited_states;
  out["modes"] = a.result.mode_curve.empty() ? 0 : a.result.mode_curve.back();
  out["library_size"] = records.empty() ? 0 : records.back().library_size;
  out["chunk_events"] = a.result.chunk_events;
  py::list losses;
  for (const auto& r : records) losses.append(r.loss);
  out["loss"] = losses;
  return out;
}

}  // namespace

PYBIND11_MODULE(_chunkflow, m) {
  m.doc() = "Chunked action discovery for GFlowNets and RL samplers";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "parse_config",
      [](const std::string& text, const Overrides& overrides) { return config_dict(parse_config(text, overrides)); },
      py::arg("text"), py::arg("overrides") = Overrides{},
      "Parse 'key = value' text with overrides; returns the normalized configuration.");
  m.def(
      "echo_config", [](const std::string& text, const Overrides& overrides) { return echo_config(parse_config(text, overrides)); },
      py::arg("text"), py::arg("overrides") = Overrides{});
  m.def(
      "train",
      [](const std::string& text, const Overrides& overrides) {
        const RunConfig config = parse_config(text, overrides);
        const RunArtifacts a = [&] {
          py::gil_scoped_release release;
          return run(config);
        }();
        return summary(a);
      },
      py::arg("text"), py::arg("overrides") = Overrides{}, "Train one run and return a summary of its artifacts.");
  m.def(
      "transfer",
      [](const std::string& snapshot, const std::string& text, const Overrides& overrides, bool keep_chunker) {
        const RunConfig config = parse_config(text, overrides);
        const RunArtifacts a = [&] {
          py::gil_scoped_release release;
          return transfer(snapshot, config, keep_chunker);
        }();
        return summary(a);
      },
      py::arg("snapshot"), py::arg("text"), py::arg("overrides") = Overrides{}, py::arg("keep_chunker") = false);
  m.def(
      "report",
      [](const std::vector<std::string>& dirs, const std::string& out_dir) {
        std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
        report(paths, out_dir);
      },
      py::arg("dirs"), py::arg("out_dir"));
  m.def("inspect_library", [](const std::string& snapshot) {
    std::ostringstream out;
    inspect_library(snapshot, out);
    return out.str();
  });

  m.def("l1_distance", [](const std::vector<double>& p, const std::vector<double>& q) { return l1_distance(p, q); });
  m.def("jsd", [](const std::vector<double>& p, const std::vector<double>& q) { return jsd(p, q); });
  m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman(a, b); });
  m.def(
      "shortest_parse",
      [](const std::vector<ActionId>& s, const std::vector<std::vector<ActionId>>& tokens) {
        return shortest_parse(s, tokens);
      },
      py::arg("symbols"), py::arg("tokens"));
  m.def(
      "bitseq_max_word_tiling",
      [](const std::string& bits, const std::vector<std::string>& words) { return bitseq_max_word_tiling(bits, words); },
      py::arg("bits"), py::arg("words") = BitSequenceParams{}.words);
}
