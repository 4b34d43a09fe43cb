#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "chunkflow/nn/tape.hpp"

namespace chunkflow::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers and floats little-endian:
//   "CFCK" | u32 version | u32 n_meta | n_meta x (str key, str value)
//   | u32 n_params | n_params x (str name, u32 rank, rank x u64 dim, f64 values...)
// where str is u32 byte length followed by the bytes.
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::map<std::string, std::string>& metadata = {});
// Several sets in one file; parameter names must be unique across them.
void save_checkpoint(const std::filesystem::path& path, const std::vector<const ParameterSet*>& sets,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Loads values into an existing set; names and shapes must match exactly.
std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path, ParameterSet& params);
std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path,
                                                   const std::vector<ParameterSet*>& sets);

}  // namespace chunkflow::nn
