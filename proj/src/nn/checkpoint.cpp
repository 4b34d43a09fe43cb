#include "chunkflow/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace chunkflow::nn {

namespace {

constexpr std::array<char, 4> kMagic = {'C', 'F', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), bytes.size())) throw std::runtime_error("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw std::runtime_error("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::map<std::string, std::string>& metadata) {
  save_checkpoint(path, std::vector<const ParameterSet*>{&params}, metadata);
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const ParameterSet*>& sets,
                     const std::map<std::string, std::string>& metadata) {
  std::set<std::string> names;
  std::size_t count = 0;
  for (const auto* set : sets) {
    for (const auto& p : *set) {
      if (!names.insert(p.name).second) throw std::invalid_argument("duplicate parameter name " + p.name);
      ++count;
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(count));
  for (const auto* set : sets) {
    for (const auto& p : *set) {
      put_string(out, p.name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
      for (auto d : p.value.shape()) put<std::uint64_t>(out, d);
      for (double v : p.value.values()) put<double>(out, v);
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 4> magic;
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error(path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto n_meta = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(in);
    ck.metadata[k] = get_string(in);
  }
  const auto n_params = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = get_string(in);
    const auto rank = get<std::uint32_t>(in);
    if (rank > 2) throw std::runtime_error("checkpoint tensor " + name + " has unsupported rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
    Tensor t(shape);
    for (double& v : t.values()) v = get<double>(in);
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  return load_checkpoint(path, std::vector<ParameterSet*>{&params});
}

std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path,
                                                   const std::vector<ParameterSet*>& sets) {
  Checkpoint ck = read_checkpoint(path);
  std::size_t count = 0;
  for (auto* set : sets) count += set->size();
  if (ck.tensors.size() != count) {
    throw std::runtime_error("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model has " +
                             std::to_string(count));
  }
  for (auto* set : sets) {
    for (auto& p : *set) {
      auto it = ck.tensors.find(p.name);
      if (it == ck.tensors.end()) throw std::runtime_error("checkpoint is missing parameter " + p.name);
      if (!it->second.same_shape(p.value)) {
        throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": " + shape_string(it->second.shape()) +
                                 " vs " + shape_string(p.value.shape()));
      }
      p.value = it->second;
    }
  }
  return ck.metadata;
}

}  // namespace chunkflow::nn
