#pragma once

#include <filesystem>
#include <ostream>
#include <random>
#include <vector>

#include "chunkflow/envs/env.hpp"

namespace chunkflow {

struct BufferEntry {
  EnvState state;
  double reward = 0.0;
};

struct InsertReport {
  std::size_t appended = 0;     // buffer not yet full
  std::size_t diverse = 0;      // farther than the cutoff from every entry
  std::size_t replaced = 0;     // displaced a lower-reward nearest neighbour
  std::size_t rejected = 0;
};

// Reward-sorted buffer that stays diverse once full: a candidate enters only
// if it is far from all entries or beats its nearest neighbour.
class DiversityBuffer {
 public:
  DiversityBuffer(const Environment& env, std::size_t capacity, std::size_t cutoff);

  InsertReport insert_batch(const std::vector<BufferEntry>& batch);
  // Uniform with replacement.
  std::vector<BufferEntry> sample(std::size_t n, std::mt19937_64& rng) const;

  const std::vector<BufferEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool full() const { return entries_.size() >= capacity_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cutoff() const { return cutoff_; }
  double min_reward() const;

  // One JSON object per line: {"state": ..., "reward": ...}.
  void dump(std::ostream& out) const;

 private:
  void sort_and_truncate();

  const Environment* env_;
  std::size_t capacity_;
  std::size_t cutoff_;
  std::vector<BufferEntry> entries_;
};

std::size_t state_distance(const Environment& env, const EnvState& a, const EnvState& b);

}  // namespace chunkflow
