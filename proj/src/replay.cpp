#include "chunkflow/replay.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace chunkflow {

std::size_t state_distance(const Environment& env, const EnvState& a, const EnvState& b) {
  if (a.index() != b.index()) throw std::invalid_argument("cannot compare states of different kinds");
  return env.distance(a, b);
}

DiversityBuffer::DiversityBuffer(const Environment& env, std::size_t capacity, std::size_t cutoff)
    : env_(&env), capacity_(capacity), cutoff_(cutoff) {
  if (capacity == 0) throw std::invalid_argument("buffer capacity must be positive");
}

double DiversityBuffer::min_reward() const {
  if (entries_.empty()) throw std::logic_error("empty buffer has no minimum reward");
  return entries_.back().reward;
}

void DiversityBuffer::sort_and_truncate() {
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const BufferEntry& a, const BufferEntry& b) { return a.reward > b.reward; });
  if (entries_.size() > capacity_) entries_.resize(capacity_);
}

InsertReport DiversityBuffer::insert_batch(const std::vector<BufferEntry>& batch) {
  InsertReport report;
  if (!full()) {
    entries_.insert(entries_.end(), batch.begin(), batch.end());
    report.appended = batch.size();
    sort_and_truncate();
    return report;
  }
  const double floor = min_reward();
  for (const auto& cand : batch) {
    if (cand.reward < floor) {
      ++report.rejected;
      continue;
    }
    std::size_t nearest = 0;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const std::size_t d = state_distance(*env_, cand.state, entries_[i].state);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    if (best > cutoff_) {
      entries_.push_back(cand);
      ++report.diverse;
    } else if (cand.reward > entries_[nearest].reward) {
      entries_[nearest] = cand;
      ++report.replaced;
    } else {
      ++report.rejected;
    }
  }
  sort_and_truncate();
  return report;
}

std::vector<BufferEntry> DiversityBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (n == 0) return {};
  if (entries_.empty()) throw std::logic_error("cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
  std::vector<BufferEntry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(entries_[pick(rng)]);
  return out;
}

void DiversityBuffer::dump(std::ostream& out) const {
  for (const auto& e : entries_) {
    nlohmann::json j{{"state", env_->to_string(e.state)}, {"reward", e.reward}};
    out << j.dump() << "\n";
  }
}

}  // namespace chunkflow
