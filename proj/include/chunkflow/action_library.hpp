#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chunkflow/envs/env.hpp"

namespace chunkflow {

class LibraryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Action {
  ActionId id = 0;
  std::vector<ActionId> expansion;  // atomic ids; length 1 for atomics
  bool is_terminal = false;
  std::int64_t added_at = 0;        // training iteration that introduced it

  bool is_chunk() const { return expansion.size() > 1; }
};

// Position of an action inside the current library; logits and masks are
// indexed by position, while ids stay stable across generations.
using ActionMask = std::vector<std::uint8_t>;

// The evolving action set: fixed atomics followed by chunks. Copies are
// independent snapshots.
class ActionLibrary {
 public:
  enum class AddResult { kAdded, kDuplicate };

  explicit ActionLibrary(const Environment& env);

  const std::string& env_id() const { return env_id_; }
  const std::vector<std::string>& atomic_names() const { return atomic_names_; }
  std::size_t atomic_count() const { return atomic_names_.size(); }
  ActionId terminal_action() const { return terminal_; }

  std::size_t size() const { return actions_.size(); }
  std::size_t chunk_count() const { return actions_.size() - atomic_names_.size(); }
  std::uint64_t generation() const { return generation_; }
  const std::vector<Action>& actions() const { return actions_; }
  const Action& at(std::size_t position) const { return actions_.at(position); }
  const Action& action(ActionId id) const;
  std::size_t position(ActionId id) const;
  bool contains(ActionId id) const { return positions_.count(id) != 0; }
  // Id of the action whose expansion is exactly `expansion`, or -1.
  ActionId find(std::span<const ActionId> expansion) const;

  std::span<const ActionId> expand(ActionId id) const { return action(id).expansion; }
  // Input tokens of the action encoder.
  std::span<const ActionId> action_token_sequence(ActionId id) const { return expand(id); }
  std::string action_name(ActionId id) const;

  ActionMask valid_actions(const Environment& env, const EnvState& s) const;
  bool is_valid(const Environment& env, const EnvState& s, ActionId id) const;
  EnvState apply_action(const Environment& env, const EnvState& s, ActionId id) const;

  AddResult add_chunk(std::vector<ActionId> expansion, std::int64_t iteration = 0);
  void replace_chunks(const std::vector<std::vector<ActionId>>& expansions, std::int64_t iteration = 0);

  std::string to_json() const;
  static ActionLibrary from_json(const std::string& text, const Environment& env);
  void save(const std::filesystem::path& path) const;
  static ActionLibrary load(const std::filesystem::path& path, const Environment& env);

  bool operator==(const ActionLibrary& other) const;

 private:
  void check_chunk(std::span<const ActionId> expansion) const;
  void reindex();

  std::string env_id_;
  std::vector<std::string> atomic_names_;
  ActionId terminal_ = 0;
  std::vector<Action> actions_;
  std::map<ActionId, std::size_t> positions_;
  std::map<std::vector<ActionId>, ActionId> by_expansion_;
  ActionId next_id_ = 0;
  std::uint64_t generation_ = 0;
};

}  // namespace chunkflow
