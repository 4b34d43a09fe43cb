#include "chunkflow/action_library.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace chunkflow {

using nlohmann::json;

ActionLibrary::ActionLibrary(const Environment& env)
    : env_id_(env.id()), atomic_names_(env.atomic_names()), terminal_(env.terminal_action()) {
  for (std::size_t a = 0; a < atomic_names_.size(); ++a) {
    const auto id = static_cast<ActionId>(a);
    actions_.push_back(Action{id, {id}, id == terminal_, 0});
  }
  next_id_ = static_cast<ActionId>(atomic_names_.size());
  reindex();
}

void ActionLibrary::reindex() {
  positions_.clear();
  by_expansion_.clear();
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    positions_[actions_[i].id] = i;
    by_expansion_[actions_[i].expansion] = actions_[i].id;
  }
}

const Action& ActionLibrary::action(ActionId id) const { return actions_[position(id)]; }

std::size_t ActionLibrary::position(ActionId id) const {
  auto it = positions_.find(id);
  if (it == positions_.end()) throw LibraryError("unknown action id " + std::to_string(id));
  return it->second;
}

ActionId ActionLibrary::find(std::span<const ActionId> expansion) const {
  auto it = by_expansion_.find(std::vector<ActionId>(expansion.begin(), expansion.end()));
  return it == by_expansion_.end() ? -1 : it->second;
}

std::string ActionLibrary::action_name(ActionId id) const {
  const Action& a = action(id);
  const bool compact = std::all_of(a.expansion.begin(), a.expansion.end(),
                                   [&](ActionId x) { return atomic_names_[x].size() == 1; });
  std::string out;
  for (std::size_t i = 0; i < a.expansion.size(); ++i) {
    if (i > 0 && !compact) out += '+';
    out += atomic_names_[a.expansion[i]];
  }
  return out;
}

ActionMask ActionLibrary::valid_actions(const Environment& env, const EnvState& s) const {
  if (env.is_terminal(s)) throw LibraryError("no valid actions at terminal state " + env.to_string(s));
  ActionMask mask(actions_.size(), 0);
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    const auto& e = actions_[i].expansion;
    mask[i] = e.size() == 1 ? env.is_valid_atomic(s, e[0]) : env.expansion_feasible(s, e);
  }
  return mask;
}

bool ActionLibrary::is_valid(const Environment& env, const EnvState& s, ActionId id) const {
  if (env.is_terminal(s)) return false;
  const auto& e = expand(id);
  return e.size() == 1 ? env.is_valid_atomic(s, e[0]) : env.expansion_feasible(s, e);
}

EnvState ActionLibrary::apply_action(const Environment& env, const EnvState& s, ActionId id) const {
  if (!is_valid(env, s, id)) {
    throw LibraryError("action " + action_name(id) + " is not valid at " + env.to_string(s));
  }
  return env.apply_expansion(s, expand(id));
}

void ActionLibrary::check_chunk(std::span<const ActionId> expansion) const {
  if (expansion.size() < 2) throw LibraryError("a chunk needs at least two atomic actions");
  for (ActionId a : expansion) {
    if (a < 0 || a >= static_cast<ActionId>(atomic_names_.size())) {
      throw LibraryError("chunk expansion holds non-atomic id " + std::to_string(a));
    }
    if (a == terminal_) throw LibraryError("terminal action " + atomic_names_[a] + " cannot appear inside a chunk");
  }
}

ActionLibrary::AddResult ActionLibrary::add_chunk(std::vector<ActionId> expansion, std::int64_t iteration) {
  check_chunk(expansion);
  if (by_expansion_.count(expansion)) return AddResult::kDuplicate;
  actions_.push_back(Action{next_id_++, std::move(expansion), false, iteration});
  positions_[actions_.back().id] = actions_.size() - 1;
  by_expansion_[actions_.back().expansion] = actions_.back().id;
  ++generation_;
  return AddResult::kAdded;
}

void ActionLibrary::replace_chunks(const std::vector<std::vector<ActionId>>& expansions, std::int64_t iteration) {
  for (const auto& e : expansions) check_chunk(e);
  actions_.resize(atomic_names_.size());
  reindex();
  for (const auto& e : expansions) {
    if (by_expansion_.count(e)) continue;
    actions_.push_back(Action{next_id_++, e, false, iteration});
    positions_[actions_.back().id] = actions_.size() - 1;
    by_expansion_[e] = actions_.back().id;
  }
  ++generation_;
}

std::string ActionLibrary::to_json() const {
  json j;
  j["env"] = env_id_;
  j["alphabet"] = atomic_names_;
  j["generation"] = generation_;
  j["next_id"] = next_id_;
  json actions = json::array();
  for (const auto& a : actions_) {
    std::vector<std::string> names;
    for (ActionId x : a.expansion) names.push_back(atomic_names_[x]);
    actions.push_back({{"id", a.id}, {"expansion", names}, {"added_at", a.added_at}});
  }
  j["actions"] = std::move(actions);
  return j.dump(1);
}

ActionLibrary ActionLibrary::from_json(const std::string& text, const Environment& env) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw LibraryError(std::string("library snapshot is not valid json: ") + e.what());
  }
  ActionLibrary lib(env);
  const auto alphabet = j.at("alphabet").get<std::vector<std::string>>();
  if (alphabet != lib.atomic_names_) {
    throw LibraryError("library snapshot alphabet does not match environment " + env.id());
  }
  auto index_of = [&](const std::string& name) {
    auto it = std::find(alphabet.begin(), alphabet.end(), name);
    if (it == alphabet.end()) throw LibraryError("unknown atomic action '" + name + "' in snapshot");
    return static_cast<ActionId>(it - alphabet.begin());
  };
  lib.actions_.clear();
  for (const auto& rec : j.at("actions")) {
    Action a;
    a.id = rec.at("id").get<ActionId>();
    a.added_at = rec.value("added_at", std::int64_t{0});
    for (const auto& name : rec.at("expansion")) a.expansion.push_back(index_of(name.get<std::string>()));
    const std::size_t pos = lib.actions_.size();
    if (pos < alphabet.size()) {
      if (a.id != static_cast<ActionId>(pos) || a.expansion != std::vector<ActionId>{a.id}) {
        throw LibraryError("library snapshot must list atomic actions first, in id order");
      }
      a.is_terminal = a.id == lib.terminal_;
    } else {
      lib.check_chunk(a.expansion);
      if (a.id < static_cast<ActionId>(alphabet.size())) throw LibraryError("chunk id collides with an atomic id");
    }
    lib.actions_.push_back(std::move(a));
  }
  if (lib.actions_.size() < alphabet.size()) throw LibraryError("library snapshot is missing atomic actions");
  lib.reindex();
  if (lib.positions_.size() != lib.actions_.size()) throw LibraryError("library snapshot repeats an action id");
  if (lib.by_expansion_.size() != lib.actions_.size()) throw LibraryError("library snapshot repeats an expansion");
  ActionId max_id = 0;
  for (const auto& a : lib.actions_) max_id = std::max(max_id, a.id);
  lib.next_id_ = std::max<ActionId>(j.value("next_id", max_id + 1), max_id + 1);
  lib.generation_ = j.value("generation", std::uint64_t{0});
  return lib;
}

void ActionLibrary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write library snapshot " + path.string());
  out << to_json() << "\n";
}

ActionLibrary ActionLibrary::load(const std::filesystem::path& path, const Environment& env) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read library snapshot " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str(), env);
}

bool ActionLibrary::operator==(const ActionLibrary& other) const {
  if (env_id_ != other.env_id_ || atomic_names_ != other.atomic_names_ || generation_ != other.generation_ ||
      actions_.size() != other.actions_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    const Action& a = actions_[i];
    const Action& b = other.actions_[i];
    if (a.id != b.id || a.expansion != b.expansion || a.is_terminal != b.is_terminal || a.added_at != b.added_at) {
      return false;
    }
  }
  return true;
}

}  // namespace chunkflow
