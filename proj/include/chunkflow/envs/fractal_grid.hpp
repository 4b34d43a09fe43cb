#pragma once

#include <filesystem>
#include <vector>

#include "chunkflow/envs/env.hpp"

namespace chunkflow {

// side x side table indexed [y][x], y = 0 at the start row.
using RewardTable = std::vector<std::vector<double>>;

// Recursive corner-filling landscape: background R0, "ring" cells R0+R1 and
// peak cells R0+R1+R2. `side` must be 2^k + 1 with k >= 3.
RewardTable fractal_landscape_grid(int side, double r0, double r1, double r2);

struct FractalGridParams {
  int side = 65;
  double r0 = 0.1;
  double r1 = 0.5;
  double r2 = 2.0;
};

class FractalGrid final : public Environment {
 public:
  static constexpr ActionId kUp = 0;
  static constexpr ActionId kRight = 1;
  static constexpr ActionId kExit = 2;

  explicit FractalGrid(FractalGridParams params);

  std::string id() const override { return "fractal_grid"; }
  EnvKind kind() const override { return EnvKind::kGrid; }
  std::size_t atomic_count() const override { return 3; }
  std::string atomic_name(ActionId a) const override;
  ActionId terminal_action() const override { return kExit; }

  EnvState initial_state() const override { return GridState{}; }
  bool is_terminal(const EnvState& s) const override;
  std::vector<ActionId> valid_atomic_actions(const EnvState& s) const override;
  bool is_valid_atomic(const EnvState& s, ActionId a) const override;
  EnvState apply_atomic(const EnvState& s, ActionId a) const override;
  bool expansion_feasible(const EnvState& s, std::span<const ActionId> expansion) const override;

  double reward(const EnvState& x) const override;
  bool is_mode(const EnvState& x, double reward) const override;
  std::int64_t potential(const EnvState& s) const override;
  std::size_t distance(const EnvState& a, const EnvState& b) const override;

  std::string to_string(const EnvState& s) const override;
  EnvState from_string(const std::string& text) const override;
  std::vector<TerminalState> enumerate_terminal_states() const override;

  const FractalGridParams& params() const { return params_; }
  const RewardTable& table() const { return table_; }
  double peak_reward() const { return params_.r0 + params_.r1 + params_.r2; }

  // One "x,y,reward" row per cell.
  void write_reward_csv(const std::filesystem::path& path) const;

 protected:
  std::optional<EnvState> undo_candidate(const EnvState& s, ActionId a) const override;
  void check_enumerable() const override {}

 private:
  const GridState& grid(const EnvState& s) const;

  FractalGridParams params_;
  RewardTable table_;
};

}  // namespace chunkflow
