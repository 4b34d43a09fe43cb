#include "chunkflow/envs/fractal_grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace chunkflow {

namespace {

bool valid_side(int side) {
  if (side < 9) return false;
  const int inner = side - 1;
  return (inner & (inner - 1)) == 0;
}

}  // namespace

RewardTable fractal_landscape_grid(int side, double r0, double r1, double r2) {
  if (!valid_side(side)) throw EnvError("fractal grid side must be 2^k + 1 with k >= 3, got " + std::to_string(side));
  RewardTable grid(side, std::vector<double>(side, r0));
  const int depth = static_cast<int>(std::log(static_cast<double>(side)) / std::log(2.0)) - 2;
  // Negative indices wrap around, as in the numpy original.
  auto cell = [&](int row, int col) -> double& {
    if (row < 0) row += side;
    if (col < 0) col += side;
    return grid.at(row).at(col);
  };

  int x = 0, y = side - 1, size = side, level = depth;
  while (level != 0 && size >= 1) {
    const int max_y = std::min(y, side - 1);
    const int max_x = std::min(x + size - 1, side - 1);

    cell(max_y - 1, x + 1) = r0 + r1 + r2;
    cell(max_y - 1, x) = r0 + r1;
    cell(max_y, x + 1) = r0 + r1;
    cell(max_y, x) = r0 + r1;

    if (level < depth) {
      cell(max_y - 1, max_x - 1) = r0 + r1 + r2;
      cell(max_y - 1, max_x) = r0 + r1;
      cell(max_y, max_x - 1) = r0 + r1;
      cell(max_y, max_x) = r0 + r1;

      cell(y - size + 2, x + 1) = r0 + r1 + r2;
      cell(y - size + 2, x) = r0 + r1;
      cell(y - size + 1, x + 1) = r0 + r1;
      cell(y - size + 1, x) = r0 + r1;
    }

    const int next = size / 2;
    x += next;
    y -= next;
    size = next;
    --level;
  }
  // Vertical flip so row 0 is the start row.
  return RewardTable(grid.rbegin(), grid.rend());
}

FractalGrid::FractalGrid(FractalGridParams params)
    : params_(params), table_(fractal_landscape_grid(params.side, params.r0, params.r1, params.r2)) {
  if (!(params.r0 > 0.0) || params.r1 < 0.0 || params.r2 < 0.0) {
    throw EnvError("fractal grid rewards must satisfy R0 > 0, R1 >= 0, R2 >= 0");
  }
}

std::string FractalGrid::atomic_name(ActionId a) const {
  check_atomic(a);
  static const char* kNames[] = {"UP", "RIGHT", "EXIT"};
  return kNames[a];
}

const GridState& FractalGrid::grid(const EnvState& s) const {
  const auto* g = std::get_if<GridState>(&s);
  if (g == nullptr) throw EnvError("fractal_grid expects a grid state");
  return *g;
}

bool FractalGrid::is_terminal(const EnvState& s) const { return grid(s).exited; }

std::vector<ActionId> FractalGrid::valid_atomic_actions(const EnvState& s) const {
  const GridState& g = grid(s);
  if (g.exited) throw EnvError("no actions at a terminal grid state");
  std::vector<ActionId> out;
  if (g.y < params_.side - 1) out.push_back(kUp);
  if (g.x < params_.side - 1) out.push_back(kRight);
  out.push_back(kExit);
  return out;
}

bool FractalGrid::is_valid_atomic(const EnvState& s, ActionId a) const {
  const GridState& g = grid(s);
  if (g.exited) return false;
  switch (a) {
    case kUp:
      return g.y < params_.side - 1;
    case kRight:
      return g.x < params_.side - 1;
    case kExit:
      return true;
    default:
      return false;
  }
}

EnvState FractalGrid::apply_atomic(const EnvState& s, ActionId a) const {
  if (!is_valid_atomic(s, a)) {
    throw EnvError("action " + std::to_string(a) + " is not valid at " + to_string(s));
  }
  GridState g = grid(s);
  if (a == kUp) ++g.y;
  if (a == kRight) ++g.x;
  if (a == kExit) g.exited = true;
  return g;
}

bool FractalGrid::expansion_feasible(const EnvState& s, std::span<const ActionId> expansion) const {
  const GridState& g = grid(s);
  if (g.exited) return false;
  int x = g.x, y = g.y;
  for (std::size_t i = 0; i < expansion.size(); ++i) {
    switch (expansion[i]) {
      case kUp:
        if (++y > params_.side - 1) return false;
        break;
      case kRight:
        if (++x > params_.side - 1) return false;
        break;
      case kExit:
        if (i + 1 != expansion.size()) return false;
        break;
      default:
        return false;
    }
  }
  return true;
}

std::optional<EnvState> FractalGrid::undo_candidate(const EnvState& s, ActionId a) const {
  GridState g = grid(s);
  if (a == kExit) {
    if (!g.exited) return std::nullopt;
    g.exited = false;
    return g;
  }
  if (g.exited) return std::nullopt;
  if (a == kUp) {
    if (g.y == 0) return std::nullopt;
    --g.y;
  } else {
    if (g.x == 0) return std::nullopt;
    --g.x;
  }
  return g;
}

double FractalGrid::reward(const EnvState& x) const {
  const GridState& g = grid(x);
  if (!g.exited) throw EnvError("reward of a non-terminal grid state");
  return table_[g.y][g.x];
}

bool FractalGrid::is_mode(const EnvState&, double reward) const { return reward == peak_reward(); }

std::int64_t FractalGrid::potential(const EnvState& s) const {
  const GridState& g = grid(s);
  return g.x + g.y;
}

std::size_t FractalGrid::distance(const EnvState& a, const EnvState& b) const {
  const GridState& p = grid(a);
  const GridState& q = grid(b);
  return static_cast<std::size_t>(p.x != q.x) + static_cast<std::size_t>(p.y != q.y);
}

std::string FractalGrid::to_string(const EnvState& s) const {
  const GridState& g = grid(s);
  return std::to_string(g.x) + "," + std::to_string(g.y) + (g.exited ? "$" : "");
}

EnvState FractalGrid::from_string(const std::string& text) const {
  GridState g;
  std::string body = text;
  if (!body.empty() && body.back() == '$') {
    g.exited = true;
    body.pop_back();
  }
  const auto comma = body.find(',');
  if (comma == std::string::npos) throw EnvError("bad grid state '" + text + "'");
  try {
    g.x = std::stoi(body.substr(0, comma));
    g.y = std::stoi(body.substr(comma + 1));
  } catch (const std::exception&) {
    throw EnvError("bad grid state '" + text + "'");
  }
  if (g.x < 0 || g.y < 0 || g.x >= params_.side || g.y >= params_.side) {
    throw EnvError("grid state out of range: '" + text + "'");
  }
  return g;
}

std::vector<TerminalState> FractalGrid::enumerate_terminal_states() const {
  std::vector<TerminalState> out;
  out.reserve(static_cast<std::size_t>(params_.side) * params_.side);
  for (int y = 0; y < params_.side; ++y)
    for (int x = 0; x < params_.side; ++x) out.push_back({GridState{x, y, true}, table_[y][x]});
  return out;
}

void FractalGrid::write_reward_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,y,reward\n";
  out.precision(17);
  for (int y = 0; y < params_.side; ++y)
    for (int x = 0; x < params_.side; ++x) out << x << "," << y << "," << table_[y][x] << "\n";
}

}  // namespace chunkflow
