#pragma once

// Desk-scale goal-conditioned mazes: a continuous point mass and a discrete
// 4-connected gridworld sharing one maze description and one action type.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gas {

struct Vec2 {
  float x = 0.0f;
  float y = 0.0f;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Dynamics : std::uint8_t { point_mass = 0, grid = 1 };

std::string_view to_string(Dynamics d);
Dynamics parse_dynamics(std::string_view text);

/// Agent position in maze length units; x runs along columns, y along rows.
struct EnvState {
  Vec2 position;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Velocity delta; each component is clipped to [-action_limit, action_limit].
struct EnvAction {
  Vec2 delta;
};

class MazeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wall/free occupancy grid with start and goal candidate cells.
///
/// Text form: one row per line, '#' wall, '.' free, 'S' start candidate,
/// 'G' goal candidate. Everything outside the grid counts as wall.
class Maze {
 public:
  static Maze parse(std::string_view text, double cell_size = 1.0);
  static Maze load(const std::filesystem::path& path, double cell_size = 1.0);
  static Maze open(int rows, int cols, double cell_size = 1.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double cell_size() const { return cell_size_; }
  double width() const { return cols_ * cell_size_; }
  double height() const { return rows_ * cell_size_; }

  bool inside(Cell c) const { return c.row >= 0 && c.row < rows_ && c.col >= 0 && c.col < cols_; }
  bool is_free(Cell c) const { return inside(c) && free_[index(c)]; }
  bool is_free(Vec2 p) const { return is_free(cell_at(p)); }
  Cell cell_at(Vec2 p) const;
  Vec2 center(Cell c) const;

  const std::vector<Cell>& starts() const { return starts_; }
  const std::vector<Cell>& goals() const { return goals_; }
  std::vector<Cell> free_cells() const;

  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols_ + c.col; }
  Cell cell(std::size_t index) const {
    return {static_cast<int>(index / cols_), static_cast<int>(index % cols_)};
  }

  /// Round-trips through parse().
  std::string to_text() const;

 private:
  void validate() const;

  int rows_ = 0;
  int cols_ = 0;
  double cell_size_ = 1.0;
  std::vector<bool> free_;
  std::vector<Cell> starts_;
  std::vector<Cell> goals_;
};

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Minimum 4-connected step count between two free cells, or kUnreachable.
int bfs_distance(const Maze& maze, Cell a, Cell b);

/// Step counts from `source` to every cell (kUnreachable for walls and
/// disconnected cells), indexed by Maze::index.
std::vector<int> bfs_field(const Maze& maze, Cell source);

/// Maze plus dynamics parameters; immutable and shared by every rollout.
struct Env {
  Maze maze;
  Dynamics dynamics = Dynamics::grid;
  double action_limit = 1.0;
  double success_radius = 0.5;

  bool valid(const EnvState& s) const { return maze.is_free(s.position); }
  EnvAction clip(EnvAction a) const;
  EnvState state_at(Cell c) const { return {maze.center(c)}; }

  /// Environment steps needed to cross one cell.
  int steps_per_cell() const;
};

/// Deterministic transition. Point mass: position += clipped action, a blocked
/// axis component is cancelled (x first, then y). Grid: the dominant action
/// axis selects a 4-connected move, |a| below half the limit stays put, and a
/// move into a wall stays put.
EnvState step(const Env& env, const EnvState& state, const EnvAction& action);

/// Sparse goal reward: 1 iff ||next - goal|| < epsilon.
int reward(const EnvState& next, const EnvState& goal, double epsilon);

}  // namespace gas
