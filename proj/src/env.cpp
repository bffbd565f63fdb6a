#include "gas/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "gas/io.hpp"

namespace gas {

double distance(Vec2 a, Vec2 b) {
  const double dx = static_cast<double>(a.x) - b.x;
  const double dy = static_cast<double>(a.y) - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

std::string_view to_string(Dynamics d) { return d == Dynamics::grid ? "grid" : "point_mass"; }

Dynamics parse_dynamics(std::string_view text) {
  if (text == "grid") return Dynamics::grid;
  if (text == "point_mass" || text == "point") return Dynamics::point_mass;
  throw std::invalid_argument("unknown dynamics '" + std::string(text) + "' (expected grid|point_mass)");
}

Maze Maze::parse(std::string_view text, double cell_size) {
  if (!(cell_size > 0.0)) throw MazeError("cell size must be positive");
  Maze maze;
  maze.cell_size_ = cell_size;
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw MazeError("maze text is empty");
  maze.rows_ = static_cast<int>(lines.size());
  maze.cols_ = static_cast<int>(lines.front().size());
  maze.free_.assign(static_cast<std::size_t>(maze.rows_) * maze.cols_, false);
  for (int r = 0; r < maze.rows_; ++r) {
    const auto& line = lines[static_cast<std::size_t>(r)];
    if (static_cast<int>(line.size()) != maze.cols_) {
      throw MazeError("maze row " + std::to_string(r) + " has width " + std::to_string(line.size()) +
                      ", expected " + std::to_string(maze.cols_));
    }
    for (int c = 0; c < maze.cols_; ++c) {
      const char ch = line[static_cast<std::size_t>(c)];
      const Cell cell{r, c};
      switch (ch) {
        case '#':
          break;
        case '.':
          maze.free_[maze.index(cell)] = true;
          break;
        case 'S':
          maze.free_[maze.index(cell)] = true;
          maze.starts_.push_back(cell);
          break;
        case 'G':
          maze.free_[maze.index(cell)] = true;
          maze.goals_.push_back(cell);
          break;
        default:
          throw MazeError(std::string("unexpected maze character '") + ch + "' at row " + std::to_string(r));
      }
    }
  }
  maze.validate();
  return maze;
}

Maze Maze::load(const std::filesystem::path& path, double cell_size) {
  return parse(io::read_file(path), cell_size);
}

Maze Maze::open(int rows, int cols, double cell_size) {
  if (rows <= 0 || cols <= 0) throw MazeError("maze dimensions must be positive");
  std::string text;
  for (int r = 0; r < rows; ++r) {
    text.append(static_cast<std::size_t>(cols), '.');
    text.push_back('\n');
  }
  return parse(text, cell_size);
}

void Maze::validate() const {
  if (std::none_of(free_.begin(), free_.end(), [](bool f) { return f; })) {
    throw MazeError("maze has no free cell");
  }
  for (const auto& s : starts_) {
    const auto field = bfs_field(*this, s);
    for (const auto& g : goals_) {
      if (field[index(g)] == kUnreachable) {
        throw MazeError("goal (" + std::to_string(g.row) + "," + std::to_string(g.col) +
                        ") is unreachable from start (" + std::to_string(s.row) + "," + std::to_string(s.col) +
                        ")");
      }
    }
  }
}

Cell Maze::cell_at(Vec2 p) const {
  return {static_cast<int>(std::floor(p.y / cell_size_)), static_cast<int>(std::floor(p.x / cell_size_))};
}

Vec2 Maze::center(Cell c) const {
  return {static_cast<float>((c.col + 0.5) * cell_size_), static_cast<float>((c.row + 0.5) * cell_size_)};
}

std::vector<Cell> Maze::free_cells() const {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < free_.size(); ++i) {
    if (free_[i]) out.push_back(cell(i));
  }
  return out;
}

std::string Maze::to_text() const {
  std::string text;
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      const Cell cell{r, c};
      char ch = is_free(cell) ? '.' : '#';
      if (std::find(starts_.begin(), starts_.end(), cell) != starts_.end()) ch = 'S';
      if (std::find(goals_.begin(), goals_.end(), cell) != goals_.end()) ch = 'G';
      text.push_back(ch);
    }
    text.push_back('\n');
  }
  return text;
}

std::vector<int> bfs_field(const Maze& maze, Cell source) {
  std::vector<int> dist(static_cast<std::size_t>(maze.rows()) * maze.cols(), kUnreachable);
  if (!maze.is_free(source)) return dist;
  std::deque<Cell> queue{source};
  dist[maze.index(source)] = 0;
  constexpr int kDr[4] = {-1, 1, 0, 0};
  constexpr int kDc[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    const int d = dist[maze.index(c)];
    for (int k = 0; k < 4; ++k) {
      const Cell n{c.row + kDr[k], c.col + kDc[k]};
      if (maze.is_free(n) && dist[maze.index(n)] == kUnreachable) {
        dist[maze.index(n)] = d + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

int bfs_distance(const Maze& maze, Cell a, Cell b) {
  if (!maze.is_free(a) || !maze.is_free(b)) return kUnreachable;
  return bfs_field(maze, a)[maze.index(b)];
}

EnvAction Env::clip(EnvAction a) const {
  const float lim = static_cast<float>(action_limit);
  auto clamp = [lim](float v) { return std::isfinite(v) ? std::clamp(v, -lim, lim) : 0.0f; };
  return {{clamp(a.delta.x), clamp(a.delta.y)}};
}

int Env::steps_per_cell() const {
  if (dynamics == Dynamics::grid) return 1;
  return std::max(1, static_cast<int>(std::ceil(maze.cell_size() / action_limit - 1e-9)));
}

EnvState step(const Env& env, const EnvState& state, const EnvAction& action) {
  const EnvAction a = env.clip(action);
  if (env.dynamics == Dynamics::grid) {
    const float ax = std::abs(a.delta.x), ay = std::abs(a.delta.y);
    if (std::max(ax, ay) < 0.5f * static_cast<float>(env.action_limit)) return state;
    Cell target = env.maze.cell_at(state.position);
    if (ax >= ay) {
      target.col += a.delta.x > 0 ? 1 : -1;
    } else {
      target.row += a.delta.y > 0 ? 1 : -1;
    }
    return env.maze.is_free(target) ? EnvState{env.maze.center(target)} : state;
  }
  Vec2 p = state.position;
  const Vec2 moved_x{p.x + a.delta.x, p.y};
  if (env.maze.is_free(moved_x)) p = moved_x;
  const Vec2 moved_y{p.x, p.y + a.delta.y};
  if (env.maze.is_free(moved_y)) p = moved_y;
  return {p};
}

int reward(const EnvState& next, const EnvState& goal, double epsilon) {
  return distance(next.position, goal.position) < epsilon ? 1 : 0;
}

}  // namespace gas
