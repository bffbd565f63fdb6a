#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "gas/dataset.hpp"

namespace gas {
namespace {

constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};

class Generator {
 public:
  Generator(const Env& env, const GenerationConfig& cfg, Rng& rng)
      : env_(env), cfg_(cfg), rng_(rng), free_(env.maze.free_cells()) {}

  const std::vector<int>& field(Cell goal) {
    const auto key = env_.maze.index(goal);
    auto it = fields_.find(key);
    if (it == fields_.end()) it = fields_.emplace(key, bfs_field(env_.maze, goal)).first;
    return it->second;
  }

  Cell random_free() { return free_[rng_.uniform_int(free_.size())]; }

  Vec2 start_position(Cell c) {
    Vec2 p = env_.maze.center(c);
    if (env_.dynamics == Dynamics::point_mass) {
      const double j = 0.3 * env_.maze.cell_size();
      p.x += static_cast<float>(rng_.uniform(-j, j));
      p.y += static_cast<float>(rng_.uniform(-j, j));
    }
    return p;
  }

  bool at_goal(Vec2 p, Cell goal) const {
    if (env_.dynamics == Dynamics::grid) return env_.maze.cell_at(p) == goal;
    return distance(p, env_.maze.center(goal)) < env_.success_radius;
  }

  /// Noisy shortest-path action toward `goal`.
  Vec2 expert_action(Vec2 p, Cell goal) {
    const auto& dist = field(goal);
    const Cell here = env_.maze.cell_at(p);
    Vec2 target = env_.maze.center(goal);
    if (!(here == goal)) {
      const int d = dist[env_.maze.index(here)];
      int options[4];
      int count = 0;
      for (int k = 0; k < 4; ++k) {
        const Cell n{here.row + kDr[k], here.col + kDc[k]};
        if (env_.maze.is_free(n) && dist[env_.maze.index(n)] == d - 1) options[count++] = k;
      }
      if (count > 0) {
        const int k = options[rng_.uniform_int(static_cast<std::uint64_t>(count))];
        target = env_.maze.center({here.row + kDr[k], here.col + kDc[k]});
      }
    }
    double dx = static_cast<double>(target.x) - p.x;
    double dy = static_cast<double>(target.y) - p.y;
    const double norm = std::hypot(dx, dy);
    const double a_max = env_.action_limit;
    if (norm > 1e-12) {
      const double speed = env_.dynamics == Dynamics::grid ? a_max : std::min(a_max, norm);
      dx *= speed / norm;
      dy *= speed / norm;
    }
    return noisy(dx, dy, cfg_.expert_noise);
  }

  Vec2 noisy(double dx, double dy, double noise) {
    const double sd = noise * env_.action_limit;
    const double nx = rng_.normal(0.0, sd);
    const double ny = rng_.normal(0.0, sd);
    const EnvAction a = env_.clip({{static_cast<float>(dx + nx), static_cast<float>(dy + ny)}});
    return a.delta;
  }

  void push(Trajectory& tr, Vec2 action) {
    const EnvState next = step(env_, {tr.states.back()}, {action});
    tr.actions.push_back(action);
    tr.states.push_back(next.position);
  }

  Cell reachable_goal(Cell from, int lo, int hi) {
    const auto& dist = field(from);
    std::vector<Cell> candidates;
    for (const Cell& c : free_) {
      const int d = dist[env_.maze.index(c)];
      if (d != kUnreachable && d >= lo && d <= hi) candidates.push_back(c);
    }
    if (candidates.empty()) {
      for (const Cell& c : free_) {
        const int d = dist[env_.maze.index(c)];
        if (d != kUnreachable && d > 0) candidates.push_back(c);
      }
    }
    if (candidates.empty()) return from;
    return candidates[rng_.uniform_int(candidates.size())];
  }

  Trajectory navigate(std::size_t budget, std::vector<Cell>& goals) {
    Trajectory tr;
    const Cell start = random_free();
    tr.states.push_back(start_position(start));
    Cell goal = reachable_goal(start, 1, kUnreachable - 1);
    goals.push_back(goal);
    const auto len = std::min<std::size_t>(budget, static_cast<std::size_t>(cfg_.navigate_length));
    while (tr.length() < len) {
      if (at_goal(tr.states.back(), goal)) {
        goal = reachable_goal(env_.maze.cell_at(tr.states.back()), 1, kUnreachable - 1);
        goals.push_back(goal);
      }
      push(tr, expert_action(tr.states.back(), goal));
    }
    return tr;
  }

  Trajectory stitch(std::size_t budget, std::vector<Cell>& goals) {
    Trajectory tr;
    const Cell start = random_free();
    tr.states.push_back(start_position(start));
    const Cell goal = reachable_goal(start, cfg_.stitch_min_radius, cfg_.stitch_max_radius);
    goals.push_back(goal);
    const auto len = std::min<std::size_t>(budget, static_cast<std::size_t>(cfg_.segment_length));
    while (tr.length() < len) {
      push(tr, expert_action(tr.states.back(), goal));
      if (at_goal(tr.states.back(), goal)) break;
    }
    return tr;
  }

  Trajectory explore(std::size_t budget, std::vector<Vec2>& directions) {
    Trajectory tr;
    tr.states.push_back(start_position(random_free()));
    const auto len = std::min<std::size_t>(budget, static_cast<std::size_t>(cfg_.explore_length));
    Vec2 dir;
    for (std::size_t t = 0; t < len; ++t) {
      if (t % static_cast<std::size_t>(cfg_.explore_period) == 0) {
        const double theta = rng_.uniform(0.0, 2.0 * std::numbers::pi);
        dir = {static_cast<float>(std::cos(theta)), static_cast<float>(std::sin(theta))};
      }
      directions.push_back(dir);
      push(tr, noisy(env_.action_limit * dir.x, env_.action_limit * dir.y, cfg_.explore_noise));
    }
    return tr;
  }

 private:
  const Env& env_;
  const GenerationConfig& cfg_;
  Rng& rng_;
  std::vector<Cell> free_;
  std::unordered_map<std::size_t, std::vector<int>> fields_;
};

}  // namespace

Dataset generate_dataset(const Env& env, DatasetStyle style, std::size_t n_transitions, std::uint64_t seed,
                         const GenerationConfig& cfg, GenerationTrace* trace) {
  if (n_transitions == 0) throw std::invalid_argument("n_transitions must be positive");
  if (cfg.segment_length <= 0 || cfg.navigate_length <= 0 || cfg.explore_length <= 0 || cfg.explore_period <= 0) {
    throw std::invalid_argument("generation lengths must be positive");
  }
  if (cfg.stitch_min_radius > cfg.stitch_max_radius) throw std::invalid_argument("stitch radius range is empty");
  Rng rng = Rng::derive(seed, 0x6461746173657421ULL);
  Generator gen(env, cfg, rng);
  Dataset data;
  data.style = style;
  data.dynamics = env.dynamics;
  data.seed = seed;
  std::size_t total = 0;
  while (total < n_transitions) {
    const std::size_t budget = n_transitions - total;
    std::vector<Cell> goals;
    std::vector<Vec2> directions;
    Trajectory tr;
    switch (style) {
      case DatasetStyle::navigate:
        tr = gen.navigate(budget, goals);
        break;
      case DatasetStyle::stitch:
        tr = gen.stitch(budget, goals);
        break;
      case DatasetStyle::explore:
        tr = gen.explore(budget, directions);
        break;
    }
    total += tr.length();
    data.add(std::move(tr));
    if (trace) {
      trace->goals.push_back(std::move(goals));
      trace->directions.push_back(std::move(directions));
    }
  }
  return data;
}

}  // namespace gas
