#pragma once

#include <vector>

#include "gas/tdr.hpp"
#include "oracles.hpp"

namespace oracle {

struct Fidelity {
  double spearman = 0.0;
  /// Mean |latent - bfs| / bfs over pairs with 0 < bfs <= near_limit.
  double near_rel_error = 0.0;
  std::size_t pairs = 0;
};

/// Compares latent distances of free-cell centres with BFS distances over all pairs.
inline Fidelity tdr_fidelity(const gas::TdrModel& m, const gas::Env& env, int near_limit) {
  const auto cells = env.maze.free_cells();
  std::vector<gas::Vec2> centers;
  for (const auto& c : cells) centers.push_back(env.maze.center(c));
  const gas::LatentMatrix z = m.embed(centers);
  std::vector<double> latent, truth;
  double rel = 0.0;
  std::size_t near = 0;
  for (std::size_t a = 0; a < cells.size(); ++a) {
    const auto field = bfs(env.maze, cells[a]);
    for (std::size_t b = a + 1; b < cells.size(); ++b) {
      const int d = field[env.maze.index(cells[b])];
      if (d < 0) continue;
      const double l = dist(z, static_cast<long>(a), static_cast<long>(b));
      latent.push_back(l);
      truth.push_back(d);
      if (d <= near_limit) {
        rel += std::abs(l - d) / d;
        ++near;
      }
    }
  }
  return {spearman(latent, truth), near ? rel / static_cast<double>(near) : 0.0, latent.size()};
}

}  // namespace oracle
