#include <doctest.h>

#include <cmath>

#include "gas/dataset.hpp"
#include "gas/env.hpp"
#include "oracles.hpp"

using namespace gas;

namespace {

Env point_env(const Maze& m) {
  Env e;
  e.maze = m;
  e.dynamics = Dynamics::point_mass;
  e.action_limit = 0.5;
  return e;
}

Env grid_env(const Maze& m) {
  Env e;
  e.maze = m;
  e.dynamics = Dynamics::grid;
  return e;
}

Maze two_room() { return Maze::load(std::string(GAS_SOURCE_DIR) + "/mazes/two_room.txt"); }

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("maze text parses and round-trips") {
    const std::string text = "#####\n#S..#\n#.#G#\n#####\n";
    const Maze m = Maze::parse(text);
    CHECK(m.rows() == 4);
    CHECK(m.cols() == 5);
    CHECK(m.starts().size() == 1);
    CHECK(m.goals().size() == 1);
    CHECK(m.goals()[0] == Cell{2, 3});
    CHECK_FALSE(m.is_free(Cell{2, 2}));
    CHECK_FALSE(m.is_free(Cell{-1, 0}));
    CHECK(Maze::parse(m.to_text()).to_text() == m.to_text());
  }

  TEST_CASE("maze validation rejects bad grids") {
    CHECK_THROWS_AS(Maze::parse("###\n###\n"), MazeError);
    CHECK_THROWS_AS(Maze::parse("S#G\n"), MazeError);
    CHECK_THROWS_AS(Maze::parse("S.x\n"), MazeError);
    CHECK_NOTHROW(Maze::parse("S.G\n"));
  }

  TEST_CASE("point mass: zero action is identity") {
    const Env e = point_env(Maze::open(5, 5));
    const EnvState s{{1.5f, 1.5f}};
    CHECK(step(e, s, {{0.0f, 0.0f}}) == s);
  }

  TEST_CASE("point mass: unobstructed addition") {
    const Env e = point_env(Maze::open(5, 5));
    const EnvState n = step(e, {{2.0f, 2.0f}}, {{0.3f, -0.2f}});
    CHECK(n.position.x == doctest::Approx(2.3).epsilon(1e-6));
    CHECK(n.position.y == doctest::Approx(1.8).epsilon(1e-6));
  }

  TEST_CASE("point mass: pushing into a wall slides along the free axis") {
    const Env e = point_env(Maze::parse(".#\n..\n"));
    // In cell (0,0) next to the wall at (0,1); push right and down.
    const EnvState n = step(e, {{0.8f, 0.5f}}, {{0.4f, 0.3f}});
    CHECK(n.position.x == 0.8f);
    CHECK(n.position.y == doctest::Approx(0.8));
    // Mirror case: blocked vertical component.
    const Env e2 = point_env(Maze::parse("..\n#.\n"));
    const EnvState m = step(e2, {{0.5f, 0.8f}}, {{0.2f, 0.4f}});
    CHECK(m.position.y == 0.8f);
    CHECK(m.position.x == doctest::Approx(0.7));
  }

  TEST_CASE("actions are clipped to the limit") {
    const Env e = point_env(Maze::open(10, 10));
    const EnvAction a = e.clip({{3.0f, -7.0f}});
    CHECK(a.delta.x == 0.5f);
    CHECK(a.delta.y == -0.5f);
    const EnvAction nan = e.clip({{std::nanf(""), 0.1f}});
    CHECK(nan.delta.x == 0.0f);
    const EnvState n = step(e, {{5.0f, 5.0f}}, {{3.0f, 3.0f}});
    CHECK(n.position.x == 5.5f);
    CHECK(n.position.y == 5.5f);
  }

  TEST_CASE("grid: dominant axis moves one cell; small or blocked actions stay") {
    const Env e = grid_env(Maze::parse("...\n.#.\n...\n"));
    const EnvState s = e.state_at({0, 0});
    CHECK(step(e, s, {{1.0f, 0.2f}}) == e.state_at({0, 1}));
    CHECK(step(e, s, {{0.1f, 0.9f}}) == e.state_at({1, 0}));
    CHECK(step(e, s, {{0.3f, 0.3f}}) == s);
    CHECK(step(e, s, {{-1.0f, 0.0f}}) == s);
    CHECK(step(e, e.state_at({0, 1}), {{0.0f, 1.0f}}) == e.state_at({0, 1}));
  }

  TEST_CASE("property: random action sequences never enter walls") {
    const Maze m = two_room();
    for (Dynamics d : {Dynamics::point_mass, Dynamics::grid}) {
      Env e = d == Dynamics::grid ? grid_env(m) : point_env(m);
      Rng rng(7);
      for (int ep = 0; ep < 50; ++ep) {
        EnvState s = e.state_at(m.starts()[ep % m.starts().size()]);
        for (int t = 0; t < 200; ++t) {
          const EnvAction a{{static_cast<float>(rng.normal(0, 2)), static_cast<float>(rng.normal(0, 2))}};
          s = step(e, s, a);
          REQUIRE(e.valid(s));
        }
      }
    }
  }

  TEST_CASE("reward is the strict epsilon-ball indicator") {
    const EnvState g{{3.0f, 4.0f}};
    CHECK(reward(g, g, 0.5) == 1);
    CHECK(reward({{3.5f, 4.0f}}, g, 0.5) == 0);
    CHECK(reward({{3.25f, 4.0f}}, g, 0.5) == 1);
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
      const EnvState s{{static_cast<float>(rng.uniform(2, 4)), static_cast<float>(rng.uniform(3, 5))}};
      const double dx = static_cast<double>(s.position.x) - 3.0, dy = static_cast<double>(s.position.y) - 4.0;
      CHECK(reward(s, g, 0.7) == (std::sqrt(dx * dx + dy * dy) < 0.7 ? 1 : 0));
    }
  }

  TEST_CASE("bfs distances") {
    const Maze open = Maze::open(10, 10);
    CHECK(bfs_distance(open, {3, 3}, {3, 3}) == 0);
    CHECK(bfs_distance(open, {3, 3}, {3, 4}) == 1);
    CHECK(bfs_distance(open, {0, 0}, {9, 9}) == 18);
    const Maze split = Maze::parse("..#..\n");
    CHECK(bfs_distance(split, {0, 0}, {0, 4}) == kUnreachable);
  }

  TEST_CASE("bfs matches an independent queue search and obeys the triangle inequality") {
    const Maze m = two_room();
    const auto cells = m.free_cells();
    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
      const Cell s = cells[rng.uniform_int(cells.size())];
      const auto ref = oracle::bfs(m, s);
      const auto field = bfs_field(m, s);
      for (const Cell c : cells) REQUIRE(field[m.index(c)] == ref[m.index(c)]);
    }
    for (int k = 0; k < 500; ++k) {
      const Cell a = cells[rng.uniform_int(cells.size())], b = cells[rng.uniform_int(cells.size())],
                 c = cells[rng.uniform_int(cells.size())];
      CHECK(bfs_distance(m, a, c) <= bfs_distance(m, a, b) + bfs_distance(m, b, c));
      CHECK(bfs_distance(m, a, b) == bfs_distance(m, b, a));
    }
  }

  TEST_CASE("stitch segments are capped and never cross rooms") {
    const Env e = grid_env(two_room());
    GenerationConfig cfg;
    const Dataset d = generate_dataset(e, DatasetStyle::stitch, 20000, 5, cfg);
    CHECK(d.transition_count() == 20000);
    for (const auto& t : d.trajectories()) {
      REQUIRE(t.length() <= 40);
      const Cell a = e.maze.cell_at(t.states.front()), b = e.maze.cell_at(t.states.back());
      CHECK(bfs_distance(e.maze, a, b) <= 40);
      bool left = false, right = false;
      for (const auto& s : t.states) {
        const int col = e.maze.cell_at(s).col;
        left = left || col <= 5;
        right = right || col >= 16;
      }
      REQUIRE_FALSE((left && right));
    }
  }

  TEST_CASE("explore directions change only at multiples of the period") {
    const Env e = point_env(Maze::open(10, 10));
    GenerationTrace trace;
    const Dataset d = generate_dataset(e, DatasetStyle::explore, 3000, 9, {}, &trace);
    REQUIRE(trace.directions.size() == d.trajectory_count());
    int changes = 0;
    for (const auto& dirs : trace.directions)
      for (std::size_t t = 1; t < dirs.size(); ++t)
        if (!(dirs[t] == dirs[t - 1])) {
          ++changes;
          REQUIRE(t % 10 == 0);
        }
    CHECK(changes > 0);
  }

  TEST_CASE("generation is deterministic per seed") {
    const Env e = point_env(two_room());
    for (DatasetStyle s : {DatasetStyle::navigate, DatasetStyle::stitch, DatasetStyle::explore}) {
      const auto a = serialize_dataset(generate_dataset(e, s, 2000, 42));
      const auto b = serialize_dataset(generate_dataset(e, s, 2000, 42));
      const auto c = serialize_dataset(generate_dataset(e, s, 2000, 43));
      CHECK(a == b);
      CHECK(a != c);
    }
  }

  TEST_CASE("navigate trajectories follow noisy shortest paths to their goals") {
    Env e = grid_env(two_room());
    GenerationConfig cfg;
    cfg.expert_noise = 0.0;
    GenerationTrace trace;
    const Dataset d = generate_dataset(e, DatasetStyle::navigate, 2000, 1, cfg, &trace);
    // Noise-free grid expert: each step reduces the BFS distance to the current goal by one.
    const auto& t = d.trajectory(0);
    const Cell goal = trace.goals[0][0];
    const Cell start = e.maze.cell_at(t.states[0]);
    const int n = bfs_distance(e.maze, start, goal);
    REQUIRE(n > 0);
    REQUIRE(static_cast<int>(t.length()) >= n);
    CHECK(e.maze.cell_at(t.states[static_cast<std::size_t>(n)]) == goal);
  }
}
