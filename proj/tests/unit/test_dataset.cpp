#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "gas/dataset.hpp"
#include "gas/io.hpp"

using namespace gas;

namespace {

Env nav_env() {
  Env e;
  e.maze = Maze::load(std::string(GAS_SOURCE_DIR) + "/mazes/two_room.txt");
  e.dynamics = Dynamics::point_mass;
  e.action_limit = 0.5;
  return e;
}

const Dataset& shared_data() {
  static const Dataset d = generate_dataset(nav_env(), DatasetStyle::navigate, 5000, 3);
  return d;
}

/// One trajectory whose latents are the given 1-D coordinates.
std::pair<Dataset, DatasetLatents> line_data(const std::vector<float>& coords) {
  Trajectory t;
  for (std::size_t i = 0; i < coords.size(); ++i) t.states.push_back({static_cast<float>(i), 0.0f});
  t.actions.assign(coords.size() - 1, Vec2{1.0f, 0.0f});
  Dataset d;
  d.add(t);
  DatasetLatents lat;
  lat.points = LatentMatrix::Zero(2, static_cast<Eigen::Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) lat.points(0, static_cast<Eigen::Index>(i)) = coords[i];
  lat.offsets = {0, coords.size()};
  return {d, lat};
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("trajectories are validated on insertion") {
    Dataset d;
    CHECK_THROWS(d.add(Trajectory{}));
    CHECK_THROWS(d.add(Trajectory{{{0, 0}, {1, 0}}, {{1, 0}, {1, 0}}}));
    CHECK_NOTHROW(d.add(Trajectory{{{0, 0}, {1, 0}}, {{1, 0}}}));
  }

  TEST_CASE("flat indexing and transition invariants") {
    const Dataset& d = shared_data();
    CHECK(d.transition_count() == 5000);
    CHECK(d.state_count() == d.transition_count() + d.trajectory_count());
    for (std::size_t f = 0; f < d.transition_count(); f += 37) {
      const Transition tr = d.transition(f);
      const auto& traj = d.trajectory(tr.trajectory_id);
      CHECK(tr.state.position == traj.states[tr.step_index]);
      CHECK(tr.next_state.position == traj.states[tr.step_index + 1]);
      CHECK(d.transition_offset(tr.trajectory_id) + tr.step_index == f);
    }
    for (std::size_t f = 0; f < d.state_count(); f += 41) CHECK(d.flat_state(d.state_ref(f)) == f);
  }

  TEST_CASE("binary persistence round-trips byte-identically") {
    const Dataset& d = shared_data();
    const auto path = std::filesystem::path(GAS_TEST_TMP) / "ds.bin";
    save_dataset(d, path);
    const Dataset back = load_dataset(path);
    CHECK(back == d);
    CHECK(serialize_dataset(back) == io::read_file(path));
    const std::string bytes = serialize_dataset(d);
    std::uint32_t magic = 0, version = 0;
    std::uint64_t seed = 0, n_traj = 0, n_trans = 0;
    std::memcpy(&magic, bytes.data(), 4);
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&seed, bytes.data() + 12, 8);
    std::memcpy(&n_traj, bytes.data() + 20, 8);
    std::memcpy(&n_trans, bytes.data() + 28, 8);
    CHECK(magic == 0x44534147u);
    CHECK(version == 1u);
    CHECK(seed == 3u);
    CHECK(n_traj == d.trajectory_count());
    CHECK(n_trans == 5000u);
  }

  TEST_CASE("corrupt dataset files are rejected") {
    const std::string bytes = serialize_dataset(shared_data());
    CHECK_THROWS(deserialize_dataset(bytes.substr(0, bytes.size() - 3)));
    CHECK_THROWS(deserialize_dataset(bytes + "x"));
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS(deserialize_dataset(bad));
  }

  TEST_CASE("json lines persistence round-trips") {
    const Dataset& d = shared_data();
    const auto path = std::filesystem::path(GAS_TEST_TMP) / "ds.jsonl";
    save_dataset_jsonl(d, path);
    CHECK(load_dataset_jsonl(path) == d);
  }

  TEST_CASE("degenerate geometric draw picks the immediate successor") {
    Rng rng(1);
    RelabelConfig cfg{1.0, 0.0, 1.0};
    for (const auto& s : sample_tdr_batch(shared_data(), cfg, 2000, rng)) {
      CHECK(s.future_goal);
      CHECK(s.g.trajectory == s.s.trajectory);
      CHECK(s.g.step == s.s.step + 1);
    }
  }

  TEST_CASE("future-goal fraction matches p_future") {
    Rng rng(2);
    RelabelConfig cfg;
    const auto batch = sample_tdr_batch(shared_data(), cfg, 100000, rng);
    std::size_t future = 0;
    for (const auto& s : batch) future += s.future_goal ? 1 : 0;
    CHECK(std::abs(static_cast<double>(future) / batch.size() - 0.625) <= 0.01);
  }

  TEST_CASE("sampled batches respect anchors, successors and trajectory boundaries") {
    Rng rng(3);
    RelabelConfig cfg;
    cfg.geometric_p = 0.05;
    const Dataset& d = shared_data();
    for (const auto& s : sample_tdr_batch(d, cfg, 4096, rng)) {
      REQUIRE_FALSE(d.state(s.s) == d.state(s.g));
      CHECK(s.s.step < d.trajectory(s.s.trajectory).length());
      CHECK(s.next.trajectory == s.s.trajectory);
      CHECK(s.next.step == s.s.step + 1);
      if (s.future_goal) {
        CHECK(s.g.trajectory == s.s.trajectory);
        CHECK(s.g.step > s.s.step);
      }
    }
  }

  TEST_CASE("relabel configuration is validated") {
    CHECK_THROWS(RelabelConfig{0.5, 0.6, 0.01}.validate());
    CHECK_THROWS(RelabelConfig{0.625, 0.375, 0.0}.validate());
    CHECK_NOTHROW(RelabelConfig{}.validate());
  }

  TEST_CASE("geometric draws have mean 1/p and support starting at 1") {
    Rng rng(4);
    double sum = 0;
    std::uint64_t lo = 100;
    for (int i = 0; i < 200000; ++i) {
      const auto k = rng.geometric(0.1);
      sum += static_cast<double>(k);
      lo = std::min(lo, k);
    }
    CHECK(lo == 1);
    CHECK(sum / 200000 == doctest::Approx(10.0).epsilon(0.02));
  }

  TEST_CASE("td subgoal: uniform speed, stationary and random trajectories") {
    {
      std::vector<float> c(21);
      for (int i = 0; i <= 20; ++i) c[i] = static_cast<float>(i);
      auto [d, lat] = line_data(c);
      CHECK(sample_subgoal_td(d, lat, {0, 0}, 8.0).step == 8);
      CHECK(sample_subgoal_td(d, lat, {0, 15}, 8.0).step == 20);
    }
    {
      auto [d, lat] = line_data(std::vector<float>(10, 2.0f));
      CHECK(sample_subgoal_td(d, lat, {0, 3}, 1.0).step == 9);
    }
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<float> c(30);
      float x = 0;
      for (auto& v : c) v = (x += static_cast<float>(rng.normal()));
      auto [d, lat] = line_data(c);
      const auto t = static_cast<std::uint32_t>(rng.uniform_int(29));
      const double h = rng.uniform(0.5, 6.0);
      std::uint32_t expect = 29;
      for (std::uint32_t k = t + 1; k < 30; ++k)
        if (std::abs(static_cast<double>(c[k]) - c[t]) >= h) {
          expect = k;
          break;
        }
      const auto got = sample_subgoal_td(d, lat, {0, t}, h).step;
      CHECK(got == expect);
      CHECK(got > t);
    }
  }

  TEST_CASE("step subgoal clamps to the trajectory end") {
    auto [d, lat] = line_data({0, 1, 2, 3, 4});
    CHECK(sample_subgoal_step(d, {0, 1}, 0).step == 1);
    CHECK(sample_subgoal_step(d, {0, 1}, 1).step == 2);
    CHECK(sample_subgoal_step(d, {0, 1}, 100).step == 4);
  }
}
