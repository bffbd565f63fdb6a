#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gas/env.hpp"
#include "gas/latent.hpp"
#include "gas/rng.hpp"

namespace gas {

enum class DatasetStyle : std::uint8_t { navigate = 0, stitch = 1, explore = 2 };

std::string_view to_string(DatasetStyle s);
DatasetStyle parse_style(std::string_view text);

/// T transitions: T + 1 states and T actions.
struct Trajectory {
  std::vector<Vec2> states;
  std::vector<Vec2> actions;

  std::size_t length() const { return actions.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Transition {
  EnvState state;
  EnvAction action;
  EnvState next_state;
  std::size_t trajectory_id = 0;
  std::size_t step_index = 0;
};

/// Position of one state inside the dataset.
struct StateRef {
  std::uint32_t trajectory = 0;
  std::uint32_t step = 0;

  friend bool operator==(const StateRef&, const StateRef&) = default;
};

class Dataset {
 public:
  DatasetStyle style = DatasetStyle::navigate;
  Dynamics dynamics = Dynamics::grid;
  std::uint64_t seed = 0;

  /// Rejects empty or malformed trajectories.
  void add(Trajectory traj);

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const Trajectory& trajectory(std::size_t i) const { return trajectories_[i]; }
  std::size_t trajectory_count() const { return trajectories_.size(); }
  std::size_t transition_count() const { return transition_offsets_.back(); }
  std::size_t state_count() const { return state_offsets_.back(); }
  bool empty() const { return trajectories_.empty(); }

  /// Flat index of the first state / transition of trajectory i.
  std::size_t state_offset(std::size_t i) const { return state_offsets_[i]; }
  std::size_t transition_offset(std::size_t i) const { return transition_offsets_[i]; }

  StateRef transition_ref(std::size_t flat) const;
  StateRef state_ref(std::size_t flat) const;
  std::size_t flat_state(StateRef r) const { return state_offsets_[r.trajectory] + r.step; }
  Vec2 state(StateRef r) const { return trajectories_[r.trajectory].states[r.step]; }
  Transition transition(std::size_t flat) const;

  /// Every state in flat order.
  std::vector<Vec2> all_states() const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.style == b.style && a.dynamics == b.dynamics && a.seed == b.seed && a.trajectories_ == b.trajectories_;
  }

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<std::size_t> state_offsets_{0};
  std::vector<std::size_t> transition_offsets_{0};
};

/// Embeddings of every dataset state, columns in flat state order.
struct DatasetLatents {
  LatentMatrix points;
  std::vector<std::size_t> offsets;  // per trajectory, plus a final end offset

  std::size_t trajectory_count() const { return offsets.size() - 1; }
  LatentMatrix trajectory(std::size_t i) const {
    return points.middleCols(static_cast<Eigen::Index>(offsets[i]),
                             static_cast<Eigen::Index>(offsets[i + 1] - offsets[i]));
  }
  auto column(std::size_t flat) const { return points.col(static_cast<Eigen::Index>(flat)); }
};

// ---- binary and JSON-lines persistence ----

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& data);
Dataset deserialize_dataset(const std::string& bytes);
void save_dataset_jsonl(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_jsonl(const std::filesystem::path& path);

// ---- generation ----

struct GenerationConfig {
  int navigate_length = 200;
  /// Segment cap for stitch data.
  int segment_length = 40;
  /// Stitch goals lie this many BFS steps from the segment start.
  int stitch_min_radius = 4;
  int stitch_max_radius = 8;
  int explore_length = 200;
  int explore_period = 10;
  /// Gaussian action noise, in units of the action limit.
  double expert_noise = 0.3;
  double explore_noise = 1.0;
};

/// Per-step command record kept for inspection and tests.
struct GenerationTrace {
  /// Explore: commanded unit direction at every step of every trajectory.
  std::vector<std::vector<Vec2>> directions;
  /// Navigate / stitch: goal cells drawn for each trajectory.
  std::vector<std::vector<Cell>> goals;
};

Dataset generate_dataset(const Env& env, DatasetStyle style, std::size_t n_transitions, std::uint64_t seed,
                         const GenerationConfig& cfg = {}, GenerationTrace* trace = nullptr);

// ---- samplers ----

struct RelabelConfig {
  double p_future = 0.625;
  double p_uniform = 0.375;
  /// Per-step success probability of the future-offset geometric draw.
  double geometric_p = 0.01;

  void validate() const;
};

struct TdrSample {
  StateRef s;
  StateRef next;
  StateRef g;
  bool future_goal = false;
};

/// Anchors are uniform over transitions; goals are never equal to the anchor
/// state by value.
std::vector<TdrSample> sample_tdr_batch(const Dataset& data, const RelabelConfig& cfg, std::size_t batch, Rng& rng);

/// First state after `t` that is at least h_td away in latent space, or the
/// trajectory's final state if none is.
StateRef sample_subgoal_td(const Dataset& data, const DatasetLatents& latents, StateRef t, double h_td);

/// s_{t+c}, clamped to the trajectory end.
StateRef sample_subgoal_step(const Dataset& data, StateRef t, std::size_t c);

}  // namespace gas
