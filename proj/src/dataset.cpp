#include "gas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gas {

std::string_view to_string(DatasetStyle s) {
  switch (s) {
    case DatasetStyle::navigate:
      return "navigate";
    case DatasetStyle::stitch:
      return "stitch";
    case DatasetStyle::explore:
      return "explore";
  }
  return "unknown";
}

DatasetStyle parse_style(std::string_view text) {
  if (text == "navigate") return DatasetStyle::navigate;
  if (text == "stitch") return DatasetStyle::stitch;
  if (text == "explore") return DatasetStyle::explore;
  throw std::invalid_argument("unknown dataset style '" + std::string(text) + "' (expected navigate|stitch|explore)");
}

void Dataset::add(Trajectory traj) {
  if (traj.actions.empty()) throw std::invalid_argument("empty trajectory");
  if (traj.states.size() != traj.actions.size() + 1) {
    throw std::invalid_argument("trajectory needs exactly one more state than actions");
  }
  if (trajectories_.size() >= UINT32_MAX || traj.states.size() >= UINT32_MAX) {
    throw std::length_error("dataset too large");
  }
  state_offsets_.push_back(state_offsets_.back() + traj.states.size());
  transition_offsets_.push_back(transition_offsets_.back() + traj.actions.size());
  trajectories_.push_back(std::move(traj));
}

namespace {

StateRef locate(const std::vector<std::size_t>& offsets, std::size_t flat) {
  if (flat >= offsets.back()) throw std::out_of_range("flat index beyond dataset");
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
  const auto traj = static_cast<std::size_t>(it - offsets.begin()) - 1;
  return {static_cast<std::uint32_t>(traj), static_cast<std::uint32_t>(flat - offsets[traj])};
}

}  // namespace

StateRef Dataset::transition_ref(std::size_t flat) const { return locate(transition_offsets_, flat); }
StateRef Dataset::state_ref(std::size_t flat) const { return locate(state_offsets_, flat); }

Transition Dataset::transition(std::size_t flat) const {
  const StateRef r = transition_ref(flat);
  const auto& tr = trajectories_[r.trajectory];
  return {{tr.states[r.step]}, {tr.actions[r.step]}, {tr.states[r.step + 1]}, r.trajectory, r.step};
}

std::vector<Vec2> Dataset::all_states() const {
  std::vector<Vec2> out;
  out.reserve(state_count());
  for (const auto& tr : trajectories_) out.insert(out.end(), tr.states.begin(), tr.states.end());
  return out;
}

void RelabelConfig::validate() const {
  if (p_future < 0.0 || p_uniform < 0.0 || std::abs(p_future + p_uniform - 1.0) > 1e-9) {
    throw std::invalid_argument("relabel probabilities must be non-negative and sum to 1");
  }
  if (!(geometric_p > 0.0 && geometric_p <= 1.0)) throw std::invalid_argument("geometric parameter must be in (0, 1]");
}

std::vector<TdrSample> sample_tdr_batch(const Dataset& data, const RelabelConfig& cfg, std::size_t batch, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("cannot sample from an empty dataset");
  cfg.validate();
  constexpr int kGoalAttempts = 32;
  constexpr int kAnchorAttempts = 10000;
  std::vector<TdrSample> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    // The draw type is fixed before any retry so the future fraction is exact.
    const bool future = rng.bernoulli(cfg.p_future);
    bool done = false;
    for (int anchor = 0; anchor < kAnchorAttempts && !done; ++anchor) {
      const StateRef s = data.transition_ref(rng.uniform_int(data.transition_count()));
      const Vec2 sv = data.state(s);
      const auto& tr = data.trajectory(s.trajectory);
      for (int attempt = 0; attempt < kGoalAttempts; ++attempt) {
        StateRef g;
        if (future) {
          const std::uint64_t k = rng.geometric(cfg.geometric_p);
          const std::uint64_t last = tr.length();
          g = {s.trajectory, static_cast<std::uint32_t>(std::min<std::uint64_t>(s.step + k, last))};
        } else {
          g = data.state_ref(rng.uniform_int(data.state_count()));
        }
        if (data.state(g) == sv) continue;
        out.push_back({s, {s.trajectory, s.step + 1}, g, future});
        done = true;
        break;
      }
    }
    if (!done) throw std::runtime_error("could not draw a goal distinct from its anchor state");
  }
  return out;
}

StateRef sample_subgoal_td(const Dataset& data, const DatasetLatents& latents, StateRef t, double h_td) {
  const auto& tr = data.trajectory(t.trajectory);
  const std::size_t base = latents.offsets.at(t.trajectory);
  const std::size_t n = tr.states.size();
  const auto origin = latents.column(base + t.step);
  for (std::size_t k = t.step + 1; k < n; ++k) {
    if (latent_distance(origin, latents.column(base + k)) >= h_td) return {t.trajectory, static_cast<std::uint32_t>(k)};
  }
  return {t.trajectory, static_cast<std::uint32_t>(n - 1)};
}

StateRef sample_subgoal_step(const Dataset& data, StateRef t, std::size_t c) {
  const std::size_t last = data.trajectory(t.trajectory).length();
  return {t.trajectory, static_cast<std::uint32_t>(std::min<std::size_t>(t.step + c, last))};
}

}  // namespace gas
