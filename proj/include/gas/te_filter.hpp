#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gas/dataset.hpp"
#include "gas/latent.hpp"

namespace gas {

struct TeRecord {
  std::size_t trajectory_id = 0;
  std::size_t step_index = 0;
  /// Cosine in [-1, 1]; empty when undefined.
  std::optional<double> te;
};

inline constexpr double kTeMinNorm = 1e-8;

/// Cosine between the displacement to the first state at latent distance
/// h_td and the displacement after round(h_td) steps.
TeRecord temporal_efficiency(const LatentMatrix& traj, std::size_t t, double h_td);

/// TE of every state, in dataset order.
std::vector<TeRecord> te_records(const DatasetLatents& latents, double h_td);

struct FilterResult {
  LatentMatrix points;
  /// Flat dataset state index of each retained column.
  std::vector<std::size_t> state_index;
  std::size_t defined = 0;
  std::size_t total = 0;
};

/// States with defined TE >= threshold, in dataset order. `threshold` empty
/// keeps every state (the unfiltered baseline).
FilterResult filter_states(const DatasetLatents& latents, double h_td, std::optional<double> threshold);

}  // namespace gas
