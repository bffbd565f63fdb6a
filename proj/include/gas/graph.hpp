#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gas/dataset.hpp"
#include "gas/latent.hpp"

namespace gas {

struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct TdGraph {
  LatentMatrix nodes;
  std::vector<Edge> edges;
  double h_td = 0.0;
  std::optional<double> te_thresh;
  /// Build statistics and provenance.
  nlohmann::json meta = nlohmann::json::object();

  std::size_t node_count() const { return static_cast<std::size_t>(nodes.cols()); }
  int dim() const { return static_cast<int>(nodes.rows()); }
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct GoalDistances {
  std::vector<double> dist;
  LatentPoint goal;
  /// Nodes wired to the virtual goal node, with their direct distance.
  std::vector<std::pair<std::uint32_t, double>> goal_links;
};

struct ClusterResult {
  /// Mean of each cluster's members.
  LatentMatrix centers;
  /// Seed points as they stood during the pass.
  LatentMatrix seeds;
  std::vector<std::size_t> seed_index;
  std::vector<std::uint32_t> assignment;
};

class EmptyGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single sequential pass: a point joins its nearest seed when within
/// radius_factor * h_td, otherwise it seeds a new cluster. Centers are then
/// replaced by member means.
ClusterResult td_aware_cluster(const LatentMatrix& latents, double h_td, double radius_factor = 0.5);

/// All pairs i < j with distance <= h_td.
std::vector<Edge> connect_edges(const LatentMatrix& nodes, double h_td);

/// Connected-component label of every node, numbered by lowest member index.
std::vector<std::uint32_t> graph_components(const TdGraph& graph);

/// Shortest distance from each node to the goal through a virtual goal node.
GoalDistances dijkstra_from_goal(const LatentPoint& goal, const TdGraph& graph);

/// Greedy farthest-point selection starting at index 0. Returns indices.
std::vector<std::size_t> baseline_nodes_fps(const LatentMatrix& latents, std::size_t k);

struct KmeansResult {
  LatentMatrix centers;
  std::vector<double> objective;  // within-cluster sum of squares after each Lloyd iteration
};

KmeansResult baseline_nodes_kmeans(const LatentMatrix& latents, std::size_t k, int iters, std::uint64_t seed);

enum class NodeMethod : std::uint8_t { gas = 0, fps = 1, kmeans = 2 };
std::string_view to_string(NodeMethod m);
NodeMethod parse_node_method(std::string_view text);

struct GraphBuildOptions {
  double h_td = 4.0;
  /// Empty disables TE filtering.
  std::optional<double> te_thresh = 0.9;
  NodeMethod method = NodeMethod::gas;
  double radius_factor = 0.5;
  /// When false, states are clustered per trajectory and edges never join
  /// clusters of different trajectories.
  bool stitching = true;
  /// Baseline node count; 0 means match the GAS clustering.
  std::size_t node_count = 0;
  int kmeans_iters = 20;
  std::uint64_t seed = 0;
};

struct GraphBuildStats {
  std::size_t total_states = 0;
  std::size_t defined_states = 0;
  std::size_t filtered_states = 0;
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  double filter_seconds = 0.0;
  double cluster_seconds = 0.0;
};

TdGraph build_graph(const DatasetLatents& latents, const GraphBuildOptions& opts, GraphBuildStats* stats = nullptr);

std::string graph_to_json(const TdGraph& g);
TdGraph graph_from_json(const std::string& text);
void save_graph(const TdGraph& g, const std::filesystem::path& path);
TdGraph load_graph(const std::filesystem::path& path);

}  // namespace gas
