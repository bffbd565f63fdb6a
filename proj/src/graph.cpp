#include "gas/graph.hpp"

#include <algorithm>
#include <numeric>
#include <chrono>
#include <cmath>
#include <queue>

#include "gas/io.hpp"
#include "gas/rng.hpp"
#include "gas/te_filter.hpp"

namespace gas {

namespace {

double sq_distance(const LatentMatrix& a, Eigen::Index i, const LatentMatrix& b, Eigen::Index j) {
  return (a.col(i).cast<double>() - b.col(j).cast<double>()).squaredNorm();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ClusterResult td_aware_cluster(const LatentMatrix& latents, double h_td, double radius_factor) {
  const Eigen::Index n = latents.cols();
  if (n == 0) throw EmptyGraphError("no states survived TE filtering");
  const double radius = radius_factor * h_td;
  ClusterResult res;
  res.assignment.resize(static_cast<std::size_t>(n));
  LatentMatrix seeds(latents.rows(), std::min<Eigen::Index>(n, 64));
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = -1;
    double best_d2 = kInfinity;
    for (Eigen::Index c = 0; c < count; ++c) {
      const double d2 = sq_distance(latents, i, seeds, c);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    if (best >= 0 && std::sqrt(best_d2) <= radius) {
      res.assignment[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
      continue;
    }
    if (count == seeds.cols()) seeds.conservativeResize(Eigen::NoChange, std::min<Eigen::Index>(n, 2 * count));
    seeds.col(count) = latents.col(i);
    res.seed_index.push_back(static_cast<std::size_t>(i));
    res.assignment[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(count);
    ++count;
  }
  res.seeds = seeds.leftCols(count);
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(latents.rows(), count);
  std::vector<std::size_t> members(static_cast<std::size_t>(count), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = res.assignment[static_cast<std::size_t>(i)];
    sums.col(c) += latents.col(i).cast<double>();
    ++members[c];
  }
  res.centers.resize(latents.rows(), count);
  for (Eigen::Index c = 0; c < count; ++c) {
    res.centers.col(c) = (sums.col(c) / static_cast<double>(members[static_cast<std::size_t>(c)])).cast<float>();
  }
  return res;
}

std::vector<Edge> connect_edges(const LatentMatrix& nodes, double h_td) {
  std::vector<Edge> edges;
  const Eigen::Index n = nodes.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = latent_distance(nodes.col(i), nodes.col(j));
      if (d <= h_td) edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), d});
    }
  }
  return edges;
}

std::vector<std::uint32_t> graph_components(const TdGraph& graph) {
  std::vector<std::uint32_t> parent(graph.node_count());
  std::iota(parent.begin(), parent.end(), 0u);
  auto root = [&](std::uint32_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& e : graph.edges) {
    const auto a = root(e.i), b = root(e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::uint32_t> label(parent.size());
  for (std::uint32_t v = 0; v < label.size(); ++v) label[v] = root(v);
  return label;
}

GoalDistances dijkstra_from_goal(const LatentPoint& goal, const TdGraph& graph) {
  const std::size_t n = graph.node_count();
  if (n == 0) throw EmptyGraphError("graph has no nodes");
  if (goal.size() != graph.nodes.rows()) throw std::invalid_argument("goal latent dimension differs from graph");
  GoalDistances out;
  out.goal = goal;
  out.dist.assign(n, kInfinity);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(n);
  for (const auto& e : graph.edges) {
    adj[e.i].push_back({e.j, e.weight});
    adj[e.j].push_back({e.i, e.weight});
  }
  std::size_t nearest = 0;
  double nearest_d = kInfinity;
  for (std::size_t v = 0; v < n; ++v) {
    const double d = latent_distance(goal, graph.nodes.col(static_cast<Eigen::Index>(v)));
    if (d <= graph.h_td) out.goal_links.push_back({static_cast<std::uint32_t>(v), d});
    if (d < nearest_d) {
      nearest_d = d;
      nearest = v;
    }
  }
  if (out.goal_links.empty()) out.goal_links.push_back({static_cast<std::uint32_t>(nearest), nearest_d});
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (const auto& [v, d] : out.goal_links) {
    if (d < out.dist[v]) {
      out.dist[v] = d;
      queue.push({d, v});
    }
  }
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > out.dist[u]) continue;
    for (const auto& [v, w] : adj[u]) {
      const double nd = d + w;
      if (nd < out.dist[v]) {
        out.dist[v] = nd;
        queue.push({nd, v});
      }
    }
  }
  return out;
}

std::vector<std::size_t> baseline_nodes_fps(const LatentMatrix& latents, std::size_t k) {
  if (k == 0) throw std::invalid_argument("node count must be positive");
  const auto n = static_cast<std::size_t>(latents.cols());
  if (k > n) throw std::invalid_argument("node count exceeds the number of points");
  std::vector<std::size_t> picked{0};
  std::vector<double> min_d2(n, kInfinity);
  while (picked.size() < k) {
    const auto last = static_cast<Eigen::Index>(picked.back());
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], sq_distance(latents, static_cast<Eigen::Index>(i), latents, last));
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

KmeansResult baseline_nodes_kmeans(const LatentMatrix& latents, std::size_t k, int iters, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("node count must be positive");
  const auto n = static_cast<std::size_t>(latents.cols());
  if (k > n) throw std::invalid_argument("node count exceeds the number of points");
  Rng rng = Rng::derive(seed, 0x6b6d65616e73ULL);
  const Eigen::MatrixXd x = latents.cast<double>();
  Eigen::MatrixXd centers(x.rows(), static_cast<Eigen::Index>(k));
  centers.col(0) = x.col(static_cast<Eigen::Index>(rng.uniform_int(n)));
  std::vector<double> d2(n, kInfinity);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.col(static_cast<Eigen::Index>(i)) - centers.col(static_cast<Eigen::Index>(c - 1)))
                                  .squaredNorm());
      total += d2[i];
    }
    std::size_t chosen = n - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = rng.uniform_int(n);
    }
    centers.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(chosen));
  }
  KmeansResult res;
  std::vector<std::size_t> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = kInfinity;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (x.col(static_cast<Eigen::Index>(i)) - centers.col(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best) {
          best = d;
          assign[i] = c;
        }
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(k));
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(static_cast<Eigen::Index>(assign[i])) += x.col(static_cast<Eigen::Index>(i));
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) centers.col(static_cast<Eigen::Index>(c)) = sums.col(static_cast<Eigen::Index>(c)) / count[c];
    }
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      objective += (x.col(static_cast<Eigen::Index>(i)) - centers.col(static_cast<Eigen::Index>(assign[i]))).squaredNorm();
    }
    res.objective.push_back(objective);
  }
  res.centers = centers.cast<float>();
  return res;
}

std::string_view to_string(NodeMethod m) {
  switch (m) {
    case NodeMethod::gas:
      return "gas";
    case NodeMethod::fps:
      return "fps";
    case NodeMethod::kmeans:
      return "kmeans";
  }
  return "unknown";
}

NodeMethod parse_node_method(std::string_view text) {
  if (text == "gas") return NodeMethod::gas;
  if (text == "fps") return NodeMethod::fps;
  if (text == "kmeans") return NodeMethod::kmeans;
  throw std::invalid_argument("unknown node method '" + std::string(text) + "' (expected gas|fps|kmeans)");
}

TdGraph build_graph(const DatasetLatents& latents, const GraphBuildOptions& opts, GraphBuildStats* stats) {
  if (!(opts.h_td > 0.0)) throw std::invalid_argument("h_td must be positive");
  GraphBuildStats st;
  auto t0 = std::chrono::steady_clock::now();
  const FilterResult filtered = filter_states(latents, opts.h_td, opts.te_thresh);
  st.filter_seconds = seconds_since(t0);
  st.total_states = filtered.total;
  st.defined_states = filtered.defined;
  st.filtered_states = filtered.state_index.size();
  if (filtered.state_index.empty()) throw EmptyGraphError("no states survived TE filtering");

  TdGraph g;
  g.h_td = opts.h_td;
  g.te_thresh = opts.te_thresh;
  t0 = std::chrono::steady_clock::now();
  if (!opts.stitching) {
    // Cluster each trajectory on its own; edges stay inside one trajectory.
    std::vector<LatentMatrix> parts;
    std::size_t begin = 0;
    Eigen::Index total = 0;
    while (begin < filtered.state_index.size()) {
      const std::size_t limit = *std::upper_bound(latents.offsets.begin(), latents.offsets.end(),
                                                  filtered.state_index[begin]);
      std::size_t end = begin;
      while (end < filtered.state_index.size() && filtered.state_index[end] < limit) ++end;
      parts.push_back(td_aware_cluster(filtered.points.middleCols(static_cast<Eigen::Index>(begin),
                                                                   static_cast<Eigen::Index>(end - begin)),
                                       opts.h_td, opts.radius_factor)
                          .centers);
      total += parts.back().cols();
      begin = end;
    }
    g.nodes.resize(filtered.points.rows(), total);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      const auto local = connect_edges(p, opts.h_td);
      for (const auto& e : local) {
        g.edges.push_back({static_cast<std::uint32_t>(e.i + at), static_cast<std::uint32_t>(e.j + at), e.weight});
      }
      g.nodes.middleCols(at, p.cols()) = p;
      at += p.cols();
    }
    st.cluster_seconds = seconds_since(t0);
  } else {
    const ClusterResult clusters = td_aware_cluster(filtered.points, opts.h_td, opts.radius_factor);
    switch (opts.method) {
      case NodeMethod::gas:
        g.nodes = clusters.centers;
        break;
      case NodeMethod::fps: {
        const std::size_t k = opts.node_count ? opts.node_count : static_cast<std::size_t>(clusters.centers.cols());
        const auto idx = baseline_nodes_fps(filtered.points, k);
        g.nodes.resize(filtered.points.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
          g.nodes.col(static_cast<Eigen::Index>(i)) = filtered.points.col(static_cast<Eigen::Index>(idx[i]));
        }
        break;
      }
      case NodeMethod::kmeans: {
        const std::size_t k = opts.node_count ? opts.node_count : static_cast<std::size_t>(clusters.centers.cols());
        g.nodes = baseline_nodes_kmeans(filtered.points, k, opts.kmeans_iters, opts.seed).centers;
        break;
      }
    }
    st.cluster_seconds = seconds_since(t0);
    g.edges = connect_edges(g.nodes, opts.h_td);
  }
  st.node_count = g.node_count();
  st.edge_count = g.edges.size();
  g.meta = {{"node_method", to_string(opts.method)},
            {"stitching", opts.stitching},
            {"radius_factor", opts.radius_factor},
            {"total_states", st.total_states},
            {"defined_states", st.defined_states},
            {"filtered_states", st.filtered_states}};
  if (stats) *stats = st;
  return g;
}

namespace {
constexpr int kGraphVersion = 1;
}

std::string graph_to_json(const TdGraph& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (Eigen::Index i = 0; i < g.nodes.cols(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < g.nodes.rows(); ++k) row.push_back(g.nodes(k, i));
    nodes.push_back(std::move(row));
  }
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.i, e.j, e.weight});
  json doc = {{"version", kGraphVersion},
              {"h_td", g.h_td},
              {"te_thresh", g.te_thresh ? json(*g.te_thresh) : json(nullptr)},
              {"nodes", std::move(nodes)},
              {"edges", std::move(edges)},
              {"meta", g.meta}};
  return doc.dump() + "\n";
}

TdGraph graph_from_json(const std::string& text) {
  using nlohmann::json;
  TdGraph g;
  try {
    const json doc = json::parse(text);
    if (doc.at("version").get<int>() != kGraphVersion) throw io::FormatError("unsupported graph version");
    g.h_td = doc.at("h_td").get<double>();
    if (!doc.at("te_thresh").is_null()) g.te_thresh = doc.at("te_thresh").get<double>();
    const auto& nodes = doc.at("nodes");
    const auto dim = nodes.empty() ? 0 : nodes.at(0).size();
    g.nodes.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].size() != dim) throw io::FormatError("ragged node list");
      for (std::size_t k = 0; k < dim; ++k) {
        g.nodes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = nodes[i][k].get<float>();
      }
    }
    for (const auto& e : doc.at("edges")) {
      Edge edge{e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>(), e.at(2).get<double>()};
      if (edge.i >= edge.j || edge.j >= nodes.size()) throw io::FormatError("bad edge endpoints");
      g.edges.push_back(edge);
    }
    g.meta = doc.value("meta", json::object());
  } catch (const json::exception& e) {
    throw io::FormatError(std::string("malformed graph file: ") + e.what());
  }
  return g;
}

void save_graph(const TdGraph& g, const std::filesystem::path& path) { io::write_file(path, graph_to_json(g)); }
TdGraph load_graph(const std::filesystem::path& path) { return graph_from_json(io::read_file(path)); }

}  // namespace gas
