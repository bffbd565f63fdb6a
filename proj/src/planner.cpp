#include "gas/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

#include "gas/io.hpp"

namespace gas {

void PlannerComponents::validate() const {
  if (!env || !tdr || !agent || !graph) throw std::invalid_argument("planner is missing a component");
  if (graph->node_count() == 0) throw EmptyGraphError("graph has no nodes");
  if (tdr->dim() != graph->dim() || tdr->dim() != agent->latent_dim) {
    throw std::invalid_argument("latent dimension mismatch: tdr " + std::to_string(tdr->dim()) + ", graph " +
                                std::to_string(graph->dim()) + ", policy " + std::to_string(agent->latent_dim));
  }
  if (!(h_td > 0.0)) throw std::invalid_argument("h_td must be positive");
}

std::size_t select_subgoal(const LatentPoint& h_cur, const TdGraph& graph, const GoalDistances& dists, double h_td,
                           const SelectOptions& opts) {
  const std::size_t n = graph.node_count();
  if (n == 0) throw EmptyGraphError("graph has no nodes");
  std::size_t best = n + 1;
  double best_score = kInfinity;
  bool any_near = false;
  std::size_t nearest = 0;
  double nearest_d = kInfinity;
  const auto* allowed = opts.allowed;
  for (std::size_t v = 0; v < n; ++v) {
    if (allowed && !(*allowed)[v]) continue;
    const double d = latent_distance(h_cur, graph.nodes.col(static_cast<Eigen::Index>(v)));
    if (d < nearest_d) {
      nearest_d = d;
      nearest = v;
    }
    if (d > h_td) continue;
    any_near = true;
    const double score = dists.dist[v] + d;
    if (score < best_score) {
      best_score = score;
      best = v;
    }
  }
  if (opts.goal_candidate) {
    const double d = latent_distance(h_cur, dists.goal);
    if (d <= h_td) {
      any_near = true;
      if (d < best_score) {
        best_score = d;
        best = n;
      }
    }
  }
  if (!any_near) return nearest;
  if (best <= n) return best;
  // Every candidate in range is cut off from the goal.
  std::size_t toward = 0;
  double toward_d = kInfinity;
  for (std::size_t v = 0; v < n; ++v) {
    if (allowed && !(*allowed)[v]) continue;
    const double d = latent_distance(dists.goal, graph.nodes.col(static_cast<Eigen::Index>(v)));
    if (d < toward_d) {
      toward_d = d;
      toward = v;
    }
  }
  return toward;
}

EpisodeResult run_episode(const PlannerComponents& c, const EnvState& start, const EnvState& goal,
                          const GoalDistances* dists, const EpisodeOptions& opts, Rng& rng) {
  c.validate();
  const Env& env = *c.env;
  EpisodeResult res;
  const LatentPoint h_goal = c.tdr->embed(goal);
  GoalDistances local;
  if (!dists) {
    local = dijkstra_from_goal(h_goal, *c.graph);
    dists = &local;
  }
  const std::size_t n = c.graph->node_count();
  SelectOptions select = opts.select;
  std::vector<std::uint8_t> mask;
  if (opts.single_component) {
    const LatentPoint h0 = c.tdr->embed(start);
    std::size_t first = 0;
    for (std::size_t v = 1; v < n; ++v)
      if (latent_distance(h0, c.graph->nodes.col(static_cast<Eigen::Index>(v))) <
          latent_distance(h0, c.graph->nodes.col(static_cast<Eigen::Index>(first))))
        first = v;
    const auto label = graph_components(*c.graph);
    mask.resize(n);
    for (std::size_t v = 0; v < n; ++v) mask[v] = label[v] == label[first];
    select.allowed = &mask;
  }
  EnvState s = start;
  bool done = reward(s, goal, env.success_radius) == 1;
  while (!done && res.steps < opts.max_steps) {
    const LatentPoint h = c.tdr->embed(s);
    const std::size_t pick = select_subgoal(h, *c.graph, *dists, c.h_td, select);
    res.subgoals.push_back(pick);
    LatentPoint target;
    if (pick == n) {
      target = h_goal;
      res.subgoal_dists.push_back(0.0);
    } else {
      target = c.graph->nodes.col(static_cast<Eigen::Index>(pick));
      res.subgoal_dists.push_back(dists->dist[pick]);
    }
    auto dir = direction_to_subgoal(h, target);
    if (!dir) dir = direction_to_subgoal(h, h_goal);
    if (!dir) dir = sample_direction(static_cast<int>(h.size()), rng);
    const EnvAction a = act(*c.agent, s, *dir, opts.deterministic, rng);
    s = step(env, s, a);
    ++res.steps;
    done = reward(s, goal, env.success_radius) == 1;
  }
  res.success = done;
  res.final_distance = distance(s.position, goal.position);
  return res;
}

int default_max_steps(const Env& env, Cell start, Cell goal) {
  const int bfs = bfs_distance(env.maze, start, goal);
  if (bfs == kUnreachable) return 200;
  return std::max(200, 4 * bfs * env.steps_per_cell());
}

std::vector<EvalTask> maze_tasks(const Maze& maze, std::size_t max_goals) {
  if (maze.goals().empty() || maze.starts().empty()) {
    throw std::invalid_argument("maze needs at least one start and one goal candidate");
  }
  std::vector<EvalTask> tasks;
  const std::size_t count = max_goals ? std::min(max_goals, maze.goals().size()) : maze.goals().size();
  for (std::size_t i = 0; i < count; ++i) {
    tasks.push_back({static_cast<int>(i), maze.starts()[i % maze.starts().size()], maze.goals()[i]});
  }
  return tasks;
}

std::vector<EvalRow> evaluate(const PlannerComponents& c, const std::vector<EvalTask>& tasks,
                              const std::vector<std::uint64_t>& seeds, const EvalOptions& opts) {
  c.validate();
  if (tasks.empty()) throw std::invalid_argument("evaluation needs at least one goal");
  if (opts.rollouts <= 0) throw std::invalid_argument("rollouts must be positive");
  // Goal distances are shared by every episode with the same goal cell.
  std::map<std::pair<int, int>, GoalDistances> cache;
  for (const auto& t : tasks) {
    const auto key = std::make_pair(t.goal.row, t.goal.col);
    if (!cache.count(key)) cache.emplace(key, dijkstra_from_goal(c.tdr->embed(c.env->state_at(t.goal)), *c.graph));
  }
  struct Job {
    std::size_t task, seed;
    int rollout;
  };
  std::vector<Job> jobs;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      for (int r = 0; r < opts.rollouts; ++r) jobs.push_back({ti, si, r});
    }
  }
  std::vector<EpisodeResult> results(jobs.size());
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t j = begin; j < jobs.size(); j += stride) {
      const auto& job = jobs[j];
      const auto& task = tasks[job.task];
      EpisodeOptions eo;
      eo.max_steps = opts.max_steps > 0 ? opts.max_steps : default_max_steps(*c.env, task.start, task.goal);
      eo.deterministic = opts.deterministic;
      eo.select = opts.select;
      eo.single_component = opts.single_component;
      Rng rng = Rng::derive(seeds[job.seed],
                            (static_cast<std::uint64_t>(task.goal_id) << 32) | static_cast<std::uint32_t>(job.rollout));
      results[j] = run_episode(c, c.env->state_at(task.start), c.env->state_at(task.goal),
                               &cache.at({task.goal.row, task.goal.col}), eo, rng);
    }
  };
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  if (threads <= 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t, threads);
    for (auto& th : pool) th.join();
  }
  std::vector<EvalRow> rows;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      int wins = 0;
      double steps = 0.0;
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].task != ti || jobs[j].seed != si) continue;
        wins += results[j].success ? 1 : 0;
        steps += results[j].steps;
      }
      rows.push_back({tasks[ti].goal_id, seeds[si], static_cast<double>(wins) / opts.rollouts, steps / opts.rollouts});
    }
  }
  return rows;
}

double normalized_return(const std::vector<EvalRow>& rows) {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : rows) sum += r.success_rate;
  return 100.0 * sum / static_cast<double>(rows.size());
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string out = "goal_id,seed,success_rate,mean_steps\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%llu,%.6f,%.6f\n", r.goal_id, static_cast<unsigned long long>(r.seed),
                  r.success_rate, r.mean_steps);
    out += buf;
  }
  return out;
}

std::vector<EvalRow> parse_eval_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "goal_id,seed,success_rate,mean_steps") {
    throw io::FormatError("evaluation CSV header must be goal_id,seed,success_rate,mean_steps");
  }
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EvalRow r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "%d,%llu,%lf,%lf", &r.goal_id, &seed, &r.success_rate, &r.mean_steps) != 4) {
      throw io::FormatError("malformed evaluation row: " + line);
    }
    r.seed = seed;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace gas
