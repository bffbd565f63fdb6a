#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gas/agent.hpp"
#include "gas/env.hpp"
#include "gas/graph.hpp"
#include "gas/tdr.hpp"

namespace gas {

/// Trained pieces needed to run the planner. Non-owning.
struct PlannerComponents {
  const Env* env = nullptr;
  const TdrModel* tdr = nullptr;
  const AgentModel* agent = nullptr;
  const TdGraph* graph = nullptr;
  double h_td = 4.0;

  /// Throws std::invalid_argument on missing parts or latent size mismatch.
  void validate() const;
};

struct SelectOptions {
  /// Treat the goal itself as a candidate subgoal with remaining distance 0.
  bool goal_candidate = true;
  /// When non-null, only nodes with a non-zero entry may be selected.
  const std::vector<std::uint8_t>* allowed = nullptr;
};

/// Index in [0, node_count()] minimizing Dists[v] + ||h_cur - v|| over the
/// nodes within h_td of h_cur; node_count() stands for the goal itself.
std::size_t select_subgoal(const LatentPoint& h_cur, const TdGraph& graph, const GoalDistances& dists, double h_td,
                           const SelectOptions& opts = {});

struct EpisodeOptions {
  int max_steps = 200;
  bool deterministic = false;
  SelectOptions select;
  /// Commit to the edge-connected component of the node nearest the start and
  /// never select a node outside it.
  bool single_component = false;
};

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  std::vector<std::size_t> subgoals;
  /// Remaining goal distance of each selected subgoal.
  std::vector<double> subgoal_dists;
  double final_distance = 0.0;
};

/// Executes the plan-act loop until the goal predicate fires or max_steps.
/// `dists` may be null, in which case it is computed for the goal.
EpisodeResult run_episode(const PlannerComponents& c, const EnvState& start, const EnvState& goal,
                          const GoalDistances* dists, const EpisodeOptions& opts, Rng& rng);

/// max(200, 4 * BFS steps between the cells, in environment steps).
int default_max_steps(const Env& env, Cell start, Cell goal);

struct EvalTask {
  int goal_id = 0;
  Cell start;
  Cell goal;
};

/// Pairs the maze's goal candidates with its start candidates (cycled).
std::vector<EvalTask> maze_tasks(const Maze& maze, std::size_t max_goals = 0);

struct EvalOptions {
  int rollouts = 20;
  /// 0 selects the per-task default.
  int max_steps = 0;
  bool deterministic = false;
  SelectOptions select;
  bool single_component = false;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct EvalRow {
  int goal_id = 0;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double mean_steps = 0.0;
};

/// One row per (task, seed). Episodes run in parallel; each draws from its own
/// seed-derived stream, so results do not depend on the thread count.
std::vector<EvalRow> evaluate(const PlannerComponents& c, const std::vector<EvalTask>& tasks,
                              const std::vector<std::uint64_t>& seeds, const EvalOptions& opts);

/// Mean success over rows, scaled to [0, 100].
double normalized_return(const std::vector<EvalRow>& rows);

std::string eval_csv(const std::vector<EvalRow>& rows);
std::vector<EvalRow> parse_eval_csv(const std::string& text);

}  // namespace gas
