#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gas/agent.hpp"
#include "gas/dataset.hpp"
#include "gas/env.hpp"
#include "gas/graph.hpp"
#include "gas/tdr.hpp"

namespace gas {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvSection {
  std::string maze = "mazes/two_room.txt";
  Dynamics dynamics = Dynamics::grid;
  double cell_size = 1.0;
  double action_limit = 1.0;
  double success_radius = 0.5;
};

struct DataSection {
  DatasetStyle style = DatasetStyle::stitch;
  std::size_t transitions = 30000;
  std::uint64_t seed = 0;
  GenerationConfig gen;
};

struct GraphSection {
  double h_td = 4.0;
  std::optional<double> te_thresh = 0.9;
  NodeMethod node_method = NodeMethod::gas;
  double radius_factor = 0.5;
  bool stitching = true;
  std::size_t node_count = 0;
  int kmeans_iters = 20;
};

struct EvalSection {
  std::size_t goals = 0;  // 0: every goal candidate
  int rollouts = 20;
  int max_steps = 0;      // 0: per-task default
  bool deterministic = false;
  bool goal_candidate = true;
  unsigned threads = 0;
};

/// Every tunable of one pipeline run. Seeds of the training stages come from
/// `seeds`; each seed trains and evaluates an independent TDR/policy pair.
struct RunConfig {
  EnvSection env;
  DataSection data;
  TdrConfig tdr;
  GraphSection graph;
  AgentConfig agent;
  /// Unset: 1.0 for navigate/stitch data, 0.01 for explore data.
  std::optional<double> alpha;
  EvalSection eval;
  std::vector<std::uint64_t> seeds = {0};

  /// Throws ConfigError naming the offending key.
  void validate() const;

  double effective_alpha() const;
};

/// Parses `key = value` lines grouped in [section]s. Unknown sections or keys
/// are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& c);

/// Canonical text of one section, used for cache keys.
std::string serialize_section(const RunConfig& c, const std::string& section);

bool operator==(const RunConfig& a, const RunConfig& b);

/// Overrides one key ("section.key") from text, with the same validation as parsing.
void set_config_value(RunConfig& c, const std::string& dotted_key, const std::string& value);

}  // namespace gas
