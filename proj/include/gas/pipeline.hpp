#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gas/config.hpp"
#include "gas/planner.hpp"

namespace gas {

/// Part of every cache key; bump when a stage's output format or algorithm changes.
inline constexpr const char* kCodeVersion = "gas-pipeline-2";

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage " + stage + " failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  std::string key;
  bool cache_hit = false;
  std::filesystem::path dir;
  /// Artifact file name -> SHA-256 of its bytes.
  std::map<std::string, std::string> artifacts;
  long long train_steps = 0;
  nlohmann::json info = nlohmann::json::object();

  std::filesystem::path artifact(const std::string& file) const { return dir / file; }
};

struct PipelineOptions {
  std::filesystem::path out_dir = "gas-run";
  /// Overrides GAS_CACHE_DIR, which in turn overrides <out_dir>/cache.
  std::optional<std::filesystem::path> cache_dir;
  /// Relative maze paths are tried against this directory when they do not
  /// exist relative to the working directory.
  std::filesystem::path base_dir = ".";
  std::ostream* log = nullptr;
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  std::vector<EvalRow> rows;
  std::filesystem::path manifest;
  std::filesystem::path eval_csv;

  const StageRecord& stage(const std::string& name) const;
  /// Gradient steps actually executed; cached stages contribute none.
  long long total_train_steps() const;
};

std::filesystem::path resolve_cache_dir(const PipelineOptions& opts);
std::filesystem::path resolve_maze_path(const RunConfig& c, const std::filesystem::path& base_dir);
Env make_env(const RunConfig& c, const std::filesystem::path& base_dir = ".");

/// Runs data -> (tdr -> graph -> policy -> eval) per seed, each stage cached by
/// a content hash of its inputs, code version and relevant config.
PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& opts);

struct AblationRow {
  std::string axis;
  std::string value;
  double retained_pct = 0.0;
  double node_count = 0.0;
  double edge_count = 0.0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

/// Sweeps one axis: te-thresh | h-td | node-method | subgoal-sampling.
std::vector<AblationRow> ablate(const RunConfig& cfg, const std::string& axis, const std::vector<std::string>& values,
                                const PipelineOptions& opts);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace gas
