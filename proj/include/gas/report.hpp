#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gas/planner.hpp"

namespace gas {

/// Evaluation rows of one method variant on one dataset style.
struct RunInput {
  std::string style;
  std::string variant;
  std::vector<EvalRow> rows;
  std::optional<double> node_count;
  std::optional<double> retained_fraction;
};

struct ResultRow {
  std::string style;
  std::string variant;
  double mean_return = 0.0;
  double std_return = 0.0;
  std::size_t seeds = 0;
  std::optional<double> node_count;
  std::optional<double> retained_fraction;
  bool marked = false;
};

/// Mean and population standard deviation; order-independent.
std::pair<double, double> mean_pop_std(std::vector<double> values);

/// Normalized return of each seed (mean success over its goals x 100), by ascending seed.
std::vector<double> per_seed_returns(const std::vector<EvalRow>& rows);

/// Groups by (style, variant), aggregates across seeds and marks rows within
/// 95% of the best mean of their style.
std::vector<ResultRow> aggregate(const std::vector<RunInput>& inputs);

std::string report_markdown(const std::vector<ResultRow>& rows);
std::string report_csv(const std::vector<ResultRow>& rows);

/// Reads an evaluation CSV by column name; a missing column is reported by name.
std::vector<EvalRow> read_eval_table(const std::string& text);

}  // namespace gas
