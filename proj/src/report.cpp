#include "gas/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "gas/io.hpp"

namespace gas {

std::pair<double, double> mean_pop_std(std::vector<double> values) {
  if (values.empty()) return {0.0, 0.0};
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

std::vector<double> per_seed_returns(const std::vector<EvalRow>& rows) {
  std::map<std::uint64_t, std::vector<double>> by_seed;
  for (const auto& r : rows) by_seed[r.seed].push_back(r.success_rate);
  std::vector<double> out;
  for (auto& [seed, rates] : by_seed) out.push_back(100.0 * mean_pop_std(rates).first);
  return out;
}

std::vector<ResultRow> aggregate(const std::vector<RunInput>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("report needs at least one input");
  struct Group {
    std::vector<EvalRow> rows;
    std::vector<double> nodes, retained;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const auto& in : inputs) {
    auto& g = groups[{in.style, in.variant}];
    g.rows.insert(g.rows.end(), in.rows.begin(), in.rows.end());
    if (in.node_count) g.nodes.push_back(*in.node_count);
    if (in.retained_fraction) g.retained.push_back(*in.retained_fraction);
  }
  std::vector<ResultRow> out;
  for (const auto& [key, g] : groups) {
    ResultRow r;
    r.style = key.first;
    r.variant = key.second;
    const auto returns = per_seed_returns(g.rows);
    std::tie(r.mean_return, r.std_return) = mean_pop_std(returns);
    r.seeds = returns.size();
    if (!g.nodes.empty()) r.node_count = mean_pop_std(g.nodes).first;
    if (!g.retained.empty()) r.retained_fraction = mean_pop_std(g.retained).first;
    out.push_back(r);
  }
  std::map<std::string, double> best;
  for (const auto& r : out) best[r.style] = std::max(best.count(r.style) ? best[r.style] : -1.0, r.mean_return);
  for (auto& r : out) r.marked = r.mean_return >= 0.95 * best[r.style] - 1e-9;
  return out;
}

namespace {

std::string num(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string report_markdown(const std::vector<ResultRow>& rows) {
  std::string out =
      "# Results\n\nNormalized return (0-100), mean +- population std across seeds. "
      "Bold rows are within 95% of the best mean for their dataset style.\n\n"
      "| style | variant | return | seeds | nodes | retained |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    std::string ret = num(r.mean_return, 1) + " +- " + num(r.std_return, 1);
    if (r.marked) ret = "**" + ret + "**";
    out += "| " + r.style + " | " + r.variant + " | " + ret + " | " + std::to_string(r.seeds) + " | " +
           (r.node_count ? num(*r.node_count, 1) : "-") + " | " +
           (r.retained_fraction ? num(100.0 * *r.retained_fraction, 1) + "%" : "-") + " |\n";
  }
  return out;
}

std::string report_csv(const std::vector<ResultRow>& rows) {
  std::string out = "style,variant,mean_return,std_return,seeds,node_count,retained_fraction,marked\n";
  for (const auto& r : rows) {
    out += r.style + "," + r.variant + "," + num(r.mean_return, 6) + "," + num(r.std_return, 6) + "," +
           std::to_string(r.seeds) + "," + (r.node_count ? num(*r.node_count, 3) : "") + "," +
           (r.retained_fraction ? num(*r.retained_fraction, 6) : "") + "," + (r.marked ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<EvalRow> read_eval_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw io::FormatError("evaluation CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) header.push_back(col);
  }
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw io::FormatError("evaluation CSV is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_goal = column("goal_id"), c_seed = column("seed"), c_rate = column("success_rate"),
             c_steps = column("mean_steps");
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != header.size()) throw io::FormatError("row has " + std::to_string(cells.size()) + " cells: " + line);
    try {
      EvalRow r;
      r.goal_id = std::stoi(cells[c_goal]);
      r.seed = std::stoull(cells[c_seed]);
      r.success_rate = std::stod(cells[c_rate]);
      r.mean_steps = std::stod(cells[c_steps]);
      if (r.success_rate < 0.0 || r.success_rate > 1.0) throw io::FormatError("column 'success_rate' out of [0, 1]");
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw io::FormatError("malformed evaluation row: " + line);
    }
  }
  return rows;
}

}  // namespace gas
