#include "gas/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <sstream>

#include "gas/io.hpp"

namespace gas {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto t = trim(s);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& s, F convert) {
  std::vector<T> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!trim(item).empty()) out.push_back(static_cast<T>(convert(item)));
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  const char* section;
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"env", "maze", [](const RunConfig& c) { return c.env.maze; },
       [](RunConfig& c, const std::string& v) { c.env.maze = trim(v); }},
      {"env", "dynamics", [](const RunConfig& c) { return std::string(to_string(c.env.dynamics)); },
       [](RunConfig& c, const std::string& v) { c.env.dynamics = parse_dynamics(trim(v)); }},
      {"env", "cell_size", [](const RunConfig& c) { return fmt(c.env.cell_size); },
       [](RunConfig& c, const std::string& v) { c.env.cell_size = to_double(v); }},
      {"env", "action_limit", [](const RunConfig& c) { return fmt(c.env.action_limit); },
       [](RunConfig& c, const std::string& v) { c.env.action_limit = to_double(v); }},
      {"env", "success_radius", [](const RunConfig& c) { return fmt(c.env.success_radius); },
       [](RunConfig& c, const std::string& v) { c.env.success_radius = to_double(v); }},

      {"data", "style", [](const RunConfig& c) { return std::string(to_string(c.data.style)); },
       [](RunConfig& c, const std::string& v) { c.data.style = parse_style(trim(v)); }},
      {"data", "transitions", [](const RunConfig& c) { return fmt(std::uint64_t{c.data.transitions}); },
       [](RunConfig& c, const std::string& v) { c.data.transitions = to_u64(v); }},
      {"data", "seed", [](const RunConfig& c) { return fmt(c.data.seed); },
       [](RunConfig& c, const std::string& v) { c.data.seed = to_u64(v); }},
      {"data", "navigate_length", [](const RunConfig& c) { return std::to_string(c.data.gen.navigate_length); },
       [](RunConfig& c, const std::string& v) { c.data.gen.navigate_length = to_int(v); }},
      {"data", "segment_length", [](const RunConfig& c) { return std::to_string(c.data.gen.segment_length); },
       [](RunConfig& c, const std::string& v) { c.data.gen.segment_length = to_int(v); }},
      {"data", "stitch_min_radius", [](const RunConfig& c) { return std::to_string(c.data.gen.stitch_min_radius); },
       [](RunConfig& c, const std::string& v) { c.data.gen.stitch_min_radius = to_int(v); }},
      {"data", "stitch_max_radius", [](const RunConfig& c) { return std::to_string(c.data.gen.stitch_max_radius); },
       [](RunConfig& c, const std::string& v) { c.data.gen.stitch_max_radius = to_int(v); }},
      {"data", "explore_length", [](const RunConfig& c) { return std::to_string(c.data.gen.explore_length); },
       [](RunConfig& c, const std::string& v) { c.data.gen.explore_length = to_int(v); }},
      {"data", "explore_period", [](const RunConfig& c) { return std::to_string(c.data.gen.explore_period); },
       [](RunConfig& c, const std::string& v) { c.data.gen.explore_period = to_int(v); }},
      {"data", "expert_noise", [](const RunConfig& c) { return fmt(c.data.gen.expert_noise); },
       [](RunConfig& c, const std::string& v) { c.data.gen.expert_noise = to_double(v); }},
      {"data", "explore_noise", [](const RunConfig& c) { return fmt(c.data.gen.explore_noise); },
       [](RunConfig& c, const std::string& v) { c.data.gen.explore_noise = to_double(v); }},

      {"tdr", "dim", [](const RunConfig& c) { return std::to_string(c.tdr.latent_dim); },
       [](RunConfig& c, const std::string& v) { c.tdr.latent_dim = to_int(v); }},
      {"tdr", "hidden", [](const RunConfig& c) { return fmt_list(c.tdr.hidden); },
       [](RunConfig& c, const std::string& v) { c.tdr.hidden = to_list<int>(v, to_int); }},
      {"tdr", "layer_norm", [](const RunConfig& c) { return fmt_bool(c.tdr.layer_norm); },
       [](RunConfig& c, const std::string& v) { c.tdr.layer_norm = to_bool(v); }},
      {"tdr", "expectile", [](const RunConfig& c) { return fmt(c.tdr.expectile); },
       [](RunConfig& c, const std::string& v) { c.tdr.expectile = to_double(v); }},
      {"tdr", "gamma", [](const RunConfig& c) { return fmt(c.tdr.gamma); },
       [](RunConfig& c, const std::string& v) { c.tdr.gamma = to_double(v); }},
      {"tdr", "polyak", [](const RunConfig& c) { return fmt(c.tdr.polyak); },
       [](RunConfig& c, const std::string& v) { c.tdr.polyak = to_double(v); }},
      {"tdr", "lr", [](const RunConfig& c) { return fmt(c.tdr.learning_rate); },
       [](RunConfig& c, const std::string& v) { c.tdr.learning_rate = to_double(v); }},
      {"tdr", "batch", [](const RunConfig& c) { return std::to_string(c.tdr.batch); },
       [](RunConfig& c, const std::string& v) { c.tdr.batch = to_int(v); }},
      {"tdr", "steps", [](const RunConfig& c) { return std::to_string(c.tdr.steps); },
       [](RunConfig& c, const std::string& v) { c.tdr.steps = to_int(v); }},
      {"tdr", "p_future", [](const RunConfig& c) { return fmt(c.tdr.p_future); },
       [](RunConfig& c, const std::string& v) { c.tdr.p_future = to_double(v); }},

      {"graph", "h_td", [](const RunConfig& c) { return fmt(c.graph.h_td); },
       [](RunConfig& c, const std::string& v) { c.graph.h_td = to_double(v); }},
      {"graph", "te_thresh", [](const RunConfig& c) { return c.graph.te_thresh ? fmt(*c.graph.te_thresh) : "none"; },
       [](RunConfig& c, const std::string& v) {
         if (trim(v) == "none") {
           c.graph.te_thresh.reset();
         } else {
           c.graph.te_thresh = to_double(v);
         }
       }},
      {"graph", "node_method", [](const RunConfig& c) { return std::string(to_string(c.graph.node_method)); },
       [](RunConfig& c, const std::string& v) { c.graph.node_method = parse_node_method(trim(v)); }},
      {"graph", "radius_factor", [](const RunConfig& c) { return fmt(c.graph.radius_factor); },
       [](RunConfig& c, const std::string& v) { c.graph.radius_factor = to_double(v); }},
      {"graph", "stitching", [](const RunConfig& c) { return fmt_bool(c.graph.stitching); },
       [](RunConfig& c, const std::string& v) { c.graph.stitching = to_bool(v); }},
      {"graph", "node_count", [](const RunConfig& c) { return fmt(std::uint64_t{c.graph.node_count}); },
       [](RunConfig& c, const std::string& v) { c.graph.node_count = to_u64(v); }},
      {"graph", "kmeans_iters", [](const RunConfig& c) { return std::to_string(c.graph.kmeans_iters); },
       [](RunConfig& c, const std::string& v) { c.graph.kmeans_iters = to_int(v); }},

      {"agent", "hidden", [](const RunConfig& c) { return fmt_list(c.agent.hidden); },
       [](RunConfig& c, const std::string& v) { c.agent.hidden = to_list<int>(v, to_int); }},
      {"agent", "layer_norm", [](const RunConfig& c) { return fmt_bool(c.agent.layer_norm); },
       [](RunConfig& c, const std::string& v) { c.agent.layer_norm = to_bool(v); }},
      {"agent", "expectile", [](const RunConfig& c) { return fmt(c.agent.expectile); },
       [](RunConfig& c, const std::string& v) { c.agent.expectile = to_double(v); }},
      {"agent", "gamma", [](const RunConfig& c) { return fmt(c.agent.gamma); },
       [](RunConfig& c, const std::string& v) { c.agent.gamma = to_double(v); }},
      {"agent", "alpha", [](const RunConfig& c) { return c.alpha ? fmt(*c.alpha) : "auto"; },
       [](RunConfig& c, const std::string& v) {
         if (trim(v) == "auto") {
           c.alpha.reset();
         } else {
           c.alpha = to_double(v);
         }
       }},
      {"agent", "log_std", [](const RunConfig& c) { return fmt(c.agent.log_std); },
       [](RunConfig& c, const std::string& v) { c.agent.log_std = to_double(v); }},
      {"agent", "polyak", [](const RunConfig& c) { return fmt(c.agent.polyak); },
       [](RunConfig& c, const std::string& v) { c.agent.polyak = to_double(v); }},
      {"agent", "lr", [](const RunConfig& c) { return fmt(c.agent.learning_rate); },
       [](RunConfig& c, const std::string& v) { c.agent.learning_rate = to_double(v); }},
      {"agent", "batch", [](const RunConfig& c) { return std::to_string(c.agent.batch); },
       [](RunConfig& c, const std::string& v) { c.agent.batch = to_int(v); }},
      {"agent", "steps", [](const RunConfig& c) { return std::to_string(c.agent.steps); },
       [](RunConfig& c, const std::string& v) { c.agent.steps = to_int(v); }},
      {"agent", "subgoal_sampling", [](const RunConfig& c) { return std::string(to_string(c.agent.sampling)); },
       [](RunConfig& c, const std::string& v) { c.agent.sampling = parse_subgoal_sampling(trim(v)); }},

      {"eval", "goals", [](const RunConfig& c) { return fmt(std::uint64_t{c.eval.goals}); },
       [](RunConfig& c, const std::string& v) { c.eval.goals = to_u64(v); }},
      {"eval", "rollouts", [](const RunConfig& c) { return std::to_string(c.eval.rollouts); },
       [](RunConfig& c, const std::string& v) { c.eval.rollouts = to_int(v); }},
      {"eval", "max_steps", [](const RunConfig& c) { return std::to_string(c.eval.max_steps); },
       [](RunConfig& c, const std::string& v) { c.eval.max_steps = to_int(v); }},
      {"eval", "deterministic", [](const RunConfig& c) { return fmt_bool(c.eval.deterministic); },
       [](RunConfig& c, const std::string& v) { c.eval.deterministic = to_bool(v); }},
      {"eval", "goal_candidate", [](const RunConfig& c) { return fmt_bool(c.eval.goal_candidate); },
       [](RunConfig& c, const std::string& v) { c.eval.goal_candidate = to_bool(v); }},
      {"eval", "threads", [](const RunConfig& c) { return std::to_string(c.eval.threads); },
       [](RunConfig& c, const std::string& v) { c.eval.threads = static_cast<unsigned>(to_u64(v)); }},

      {"run", "seeds", [](const RunConfig& c) { return fmt_list(c.seeds); },
       [](RunConfig& c, const std::string& v) { c.seeds = to_list<std::uint64_t>(v, to_u64); }},
  };
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys()) {
    if (section == k.section && name == k.name) return &k;
  }
  return nullptr;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("invalid value for " + key + ": " + what);
}

}  // namespace

void RunConfig::validate() const {
  require(!env.maze.empty(), "env.maze", "path is empty");
  require(env.cell_size > 0.0, "env.cell_size", "must be positive");
  require(env.action_limit > 0.0, "env.action_limit", "must be positive");
  require(env.success_radius > 0.0, "env.success_radius", "must be positive");
  require(data.transitions > 0, "data.transitions", "must be positive");
  require(data.gen.segment_length > 0, "data.segment_length", "must be positive");
  require(data.gen.navigate_length > 0, "data.navigate_length", "must be positive");
  require(data.gen.explore_length > 0, "data.explore_length", "must be positive");
  require(data.gen.explore_period > 0, "data.explore_period", "must be positive");
  require(data.gen.stitch_min_radius >= 1 && data.gen.stitch_min_radius <= data.gen.stitch_max_radius,
          "data.stitch_min_radius", "need 1 <= min <= stitch_max_radius");
  require(data.gen.expert_noise >= 0.0, "data.expert_noise", "must be non-negative");
  require(data.gen.explore_noise >= 0.0, "data.explore_noise", "must be non-negative");
  require(tdr.latent_dim >= 2, "tdr.dim", "must be at least 2");
  require(tdr.expectile > 0.0 && tdr.expectile < 1.0, "tdr.expectile", "must be in (0, 1)");
  require(tdr.gamma > 0.0 && tdr.gamma < 1.0, "tdr.gamma", "must be in (0, 1)");
  require(tdr.polyak >= 0.0 && tdr.polyak <= 1.0, "tdr.polyak", "must be in [0, 1]");
  require(tdr.learning_rate > 0.0, "tdr.lr", "must be positive");
  require(tdr.batch > 0, "tdr.batch", "must be positive");
  require(tdr.steps >= 0, "tdr.steps", "must be non-negative");
  require(tdr.p_future >= 0.0 && tdr.p_future <= 1.0, "tdr.p_future", "must be in [0, 1]");
  require(!tdr.hidden.empty(), "tdr.hidden", "needs at least one width");
  for (int h : tdr.hidden) require(h > 0, "tdr.hidden", "widths must be positive");
  require(graph.h_td > 0.0, "graph.h_td", "must be positive");
  require(!graph.te_thresh || (*graph.te_thresh >= -1.0 && *graph.te_thresh <= 1.0), "graph.te_thresh",
          "must be in [-1, 1] or none");
  require(graph.radius_factor > 0.0, "graph.radius_factor", "must be positive");
  require(graph.kmeans_iters >= 1, "graph.kmeans_iters", "must be at least 1");
  require(!agent.hidden.empty(), "agent.hidden", "needs at least one width");
  for (int h : agent.hidden) require(h > 0, "agent.hidden", "widths must be positive");
  require(agent.expectile > 0.0 && agent.expectile < 1.0, "agent.expectile", "must be in (0, 1)");
  require(agent.gamma > 0.0 && agent.gamma < 1.0, "agent.gamma", "must be in (0, 1)");
  require(!alpha || *alpha >= 0.0, "agent.alpha", "must be non-negative or auto");
  require(agent.polyak >= 0.0 && agent.polyak <= 1.0, "agent.polyak", "must be in [0, 1]");
  require(agent.learning_rate > 0.0, "agent.lr", "must be positive");
  require(agent.batch > 0, "agent.batch", "must be positive");
  require(agent.steps >= 0, "agent.steps", "must be non-negative");
  require(eval.rollouts > 0, "eval.rollouts", "must be positive");
  require(eval.max_steps >= 0, "eval.max_steps", "must be non-negative");
  require(!seeds.empty(), "run.seeds", "needs at least one seed");
}

double RunConfig::effective_alpha() const {
  if (alpha) return *alpha;
  return data.style == DatasetStyle::explore ? 0.01 : 1.0;
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must be inside a [section]");
    for (const auto& [name, node] : body) {
      const Key* k = find_key(section, name);
      if (!k) throw ConfigError("unknown config key " + section + "." + name);
      try {
        k->set(c, node.data());
      } catch (const std::invalid_argument& e) {
        throw ConfigError("invalid value for " + section + "." + name + ": " + e.what());
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string serialize_section(const RunConfig& c, const std::string& section) {
  std::string out = "[" + section + "]\n";
  for (const auto& k : keys()) {
    if (section == k.section) out += std::string(k.name) + " = " + k.get(c) + "\n";
  }
  return out;
}

std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const char* s : {"env", "data", "tdr", "graph", "agent", "eval", "run"}) {
    if (!out.empty()) out += "\n";
    out += serialize_section(c, s);
  }
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_config(a) == serialize_config(b); }

void set_config_value(RunConfig& c, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("config key must look like section.key: " + dotted_key);
  const Key* k = find_key(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (!k) throw ConfigError("unknown config key " + dotted_key);
  try {
    k->set(c, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("invalid value for " + dotted_key + ": " + e.what());
  }
  c.validate();
}

}  // namespace gas
