#include "gas/pipeline.hpp"

#include <cstdlib>
#include <functional>
#include <system_error>

#include "gas/hash.hpp"
#include "gas/io.hpp"
#include "gas/report.hpp"

namespace gas {

namespace fs = std::filesystem;
using nlohmann::json;

const StageRecord& PipelineResult::stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return s;
  throw std::out_of_range("no stage named " + name);
}

long long PipelineResult::total_train_steps() const {
  long long n = 0;
  for (const auto& s : stages)
    if (!s.cache_hit) n += s.train_steps;
  return n;
}

fs::path resolve_cache_dir(const PipelineOptions& opts) {
  if (opts.cache_dir) return *opts.cache_dir;
  if (const char* env = std::getenv("GAS_CACHE_DIR"); env && *env) return env;
  return opts.out_dir / "cache";
}

fs::path resolve_maze_path(const RunConfig& c, const fs::path& base_dir) {
  const fs::path p = c.env.maze;
  if (fs::exists(p) || p.is_absolute()) return p;
  const fs::path alt = base_dir / p;
  if (fs::exists(alt)) return alt;
#ifdef GAS_SOURCE_DIR
  const fs::path src = fs::path(GAS_SOURCE_DIR) / p;
  if (fs::exists(src)) return src;
#endif
  return p;
}

Env make_env(const RunConfig& c, const fs::path& base_dir) {
  Env env;
  env.maze = Maze::load(resolve_maze_path(c, base_dir), c.env.cell_size);
  env.dynamics = c.env.dynamics;
  env.action_limit = c.env.action_limit;
  env.success_radius = c.env.success_radius;
  return env;
}

namespace {

class StageRunner {
 public:
  StageRunner(fs::path cache, std::ostream* log) : cache_(std::move(cache)), log_(log) {}

  /// `build` writes artifacts into the given directory and fills the record.
  StageRecord run(const std::string& name, const std::string& type, const std::string& material,
                  const std::function<void(const fs::path&, StageRecord&)>& build) {
    StageRecord rec;
    rec.name = name;
    rec.key = sha256_hex(std::string(kCodeVersion) + "\n" + type + "\n" + material);
    rec.dir = cache_ / (type + "-" + rec.key.substr(0, 16));
    if (load_cached(rec)) {
      say(name + ": cached (" + rec.key.substr(0, 12) + ")");
      return rec;
    }
    say(name + ": running");
    const fs::path partial = rec.dir.string() + ".partial";
    std::error_code ec;
    fs::remove_all(partial, ec);
    fs::create_directories(partial);
    try {
      build(partial, rec);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    rec.artifacts.clear();
    for (const auto& entry : fs::directory_iterator(partial)) {
      if (!entry.is_regular_file()) continue;
      rec.artifacts[entry.path().filename().string()] = sha256_file(entry.path());
    }
    json stage = {{"name", type},
                  {"key", rec.key},
                  {"artifacts", rec.artifacts},
                  {"train_steps", rec.train_steps},
                  {"info", rec.info}};
    io::write_file(partial / "stage.json", stage.dump(2) + "\n");
    fs::remove_all(rec.dir, ec);
    fs::rename(partial, rec.dir);
    return rec;
  }

  void say(const std::string& msg) const {
    if (log_) *log_ << msg << std::endl;
  }

 private:
  bool load_cached(StageRecord& rec) const {
    const fs::path meta = rec.dir / "stage.json";
    if (!fs::exists(meta)) return false;
    try {
      const json j = json::parse(io::read_file(meta));
      if (j.at("key").get<std::string>() != rec.key) return false;
      auto artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
      for (const auto& [file, sha] : artifacts)
        if (!fs::exists(rec.dir / file) || sha256_file(rec.dir / file) != sha) return false;
      rec.artifacts = std::move(artifacts);
      rec.train_steps = j.at("train_steps").get<long long>();
      rec.info = j.at("info");
      rec.cache_hit = true;
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  fs::path cache_;
  std::ostream* log_;
};

std::string seed_text(std::uint64_t s) { return std::to_string(s); }

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& opts) {
  cfg.validate();
  const Env env = make_env(cfg, opts.base_dir);
  const std::string maze_sha = sha256_hex(env.maze.to_text());
  StageRunner runner(resolve_cache_dir(opts), opts.log);
  PipelineResult result;
  const ObsNormalizer normalizer = ObsNormalizer::for_maze(env.maze);

  const std::string data_material =
      "maze=" + maze_sha + "\n" + serialize_section(cfg, "env") + serialize_section(cfg, "data");
  auto data_rec = runner.run("data", "data", data_material, [&](const fs::path& dir, StageRecord& rec) {
    const Dataset data = generate_dataset(env, cfg.data.style, cfg.data.transitions, cfg.data.seed, cfg.data.gen);
    save_dataset(data, dir / "dataset.bin");
    rec.info = {{"trajectories", data.trajectories().size()}, {"transitions", data.transition_count()}};
  });
  result.stages.push_back(data_rec);
  std::optional<Dataset> data_cache;
  auto data = [&]() -> const Dataset& {
    if (!data_cache) data_cache = load_dataset(data_rec.artifact("dataset.bin"));
    return *data_cache;
  };

  const double alpha = cfg.effective_alpha();
  for (const std::uint64_t seed : cfg.seeds) {
    const std::string sfx = "-" + seed_text(seed);

    TdrConfig tcfg = cfg.tdr;
    tcfg.seed = seed;
    auto tdr_rec = runner.run(
        "tdr" + sfx, "tdr", data_rec.key + "\n" + serialize_section(cfg, "tdr") + "seed=" + seed_text(seed),
        [&](const fs::path& dir, StageRecord& rec) {
          auto trained = train_tdr(data(), normalizer, tcfg, [&](int step, double loss) {
            if ((step + 1) % 1000 == 0) runner.say("  tdr step " + std::to_string(step + 1) + " loss " + std::to_string(loss));
          });
          save_tdr(trained.model, dir / "tdr.bin");
          std::string csv = "step,loss\n";
          for (std::size_t i = 0; i < trained.loss_history.size(); ++i)
            csv += std::to_string(i) + "," + std::to_string(trained.loss_history[i]) + "\n";
          io::write_file(dir / "loss.csv", csv);
          rec.train_steps = tcfg.steps;
          rec.info = {{"final_loss", trained.loss_history.empty() ? 0.0 : trained.loss_history.back()}};
        });
    result.stages.push_back(tdr_rec);

    std::optional<TdrModel> tdr_model;
    std::optional<DatasetLatents> latents;
    auto ensure_latents = [&]() -> const DatasetLatents& {
      if (!tdr_model) tdr_model = load_tdr(tdr_rec.artifact("tdr.bin"));
      if (!latents) latents = embed_dataset(*tdr_model, data());
      return *latents;
    };

    GraphBuildOptions gopts;
    gopts.h_td = cfg.graph.h_td;
    gopts.te_thresh = cfg.graph.te_thresh;
    gopts.method = cfg.graph.node_method;
    gopts.radius_factor = cfg.graph.radius_factor;
    gopts.stitching = cfg.graph.stitching;
    gopts.node_count = cfg.graph.node_count;
    gopts.kmeans_iters = cfg.graph.kmeans_iters;
    gopts.seed = seed;
    auto graph_rec = runner.run(
        "graph" + sfx, "graph", tdr_rec.key + "\n" + serialize_section(cfg, "graph") + "seed=" + seed_text(seed),
        [&](const fs::path& dir, StageRecord& rec) {
          GraphBuildStats stats;
          const TdGraph g = build_graph(ensure_latents(), gopts, &stats);
          save_graph(g, dir / "graph.json");
          rec.info = {{"total_states", stats.total_states},
                      {"defined_states", stats.defined_states},
                      {"filtered_states", stats.filtered_states},
                      {"node_count", stats.node_count},
                      {"edge_count", stats.edge_count}};
        });
    result.stages.push_back(graph_rec);

    AgentConfig acfg = cfg.agent;
    acfg.seed = seed;
    acfg.h_td = cfg.graph.h_td;
    acfg.alpha = alpha;
    char hbuf[64];
    std::snprintf(hbuf, sizeof hbuf, "h_td=%.17g\nalpha=%.17g\n", acfg.h_td, alpha);
    auto agent_rec = runner.run(
        "policy" + sfx, "policy",
        tdr_rec.key + "\n" + serialize_section(cfg, "agent") + hbuf + "seed=" + seed_text(seed),
        [&](const fs::path& dir, StageRecord& rec) {
          const auto& lat = ensure_latents();
          auto trained = train_agent(data(), lat, normalizer, env.action_limit, acfg, [&](int step, const AgentLosses& l) {
            if ((step + 1) % 1000 == 0)
              runner.say("  policy step " + std::to_string(step + 1) + " critic " + std::to_string(l.critic) +
                         " actor " + std::to_string(l.actor));
          });
          save_agent(trained.model, dir / "agent.bin");
          rec.train_steps = acfg.steps;
        });
    result.stages.push_back(agent_rec);

    auto eval_rec = runner.run(
        "eval" + sfx, "eval",
        graph_rec.key + "\n" + agent_rec.key + "\n" + serialize_section(cfg, "eval") + "seed=" + seed_text(seed),
        [&](const fs::path& dir, StageRecord&) {
          if (!tdr_model) tdr_model = load_tdr(tdr_rec.artifact("tdr.bin"));
          const TdGraph graph = load_graph(graph_rec.artifact("graph.json"));
          const AgentModel agent = load_agent(agent_rec.artifact("agent.bin"));
          PlannerComponents pc{&env, &*tdr_model, &agent, &graph, cfg.graph.h_td};
          pc.validate();
          EvalOptions eo;
          eo.rollouts = cfg.eval.rollouts;
          eo.max_steps = cfg.eval.max_steps;
          eo.deterministic = cfg.eval.deterministic;
          eo.select.goal_candidate = cfg.eval.goal_candidate;
          eo.threads = cfg.eval.threads;
          eo.single_component = !graph.meta.value("stitching", true);
          const auto rows = evaluate(pc, maze_tasks(env.maze, cfg.eval.goals), {seed}, eo);
          io::write_file(dir / "eval.csv", eval_csv(rows));
        });
    result.stages.push_back(eval_rec);
    const auto rows = parse_eval_csv(io::read_file(eval_rec.artifact("eval.csv")));
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }

  json stages = json::array();
  for (const auto& s : result.stages)
    stages.push_back({{"name", s.name}, {"key", s.key}, {"artifacts", s.artifacts}, {"train_steps", s.train_steps},
                      {"info", s.info}});
  const std::string config_text = serialize_config(cfg);
  const json manifest = {{"code_version", kCodeVersion},
                         {"config_sha256", sha256_hex(config_text)},
                         {"stages", stages},
                         {"normalized_return", normalized_return(result.rows)}};
  fs::create_directories(opts.out_dir);
  result.manifest = opts.out_dir / "manifest.json";
  result.eval_csv = opts.out_dir / "eval.csv";
  io::write_file(result.manifest, manifest.dump(2) + "\n");
  io::write_file(result.eval_csv, eval_csv(result.rows));
  io::write_file(opts.out_dir / "config.ini", config_text);
  return result;
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const std::string& axis, const std::vector<std::string>& values,
                                const PipelineOptions& opts) {
  static const std::map<std::string, std::string> keys = {{"te-thresh", "graph.te_thresh"},
                                                          {"h-td", "graph.h_td"},
                                                          {"node-method", "graph.node_method"},
                                                          {"subgoal-sampling", "agent.subgoal_sampling"}};
  const auto it = keys.find(axis);
  if (it == keys.end())
    throw ConfigError("unknown ablation axis '" + axis + "' (te-thresh, h-td, node-method, subgoal-sampling)");
  if (values.empty()) throw ConfigError("ablation axis '" + axis + "' needs at least one value");

  std::vector<RunConfig> variants;
  for (const auto& v : values) {
    RunConfig c = cfg;
    set_config_value(c, it->second, v);
    c.validate();
    variants.push_back(std::move(c));
  }

  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    PipelineOptions o = opts;
    o.cache_dir = resolve_cache_dir(opts);
    o.out_dir = opts.out_dir / (axis + "-" + values[i]);
    const auto res = run_pipeline(variants[i], o);
    AblationRow row;
    row.axis = axis;
    row.value = values[i];
    std::vector<double> retained, nodes, edges;
    for (const auto& s : res.stages) {
      if (s.name.rfind("graph-", 0) != 0) continue;
      const double total = s.info.at("total_states").get<double>();
      retained.push_back(total > 0 ? 100.0 * s.info.at("filtered_states").get<double>() / total : 0.0);
      nodes.push_back(s.info.at("node_count").get<double>());
      edges.push_back(s.info.at("edge_count").get<double>());
    }
    row.retained_pct = mean_pop_std(retained).first;
    row.node_count = mean_pop_std(nodes).first;
    row.edge_count = mean_pop_std(edges).first;
    std::tie(row.mean_return, row.std_return) = mean_pop_std(per_seed_returns(res.rows));
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "axis,value,retained_pct,node_count,edge_count,mean_return,std_return\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.3f,%.3f,%.3f,%.6f,%.6f\n", r.axis.c_str(), r.value.c_str(),
                  r.retained_pct, r.node_count, r.edge_count, r.mean_return, r.std_return);
    out += buf;
  }
  return out;
}

}  // namespace gas
