#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gas/config.hpp"
#include "gas/io.hpp"
#include "gas/pipeline.hpp"
#include "gas/report.hpp"
#include "gas/te_filter.hpp"

namespace fs = std::filesystem;
using namespace gas;

namespace {

/// Input problems; exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::optional<std::string>> flags;  // dotted key -> value
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "INI run configuration (defaults apply otherwise)");
  app->add_option("--set", c.sets, "Override any config key, e.g. --set tdr.lr=1e-3")->type_name("KEY=VALUE");
}

void add_key(CLI::App* app, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option(flag, c.flags[key], help + " [" + key + "]");
}

RunConfig build_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, value] : c.flags)
    if (value) set_config_value(cfg, key, *value);
  cfg.validate();
  return cfg;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ValidationError(flag + " is required");
  if (!fs::exists(path)) throw ValidationError(flag + ": no such file '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  require_file(path, "--data");
  return fs::path(path).extension() == ".jsonl" ? load_dataset_jsonl(path) : load_dataset(path);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw ValidationError("--seeds needs at least one seed");
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string loss_csv(const std::vector<float>& losses) {
  std::string csv = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, static_cast<double>(losses[i]));
    csv += buf;
  }
  return csv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-assisted stitching: offline goal-conditioned planning over a temporal-distance graph"};
  app.require_subcommand(1);

  // gen-data
  Common gd;
  std::string gd_out;
  auto* gen = app.add_subcommand("gen-data", "Generate an offline dataset on a maze");
  add_common(gen, gd);
  add_key(gen, gd, "--maze", "env.maze", "Maze text file");
  add_key(gen, gd, "--dynamics", "env.dynamics", "grid | point-mass");
  add_key(gen, gd, "--style", "data.style", "navigate | stitch | explore");
  add_key(gen, gd, "--transitions", "data.transitions", "Number of transitions");
  add_key(gen, gd, "--seed", "data.seed", "Generation seed");
  gen->add_option("--out", gd_out, "Output dataset (.bin, or .jsonl for JSON lines)")->required();

  // train-tdr
  Common tt;
  std::string tt_data, tt_out;
  auto* ttr = app.add_subcommand("train-tdr", "Train the temporal distance representation");
  add_common(ttr, tt);
  ttr->add_option("--data", tt_data, "Dataset file")->required();
  add_key(ttr, tt, "--maze", "env.maze", "Maze the dataset was generated on");
  add_key(ttr, tt, "--dim", "tdr.dim", "Latent dimension");
  add_key(ttr, tt, "--expectile", "tdr.expectile", "Expectile");
  add_key(ttr, tt, "--gamma", "tdr.gamma", "Discount");
  add_key(ttr, tt, "--steps", "tdr.steps", "Gradient steps");
  add_key(ttr, tt, "--batch", "tdr.batch", "Batch size");
  std::optional<std::uint64_t> tt_seed;
  ttr->add_option("--seed", tt_seed, "Training seed");
  ttr->add_option("--out", tt_out, "Output directory (tdr.bin, loss.csv)")->required();

  // build-graph
  Common bg;
  std::string bg_data, bg_tdr, bg_out;
  std::optional<std::uint64_t> bg_seed;
  auto* bgr = app.add_subcommand("build-graph", "Filter states and build the temporal-distance graph");
  add_common(bgr, bg);
  bgr->add_option("--data", bg_data, "Dataset file")->required();
  bgr->add_option("--tdr", bg_tdr, "TDR checkpoint")->required();
  add_key(bgr, bg, "--h-td", "graph.h_td", "Temporal distance threshold");
  add_key(bgr, bg, "--te-thresh", "graph.te_thresh", "Temporal efficiency threshold, or none");
  add_key(bgr, bg, "--node-method", "graph.node_method", "gas | fps | kmeans");
  add_key(bgr, bg, "--node-count", "graph.node_count", "Baseline node count (0: match gas)");
  add_key(bgr, bg, "--stitching", "graph.stitching", "false keeps trajectories separate");
  bgr->add_option("--seed", bg_seed, "k-means seed");
  bgr->add_option("--out", bg_out, "Output graph JSON")->required();

  // train-policy
  Common tp;
  std::string tp_data, tp_tdr, tp_out;
  std::optional<std::uint64_t> tp_seed;
  auto* tpr = app.add_subcommand("train-policy", "Train the direction-conditioned low-level policy");
  add_common(tpr, tp);
  tpr->add_option("--data", tp_data, "Dataset file")->required();
  tpr->add_option("--tdr", tp_tdr, "TDR checkpoint")->required();
  add_key(tpr, tp, "--maze", "env.maze", "Maze the dataset was generated on");
  add_key(tpr, tp, "--h-td", "graph.h_td", "Subgoal temporal distance");
  add_key(tpr, tp, "--alpha", "agent.alpha", "Behavior regularization weight, or auto");
  add_key(tpr, tp, "--expectile", "agent.expectile", "Value expectile");
  add_key(tpr, tp, "--gamma", "agent.gamma", "Discount");
  add_key(tpr, tp, "--steps", "agent.steps", "Gradient steps");
  add_key(tpr, tp, "--subgoal-sampling", "agent.subgoal_sampling", "td-aware | step-based | random-direction");
  tpr->add_option("--seed", tp_seed, "Training seed");
  tpr->add_option("--out", tp_out, "Output directory (agent.bin, loss.csv)")->required();

  // eval
  Common ev;
  std::string ev_tdr, ev_graph, ev_policy, ev_out, ev_seeds = "0", ev_sweep, ev_data;
  auto* evr = app.add_subcommand("eval", "Evaluate plan-and-act rollouts on the maze goals");
  add_common(evr, ev);
  add_key(evr, ev, "--maze", "env.maze", "Maze text file");
  evr->add_option("--tdr", ev_tdr, "TDR checkpoint");
  evr->add_option("--graph", ev_graph, "Graph JSON");
  evr->add_option("--policy", ev_policy, "Policy checkpoint");
  add_key(evr, ev, "--goals", "eval.goals", "Number of goals (0: all)");
  add_key(evr, ev, "--rollouts", "eval.rollouts", "Rollouts per goal and seed");
  add_key(evr, ev, "--max-steps", "eval.max_steps", "Episode step limit (0: per-task default)");
  add_key(evr, ev, "--deterministic", "eval.deterministic", "Use the policy mean");
  add_key(evr, ev, "--threads", "eval.threads", "Worker threads (0: all cores)");
  add_key(evr, ev, "--h-td", "graph.h_td", "Planning temporal distance (defaults to the graph's)");
  evr->add_option("--seeds", ev_seeds, "Comma-separated evaluation seeds");
  evr->add_option("--out", ev_out, "Output CSV (stdout if omitted)");
  evr->add_option("--te-sweep", ev_sweep, "Also write per-state temporal efficiency records to this CSV");
  evr->add_option("--data", ev_data, "Dataset file (needed by --te-sweep)");

  // ablate
  Common ab;
  std::string ab_axis, ab_values, ab_out = "gas-ablate";
  auto* abr = app.add_subcommand("ablate", "Sweep one axis of the pipeline");
  add_common(abr, ab);
  abr->add_option("--axis", ab_axis, "te-thresh | h-td | node-method | subgoal-sampling")->required();
  abr->add_option("--values", ab_values, "Comma-separated values")->required();
  abr->add_option("--out", ab_out, "Output directory (ablation.csv and one run per value)");

  // run
  Common rn;
  std::string rn_out = "gas-run", rn_seeds;
  auto* rnr = app.add_subcommand("run", "Run the full cached pipeline");
  add_common(rnr, rn);
  rnr->add_option("--seeds", rn_seeds, "Comma-separated training seeds (overrides run.seeds)");
  rnr->add_option("--out", rn_out, "Output directory");

  // report
  std::vector<std::string> rp_inputs;
  std::string rp_out = ".";
  auto* rpr = app.add_subcommand("report", "Aggregate evaluation results into report.md and report.csv");
  rpr->add_option("--input", rp_inputs,
                  "STYLE/VARIANT=PATH, where PATH is an eval CSV or a run directory; repeatable")
      ->required();
  rpr->add_option("--out", rp_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const RunConfig cfg = build_config(gd);
      const Env env = make_env(cfg);
      const Dataset data = generate_dataset(env, cfg.data.style, cfg.data.transitions, cfg.data.seed, cfg.data.gen);
      if (fs::path(gd_out).extension() == ".jsonl")
        save_dataset_jsonl(data, gd_out);
      else
        save_dataset(data, gd_out);
      std::cerr << "wrote " << data.trajectory_count() << " trajectories, " << data.transition_count()
                << " transitions to " << gd_out << "\n";
    } else if (*ttr) {
      const RunConfig cfg = build_config(tt);
      const Env env = make_env(cfg);
      const Dataset data = read_dataset(tt_data);
      TdrConfig tc = cfg.tdr;
      tc.seed = tt_seed.value_or(cfg.seeds.front());
      TdrTrainResult res;
      try {
        res = train_tdr(data, ObsNormalizer::for_maze(env.maze), tc, [](int step, double loss) {
          if ((step + 1) % 1000 == 0) std::cerr << "step " << step + 1 << " loss " << loss << "\n";
        });
      } catch (const std::exception& e) {
        throw StageError("train-tdr", e.what());
      }
      save_tdr(res.model, fs::path(tt_out) / "tdr.bin");
      io::write_file(fs::path(tt_out) / "loss.csv", loss_csv(res.loss_history));
    } else if (*bgr) {
      const RunConfig cfg = build_config(bg);
      const Dataset data = read_dataset(bg_data);
      require_file(bg_tdr, "--tdr");
      const TdrModel tdr = load_tdr(bg_tdr);
      GraphBuildOptions o;
      o.h_td = cfg.graph.h_td;
      o.te_thresh = cfg.graph.te_thresh;
      o.method = cfg.graph.node_method;
      o.radius_factor = cfg.graph.radius_factor;
      o.stitching = cfg.graph.stitching;
      o.node_count = cfg.graph.node_count;
      o.kmeans_iters = cfg.graph.kmeans_iters;
      o.seed = bg_seed.value_or(cfg.seeds.front());
      GraphBuildStats st;
      TdGraph g;
      try {
        g = build_graph(embed_dataset(tdr, data), o, &st);
      } catch (const std::exception& e) {
        throw StageError("build-graph", e.what());
      }
      g.meta["dataset_seed"] = data.seed;
      save_graph(g, bg_out);
      std::cerr << "states " << st.total_states << ", te defined " << st.defined_states << ", kept "
                << st.filtered_states << ", nodes " << st.node_count << ", edges " << st.edge_count << "\n";
    } else if (*tpr) {
      RunConfig cfg = build_config(tp);
      const Env env = make_env(cfg);
      const Dataset data = read_dataset(tp_data);
      require_file(tp_tdr, "--tdr");
      const TdrModel tdr = load_tdr(tp_tdr);
      cfg.data.style = data.style;
      AgentConfig ac = cfg.agent;
      ac.seed = tp_seed.value_or(cfg.seeds.front());
      ac.h_td = cfg.graph.h_td;
      ac.alpha = cfg.effective_alpha();
      AgentTrainResult res;
      try {
        res = train_agent(data, embed_dataset(tdr, data), tdr.normalizer, env.action_limit, ac,
                          [](int step, const AgentLosses& l) {
                            if ((step + 1) % 1000 == 0)
                              std::cerr << "step " << step + 1 << " critic " << l.critic << " value " << l.value
                                        << " actor " << l.actor << "\n";
                          });
      } catch (const std::exception& e) {
        throw StageError("train-policy", e.what());
      }
      save_agent(res.model, fs::path(tp_out) / "agent.bin");
      std::string csv = "step,critic,value,actor\n";
      char buf[128];
      for (std::size_t i = 0; i < res.history.size(); ++i) {
        const auto& l = res.history[i];
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", i, l.critic, l.value, l.actor);
        csv += buf;
      }
      io::write_file(fs::path(tp_out) / "loss.csv", csv);
    } else if (*evr) {
      const bool h_given = ev.flags["graph.h_td"].has_value();
      const RunConfig cfg = build_config(ev);
      const Env env = make_env(cfg);
      require_file(ev_tdr, "--tdr");
      const TdrModel tdr = load_tdr(ev_tdr);
      if (!ev_sweep.empty()) {
        const Dataset data = read_dataset(ev_data);
        const auto records = te_records(embed_dataset(tdr, data), cfg.graph.h_td);
        std::string csv = "trajectory_id,step_index,te\n";
        char buf[96];
        for (const auto& r : records) {
          if (r.te)
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g\n", r.trajectory_id, r.step_index, *r.te);
          else
            std::snprintf(buf, sizeof buf, "%zu,%zu,\n", r.trajectory_id, r.step_index);
          csv += buf;
        }
        io::write_file(ev_sweep, csv);
        if (ev_graph.empty() && ev_policy.empty()) return 0;
      }
      require_file(ev_graph, "--graph");
      require_file(ev_policy, "--policy");
      const TdGraph graph = load_graph(ev_graph);
      const AgentModel agent = load_agent(ev_policy);
      PlannerComponents pc{&env, &tdr, &agent, &graph, h_given ? cfg.graph.h_td : graph.h_td};
      try {
        pc.validate();
      } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what());
      }
      EvalOptions eo;
      eo.rollouts = cfg.eval.rollouts;
      eo.max_steps = cfg.eval.max_steps;
      eo.deterministic = cfg.eval.deterministic;
      eo.select.goal_candidate = cfg.eval.goal_candidate;
      eo.threads = cfg.eval.threads;
      eo.single_component = !graph.meta.value("stitching", true);
      const auto rows = evaluate(pc, maze_tasks(env.maze, cfg.eval.goals), parse_seeds(ev_seeds), eo);
      const std::string csv = eval_csv(rows);
      if (ev_out.empty())
        std::cout << csv;
      else
        io::write_file(ev_out, csv);
      std::cerr << "normalized return " << normalized_return(rows) << "\n";
    } else if (*abr) {
      const RunConfig cfg = build_config(ab);
      PipelineOptions o;
      o.out_dir = ab_out;
      o.log = &std::cerr;
      const auto rows = ablate(cfg, ab_axis, split(ab_values, ','), o);
      const std::string csv = ablation_csv(rows);
      io::write_file(fs::path(ab_out) / "ablation.csv", csv);
      std::cout << csv;
    } else if (*rnr) {
      RunConfig cfg = build_config(rn);
      if (!rn_seeds.empty()) cfg.seeds = parse_seeds(rn_seeds);
      PipelineOptions o;
      o.out_dir = rn_out;
      o.log = &std::cerr;
      const auto res = run_pipeline(cfg, o);
      std::cerr << "trained " << res.total_train_steps() << " steps; normalized return "
                << normalized_return(res.rows) << "\n";
      std::cout << res.manifest.string() << "\n";
    } else if (*rpr) {
      std::vector<RunInput> inputs;
      for (const auto& spec : rp_inputs) {
        const auto eq = spec.find('=');
        const auto slash = spec.find('/');
        if (eq == std::string::npos || slash == std::string::npos || slash > eq)
          throw ValidationError("--input expects STYLE/VARIANT=PATH, got '" + spec + "'");
        RunInput in;
        in.style = spec.substr(0, slash);
        in.variant = spec.substr(slash + 1, eq - slash - 1);
        const fs::path path = spec.substr(eq + 1);
        if (fs::is_directory(path)) {
          require_file((path / "eval.csv").string(), "--input");
          in.rows = read_eval_table(io::read_file(path / "eval.csv"));
          if (fs::exists(path / "manifest.json")) {
            const auto m = nlohmann::json::parse(io::read_file(path / "manifest.json"));
            std::vector<double> nodes, kept;
            for (const auto& s : m.at("stages")) {
              if (s.at("name").get<std::string>().rfind("graph-", 0) != 0) continue;
              const auto& info = s.at("info");
              nodes.push_back(info.at("node_count").get<double>());
              const double total = info.at("total_states").get<double>();
              if (total > 0) kept.push_back(info.at("filtered_states").get<double>() / total);
            }
            if (!nodes.empty()) in.node_count = mean_pop_std(nodes).first;
            if (!kept.empty()) in.retained_fraction = mean_pop_std(kept).first;
          }
        } else {
          require_file(path.string(), "--input");
          in.rows = read_eval_table(io::read_file(path));
        }
        inputs.push_back(std::move(in));
      }
      const auto rows = aggregate(inputs);
      io::write_file(fs::path(rp_out) / "report.md", report_markdown(rows));
      io::write_file(fs::path(rp_out) / "report.csv", report_csv(rows));
      std::cout << report_markdown(rows);
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nn::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyGraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
