#include <doctest.h>

#include "gas/config.hpp"

using namespace gas;

TEST_SUITE("config") {
  TEST_CASE("defaults serialize and parse back unchanged") {
    const RunConfig c;
    CHECK_NOTHROW(c.validate());
    const RunConfig back = parse_config(serialize_config(c));
    CHECK(back == c);
    CHECK(serialize_config(back) == serialize_config(c));
  }

  TEST_CASE("every section round-trips non-default values") {
    const std::string text =
        "[env]\nmaze = mazes/open10.txt\ndynamics = point_mass\naction_limit = 0.5\n"
        "[data]\nstyle = explore\ntransitions = 1234\nseed = 7\n"
        "[tdr]\ndim = 8\nhidden = 32,32\nexpectile = 0.95\nsteps = 100\np_future = 0.5\n"
        "[graph]\nh_td = 3.5\nte_thresh = none\nnode_method = kmeans\nstitching = false\n"
        "[agent]\nalpha = 0.1\nsubgoal_sampling = step_based\nhidden = 16\n"
        "[eval]\nrollouts = 3\ndeterministic = true\n"
        "[run]\nseeds = 0,1,2\n";
    const RunConfig c = parse_config(text);
    CHECK(c.env.dynamics == Dynamics::point_mass);
    CHECK(c.data.style == DatasetStyle::explore);
    CHECK(c.data.transitions == 1234);
    CHECK(c.tdr.hidden == std::vector<int>{32, 32});
    CHECK(c.tdr.p_future == 0.5);
    CHECK_FALSE(c.graph.te_thresh);
    CHECK(c.graph.node_method == NodeMethod::kmeans);
    CHECK_FALSE(c.graph.stitching);
    CHECK(c.alpha == 0.1);
    CHECK(c.agent.sampling == SubgoalSampling::step_based);
    CHECK(c.eval.deterministic);
    CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(parse_config(serialize_config(c)) == c);
  }

  TEST_CASE("unknown keys and sections are rejected by name") {
    try {
      parse_config("[tdr]\nexpectle = 0.9\n");
      FAIL("expected an error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("tdr.expectle") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[bogus]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("x = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[tdr\n"), ConfigError);
  }

  TEST_CASE("out-of-range values are rejected by key") {
    const std::pair<const char*, const char*> bad[] = {
        {"[tdr]\nexpectile = 1.5\n", "tdr.expectile"}, {"[tdr]\nexpectile = 0\n", "tdr.expectile"},
        {"[tdr]\ngamma = 1\n", "tdr.gamma"},           {"[graph]\nte_thresh = 1.5\n", "graph.te_thresh"},
        {"[graph]\nh_td = -1\n", "graph.h_td"},        {"[agent]\nalpha = -1\n", "agent.alpha"},
        {"[eval]\nrollouts = 0\n", "eval.rollouts"},   {"[tdr]\nbatch = x\n", "tdr.batch"},
        {"[env]\ndynamics = warp\n", "env.dynamics"},  {"[data]\nstyle = random\n", "data.style"},
    };
    for (const auto& [text, key] : bad) {
      CAPTURE(text);
      try {
        parse_config(text);
        FAIL("expected an error");
      } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(key) != std::string::npos);
      }
    }
  }

  TEST_CASE("dotted overrides") {
    RunConfig c;
    set_config_value(c, "graph.te_thresh", "0.5");
    CHECK(c.graph.te_thresh == 0.5);
    set_config_value(c, "graph.te_thresh", "none");
    CHECK_FALSE(c.graph.te_thresh);
    set_config_value(c, "agent.alpha", "auto");
    CHECK_FALSE(c.alpha);
    set_config_value(c, "run.seeds", "4,5");
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK_THROWS_AS(set_config_value(c, "graph", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_value(c, "graph.nope", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_value(c, "tdr.expectile", "2"), ConfigError);
  }

  TEST_CASE("alpha defaults by dataset style") {
    RunConfig c;
    CHECK(c.effective_alpha() == 1.0);
    c.data.style = DatasetStyle::explore;
    CHECK(c.effective_alpha() == 0.01);
    c.alpha = 0.3;
    CHECK(c.effective_alpha() == 0.3);
  }

  TEST_CASE("section text changes only with that section") {
    RunConfig a, b;
    b.graph.te_thresh = 0.5;
    CHECK(serialize_section(a, "tdr") == serialize_section(b, "tdr"));
    CHECK(serialize_section(a, "graph") != serialize_section(b, "graph"));
  }
}
