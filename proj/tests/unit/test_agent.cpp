#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gas/agent.hpp"
#include "gas/io.hpp"
#include "oracles.hpp"

using namespace gas;
using nn::Matrix;

namespace {

constexpr int kDim = 4;

AgentModel small_agent(std::uint64_t seed, double alpha = 1.0) {
  AgentConfig cfg;
  cfg.hidden = {16, 16};
  cfg.seed = seed;
  cfg.alpha = alpha;
  return make_agent(cfg, kDim, ObsNormalizer::for_maze(Maze::open(10, 10)), 1.0);
}

/// Perturbs every parameter so LayerNorm gains and biases are not at their defaults.
nn::BasicMlp<double> jittered(const nn::Mlp& f, Rng& rng) {
  auto g = f.cast<double>();
  for (auto& v : g.params()) v += rng.normal(0.0, 0.05);
  return g;
}

Matrix<double> randn(int rows, int cols, Rng& rng) {
  Matrix<double> m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

CriticBatch<double> critic_batch(int b, Rng& rng) {
  return {randn(kObsDim, b, rng), randn(kActionDim, b, rng), randn(kObsDim, b, rng), randn(kDim, b, rng),
          randn(1, b, rng)};
}

ActorBatch<double> actor_batch(int b, Rng& rng) {
  return {randn(kObsDim, b, rng), randn(kActionDim, b, rng), randn(kDim, b, rng)};
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("agent") {
  TEST_CASE("sampled directions are unit vectors with zero mean") {
    Rng rng(1);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(16);
    for (int i = 0; i < 20000; ++i) {
      const LatentPoint v = sample_direction(16, rng);
      CHECK(std::abs(v.cast<double>().norm() - 1.0) < 1e-6);
      sum += v.cast<double>();
    }
    CHECK((sum / 20000).cwiseAbs().maxCoeff() < 0.01);
    CHECK_THROWS(sample_direction(1, rng));
  }

  TEST_CASE("two-dimensional directions are uniform in angle") {
    Rng rng(2);
    const int bins = 8, n = 8000;
    std::vector<int> count(bins, 0);
    for (int i = 0; i < n; ++i) {
      const LatentPoint v = sample_direction(2, rng);
      const double a = std::atan2(v(1), v(0)) + std::numbers::pi;
      ++count[std::min(bins - 1, static_cast<int>(a / (2 * std::numbers::pi) * bins))];
    }
    double chi2 = 0;
    for (int c : count) chi2 += std::pow(c - n / bins, 2) / (n / bins);
    CHECK(chi2 < 24.3);  // 7 dof, p = 0.001
  }

  TEST_CASE("intrinsic reward examples and linearity") {
    LatentPoint a(2), b(2), h(2);
    a << 0, 0;
    b << 1, 2;
    h << 1, 0;
    CHECK(intrinsic_reward(a, b, h) == 1.0);
    h << 0, 1;
    CHECK(intrinsic_reward(a, b, h) == 2.0);
    CHECK(intrinsic_reward(b, b, h) == 0.0);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      const LatentPoint s = sample_direction(5, rng) * 3.0f, u = sample_direction(5, rng), w = sample_direction(5, rng);
      const LatentPoint dir = sample_direction(5, rng);
      const double sum = intrinsic_reward(s, s + u + w, dir);
      CHECK(sum == doctest::Approx(intrinsic_reward(s, s + u, dir) + intrinsic_reward(s, s + w, dir)).epsilon(1e-5));
      CHECK(intrinsic_reward(s, s + u, dir) == doctest::Approx(-intrinsic_reward(s + u, s, dir)).epsilon(1e-6));
    }
  }

  TEST_CASE("direction to subgoal") {
    LatentPoint a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    const auto d = direction_to_subgoal(a, b);
    REQUIRE(d);
    CHECK((*d)(0) == doctest::Approx(0.6));
    CHECK((*d)(1) == doctest::Approx(0.8));
    CHECK_FALSE(direction_to_subgoal(b, b));
  }

  TEST_CASE("critic, value and actor gradients match finite differences") {
    Rng rng(4);
    for (int input = 0; input < 5; ++input) {
      const AgentModel m = small_agent(10 + input);
      const auto critic = jittered(m.critic, rng), value = jittered(m.value, rng), actor = jittered(m.actor, rng);
      const auto critic_target = jittered(m.critic, rng);
      const auto cb = critic_batch(6, rng);
      const auto ab = actor_batch(6, rng);

      auto g = zeros(critic.parameter_count());
      critic_loss<double>(critic, value, cb, 0.99, g);
      auto res = oracle::finite_difference_check(
          oracle::param_vector(critic), g,
          [&](const std::vector<double>& p) {
            auto c = critic;
            oracle::set_params(c, p);
            return critic_loss<double>(c, value, cb, 0.99, {});
          },
          10, rng);
      CHECK(res.worst_rel < 1e-3);

      g = zeros(value.parameter_count());
      value_loss<double>(value, critic_target, cb, 0.7, g);
      res = oracle::finite_difference_check(
          oracle::param_vector(value), g,
          [&](const std::vector<double>& p) {
            auto v = value;
            oracle::set_params(v, p);
            return value_loss<double>(v, critic_target, cb, 0.7, {});
          },
          10, rng);
      CHECK(res.worst_rel < 1e-3);

      g = zeros(actor.parameter_count());
      actor_loss<double>(actor, critic, ab, 0.5, -1.0, g);
      res = oracle::finite_difference_check(
          oracle::param_vector(actor), g,
          [&](const std::vector<double>& p) {
            auto a = actor;
            oracle::set_params(a, p);
            return actor_loss<double>(a, critic, ab, 0.5, -1.0, {});
          },
          10, rng);
      CHECK(res.worst_rel < 1e-3);
    }
  }

  TEST_CASE("critic target with zero discount is the reward") {
    Rng rng(5);
    const AgentModel m = small_agent(5);
    const auto value = jittered(m.value, rng);
    const auto cb = critic_batch(8, rng);
    CHECK(critic_targets(value, cb, 0.0) == cb.reward);
    const Matrix<double> v = value.forward(detail::stack<double>({&cb.next_obs, &cb.dir}));
    CHECK(critic_targets(value, cb, 0.9).isApprox(cb.reward + 0.9 * v, 1e-12));
  }

  TEST_CASE("median expectile value loss is half the squared error") {
    Rng rng(6);
    const AgentModel m = small_agent(6);
    const auto value = jittered(m.value, rng), critic_target = jittered(m.critic, rng);
    const auto cb = critic_batch(10, rng);
    const Matrix<double> q = value_targets(critic_target, cb);
    const Matrix<double> v = value.forward(detail::stack<double>({&cb.obs, &cb.dir}));
    const double mse = (q - v).squaredNorm() / 10.0;
    CHECK(value_loss<double>(value, critic_target, cb, 0.5, {}) == doctest::Approx(0.5 * mse).epsilon(1e-12));
  }

  TEST_CASE("each loss reads the intended networks") {
    Rng rng(7);
    const AgentModel m = small_agent(7);
    const auto critic = jittered(m.critic, rng), value = jittered(m.value, rng);
    const auto critic_target = jittered(m.critic, rng);
    const auto cb = critic_batch(8, rng);
    auto zero_value = value;
    for (auto& p : zero_value.params()) p = 0.0;
    auto zero_target = critic_target;
    for (auto& p : zero_target.params()) p = 0.0;
    // The critic regresses toward r + gamma V, so V must matter.
    CHECK(critic_loss<double>(critic, value, cb, 0.99, {}) != critic_loss<double>(critic, zero_value, cb, 0.99, {}));
    // The value expectile regresses toward the target critic, so Qbar must matter.
    CHECK(value_loss<double>(value, critic_target, cb, 0.7, {}) != value_loss<double>(value, zero_target, cb, 0.7, {}));
  }

  TEST_CASE("large alpha approaches behaviour cloning") {
    Rng rng(8);
    const AgentModel m = small_agent(8);
    const auto actor = jittered(m.actor, rng), critic = jittered(m.critic, rng);
    auto zero_critic = critic;
    for (auto& p : zero_critic.params()) p = 0.0;
    const auto ab = actor_batch(16, rng);
    auto mixed = zeros(actor.parameter_count()), bc = zeros(actor.parameter_count());
    actor_loss<double>(actor, critic, ab, 1e3, -1.0, mixed);
    actor_loss<double>(actor, zero_critic, ab, 1.0, -1.0, bc);
    std::vector<double> diff(bc.size());
    for (std::size_t i = 0; i < bc.size(); ++i) diff[i] = mixed[i] / 1e3 - bc[i];
    CHECK(norm(diff) / norm(bc) < 1e-2);
  }

  TEST_CASE("zero alpha follows the critic's action gradient") {
    Rng rng(9);
    const AgentModel m = small_agent(9);
    auto actor = jittered(m.actor, rng);
    const auto critic = jittered(m.critic, rng);
    const auto ab = actor_batch(16, rng);
    auto mean_q = [&](const nn::BasicMlp<double>& a) {
      const Matrix<double> mu = a.forward(detail::stack<double>({&ab.obs, &ab.dir}));
      return critic.forward(detail::stack<double>({&ab.obs, &mu, &ab.dir})).mean();
    };
    auto g = zeros(actor.parameter_count());
    const double loss = actor_loss<double>(actor, critic, ab, 0.0, -1.0, g);
    CHECK(loss == doctest::Approx(-mean_q(actor)).epsilon(1e-12));
    const double before = mean_q(actor);
    auto p = actor.params();
    for (std::size_t i = 0; i < g.size(); ++i) p[i] -= 1e-3 * g[i] / norm(g);
    CHECK(mean_q(actor) > before);
  }

  TEST_CASE("actions respect the limit and zero actors stand still") {
    AgentModel m = small_agent(10);
    m.action_limit = 0.5;
    Rng rng(10);
    for (int i = 0; i < 500; ++i) {
      const EnvState s{{static_cast<float>(rng.uniform(0, 10)), static_cast<float>(rng.uniform(0, 10))}};
      const LatentPoint h = sample_direction(kDim, rng);
      const auto a = act(m, s, h, false, rng);
      CHECK(std::abs(a.delta.x) <= 0.5f);
      CHECK(std::abs(a.delta.y) <= 0.5f);
      Rng r1(i), r2(i);
      const auto d1 = act(m, s, h, true, r1), d2 = act(m, s, h, true, r2);
      CHECK(d1.delta == d2.delta);
    }
    for (auto& p : m.actor.params()) p = 0.0f;
    const auto z = act(m, EnvState{{3, 3}}, sample_direction(kDim, rng), true, rng);
    CHECK(z.delta == Vec2{0, 0});
  }

  TEST_CASE("sampler rewards are intrinsic rewards of the sampled direction") {
    Dataset d;
    d.add(Trajectory{{{1.5f, 1.5f}, {2.5f, 1.5f}}, {{1, 0}}});
    DatasetLatents lat;
    lat.points.resize(kDim, 2);
    lat.points.col(0) << 0, 0, 0, 0;
    lat.points.col(1) << 1, -2, 0.5, 3;
    lat.offsets = {0, 2};
    AgentConfig cfg;
    cfg.h_td = 1.0;
    AgentSampler sampler(d, lat, cfg, ObsNormalizer::for_maze(Maze::open(4, 4)), 1.0);
    Rng rng(11);
    const auto b = sampler.critic_batch(64, rng);
    for (int k = 0; k < 64; ++k) {
      CHECK(b.dir.col(k).norm() == doctest::Approx(1.0).epsilon(1e-6));
      const double expect = lat.points.col(1).cast<double>().dot(b.dir.col(k).cast<double>());
      CHECK(b.reward(0, k) == doctest::Approx(expect).epsilon(1e-5));
      CHECK(b.action(0, k) == 1.0f);
    }
    const auto ab = sampler.actor_batch(8, rng);
    REQUIRE(ab.dir.cols() == 8);
    const LatentPoint unit = lat.points.col(1) / lat.points.col(1).norm();
    for (int k = 0; k < 8; ++k) CHECK(ab.dir.col(k).isApprox(unit, 1e-6f));
  }

  TEST_CASE("training is deterministic and checkpoints round-trip") {
    Env env;
    env.maze = Maze::open(6, 6);
    const Dataset d = generate_dataset(env, DatasetStyle::explore, 1000, 1);
    DatasetLatents lat;
    lat.points.resize(kDim, static_cast<Eigen::Index>(d.state_count()));
    Rng rng(12);
    for (int i = 0; i < lat.points.size(); ++i) lat.points.data()[i] = static_cast<float>(rng.normal());
    lat.offsets.push_back(0);
    for (std::size_t t = 0; t < d.trajectory_count(); ++t) lat.offsets.push_back(lat.offsets.back() + d.trajectory(t).states.size());
    AgentConfig cfg;
    cfg.hidden = {16};
    cfg.batch = 16;
    cfg.steps = 30;
    const auto norm = ObsNormalizer::for_maze(env.maze);
    const auto a = train_agent(d, lat, norm, 1.0, cfg), b = train_agent(d, lat, norm, 1.0, cfg);
    CHECK(std::equal(a.model.actor.params().begin(), a.model.actor.params().end(), b.model.actor.params().begin()));
    for (const auto& l : a.history) {
      CHECK(std::isfinite(l.critic));
      CHECK(std::isfinite(l.value));
      CHECK(std::isfinite(l.actor));
    }
    const auto path = std::filesystem::path(GAS_TEST_TMP) / "agent.bin";
    save_agent(a.model, path);
    const AgentModel back = load_agent(path);
    CHECK(back.latent_dim == kDim);
    CHECK(back.alpha == cfg.alpha);
    CHECK(std::equal(back.critic.params().begin(), back.critic.params().end(), a.model.critic.params().begin()));
    CHECK(std::equal(back.actor.params().begin(), back.actor.params().end(), a.model.actor.params().begin()));
    io::write_file(path, "nope");
    CHECK_THROWS_AS(load_agent(path), io::FormatError);
  }

  TEST_CASE("configuration ranges are validated") {
    AgentConfig c;
    c.expectile = 0.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.alpha = -1;
    CHECK_THROWS(c.validate());
    CHECK_NOTHROW(AgentConfig{}.validate());
    for (auto s : {SubgoalSampling::td_aware, SubgoalSampling::step_based, SubgoalSampling::random_direction})
      CHECK(parse_subgoal_sampling(to_string(s)) == s);
  }
}
