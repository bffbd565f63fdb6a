#include <doctest.h>

#include <sstream>

#include "gas/nn.hpp"
#include "oracles.hpp"

using namespace gas;
using nn::Matrix;

namespace {

nn::BasicMlp<double> random_net(std::vector<int> widths, bool ln, std::uint64_t seed) {
  nn::Mlp f(std::move(widths), ln);
  Rng rng(seed);
  f.initialize(rng);
  // Perturb gains and shifts away from 1 / 0 so their gradients are exercised.
  auto p = f.params();
  for (auto& v : p) v += static_cast<float>(rng.normal(0.0, 0.05));
  return f.cast<double>();
}

Matrix<double> random_input(int rows, int cols, Rng& rng) {
  Matrix<double> x(rows, cols);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("zero parameters give zero output") {
    nn::Mlp f({3, 8, 2}, false);
    Matrix<float> x = Matrix<float>::Random(3, 5);
    CHECK(f.forward(x).isZero(0.0f));
  }

  TEST_CASE("single identity layer is the identity map") {
    nn::Mlp f({3, 3}, false);
    auto p = f.params();
    for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i * 3 + i)] = 1.0f;
    Matrix<float> x = Matrix<float>::Random(3, 4);
    CHECK(f.forward(x) == x);
  }

  TEST_CASE("gelu matches its tanh closed form") {
    Eigen::ArrayXd x(3);
    x << 0.0, 1.0, -2.0;
    const auto y = nn::detail::gelu(x);
    CHECK(y(0) == 0.0);
    CHECK(y(1) == doctest::Approx(0.8411919906082768).epsilon(1e-12));
    CHECK(y(2) == doctest::Approx(-0.04540230591222276).epsilon(1e-10));
  }

  TEST_CASE("backward matches central finite differences") {
    Rng rng(1);
    for (bool ln : {false, true}) {
      auto f = random_net({4, 16, 16, 3}, ln, 10 + ln);
      const Matrix<double> x = random_input(4, 6, rng);
      const Matrix<double> up = random_input(3, 6, rng);
      // Directional loss <up, f(x)> has gradient backward(up).
      std::vector<double> grad(f.parameter_count(), 0.0);
      nn::Tape<double> tape;
      f.forward(x, tape);
      const Matrix<double> dx = f.backward(tape, up, grad);
      auto loss = [&](const std::vector<double>& p) {
        auto g = f;
        oracle::set_params(g, p);
        return (g.forward(x).array() * up.array()).sum();
      };
      const auto res = oracle::finite_difference_check(oracle::param_vector(f), grad, loss, 40, rng, 1e-4);
      CHECK(res.worst_rel < 1e-3);
      // Input gradient, one direction.
      const Matrix<double> v = random_input(4, 6, rng);
      const double h = 1e-4;
      const double numeric =
          (((f.forward(x + h * v).array() - f.forward(x - h * v).array()) * up.array()).sum()) / (2 * h);
      CHECK(numeric == doctest::Approx((dx.array() * v.array()).sum()).epsilon(1e-3));
    }
  }

  TEST_CASE("zero upstream gives zero gradients") {
    auto f = random_net({3, 8, 2}, true, 2);
    Rng rng(2);
    nn::Tape<double> tape;
    f.forward(random_input(3, 4, rng), tape);
    std::vector<double> grad(f.parameter_count(), 0.0);
    f.backward(tape, Matrix<double>::Zero(2, 4), grad);
    for (double g : grad) CHECK(g == 0.0);
  }

  TEST_CASE("linear net with quadratic loss matches the closed form") {
    nn::BasicMlp<double> f({3, 2}, false);
    Rng rng(3);
    auto p = f.params();
    for (auto& v : p) v = rng.normal();
    const Matrix<double> x = random_input(3, 1, rng);
    const Matrix<double> y = random_input(2, 1, rng);
    nn::Tape<double> tape;
    const Matrix<double> yhat = f.forward(x, tape);
    std::vector<double> grad(f.parameter_count(), 0.0);
    f.backward(tape, 2.0 * (yhat - y), grad);
    const Matrix<double> expect = 2.0 * (yhat - y) * x.transpose();
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) CHECK(grad[static_cast<std::size_t>(r * 3 + c)] == doctest::Approx(expect(r, c)));
    CHECK(grad[6] == doctest::Approx(2.0 * (yhat(0) - y(0))));
    CHECK(grad[7] == doctest::Approx(2.0 * (yhat(1) - y(1))));
  }

  TEST_CASE("duplicating a sample doubles its gradient") {
    auto f = random_net({3, 8, 2}, false, 4);
    Rng rng(4);
    const Matrix<double> x = random_input(3, 1, rng);
    const Matrix<double> up = random_input(2, 1, rng);
    std::vector<double> g1(f.parameter_count(), 0.0), g2(f.parameter_count(), 0.0);
    nn::Tape<double> t1, t2;
    f.forward(x, t1);
    f.backward(t1, up, g1);
    Matrix<double> xx(3, 2), uu(2, 2);
    xx << x, x;
    uu << up, up;
    f.forward(xx, t2);
    f.backward(t2, uu, g2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
  }

  TEST_CASE("layer norm output has zero mean and unit variance per sample") {
    nn::Mlp f({5, 32, 1}, true);
    Rng rng(5);
    f.initialize(rng);
    Matrix<float> x(5, 16);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal(0, 3));
    nn::Tape<float> tape;
    f.forward(x, tape);
    const auto& normed = tape.layers[0].normed;
    for (int c = 0; c < normed.cols(); ++c) {
      const double mean = normed.col(c).cast<double>().mean();
      const double var = (normed.col(c).cast<double>().array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-5);
    }
  }

  TEST_CASE("adam: zero gradient keeps parameters and advances the step") {
    std::vector<float> p = {1.0f, -2.0f};
    const std::vector<float> g = {0.0f, 0.0f};
    nn::AdamState<float> s(2, {});
    nn::adam_step<float>(p, g, s);
    CHECK(p[0] == 1.0f);
    CHECK(p[1] == -2.0f);
    CHECK(s.step == 1);
  }

  TEST_CASE("adam: first step moves by the learning rate against the gradient sign") {
    std::vector<float> p = {0.0f, 0.0f};
    const std::vector<float> g = {0.3f, -5.0f};
    nn::AdamState<float> s(2, {1e-3});
    nn::adam_step<float>(p, g, s);
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-4));
  }

  TEST_CASE("adam: constant gradient gives steps of the learning rate") {
    std::vector<double> p = {0.0};
    const std::vector<double> g = {0.7};
    nn::AdamState<double> s(1, {1e-2});
    double prev = 0.0;
    for (int i = 0; i < 500; ++i) {
      prev = p[0];
      nn::adam_step<double>(p, g, s);
    }
    CHECK(prev - p[0] == doctest::Approx(1e-2).epsilon(1e-6));
  }

  TEST_CASE("adam rejects non-finite gradients") {
    std::vector<float> p = {0.0f};
    const std::vector<float> g = {std::numeric_limits<float>::quiet_NaN()};
    nn::AdamState<float> s(1, {});
    CHECK_THROWS_AS(nn::adam_step<float>(p, g, s), nn::NonFiniteError);
  }

  TEST_CASE("polyak update endpoints and midpoint") {
    nn::Mlp a({2, 4, 1}, true), b({2, 4, 1}, true);
    Rng rng(6);
    a.initialize(rng);
    b.initialize(rng);
    auto keep = b;
    nn::polyak_update(keep, a, 0.0);
    CHECK(std::equal(keep.params().begin(), keep.params().end(), b.params().begin()));
    auto mid = b;
    nn::polyak_update(mid, a, 0.5);
    for (std::size_t i = 0; i < mid.parameter_count(); ++i)
      CHECK(mid.params()[i] == doctest::Approx(0.5f * (a.params()[i] + b.params()[i])));
    auto all = b;
    nn::polyak_update(all, a, 1.0);
    CHECK(std::equal(all.params().begin(), all.params().end(), a.params().begin()));
  }

  TEST_CASE("training is bit-identical for the same seed and batch order") {
    auto run = [] {
      nn::Mlp f({2, 16, 16, 1}, true);
      Rng rng(7);
      f.initialize(rng);
      nn::Trainable t(f, {1e-3});
      for (int s = 0; s < 50; ++s) {
        Matrix<float> x(2, 32);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
        const Matrix<float> y = x.colwise().squaredNorm();
        nn::Tape<float> tape;
        const Matrix<float> out = t.net.forward(x, tape);
        t.zero_grad();
        t.net.backward(tape, (2.0f / 32.0f) * (out - y), t.grad);
        t.apply();
      }
      return std::vector<float>(t.net.params().begin(), t.net.params().end());
    };
    CHECK(run() == run());
  }

  TEST_CASE("checkpoints round-trip parameters and optimizer state") {
    nn::Mlp f({3, 5, 2}, true);
    Rng rng(8);
    f.initialize(rng);
    nn::AdamState<float> s(f.parameter_count(), {2e-3});
    s.step = 17;
    s.first_moment[3] = 0.25f;
    std::stringstream ss;
    nn::write_mlp(ss, f);
    nn::write_adam(ss, s);
    const nn::Mlp g = nn::read_mlp(ss);
    const auto t = nn::read_adam(ss);
    CHECK(g.widths() == f.widths());
    CHECK(std::equal(g.params().begin(), g.params().end(), f.params().begin()));
    CHECK(t.step == 17);
    CHECK(t.first_moment[3] == 0.25f);
    CHECK(t.config.learning_rate == 2e-3);
    std::stringstream bad("nonsense");
    CHECK_THROWS_AS(nn::read_mlp(bad), io::FormatError);
  }
}
