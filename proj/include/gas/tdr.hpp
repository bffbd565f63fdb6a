#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "gas/dataset.hpp"
#include "gas/latent.hpp"
#include "gas/nn.hpp"

namespace gas {

/// Affine map from maze coordinates to [-1, 1] per axis.
struct ObsNormalizer {
  float scale_x = 1.0f, scale_y = 1.0f;
  float offset_x = 0.0f, offset_y = 0.0f;

  static ObsNormalizer for_maze(const Maze& maze);

  template <typename T = float>
  nn::Matrix<T> apply(std::span<const Vec2> points) const {
    nn::Matrix<T> out(2, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      out(0, static_cast<Eigen::Index>(i)) = static_cast<T>(points[i].x * scale_x + offset_x);
      out(1, static_cast<Eigen::Index>(i)) = static_cast<T>(points[i].y * scale_y + offset_y);
    }
    return out;
  }
};

struct TdrConfig {
  int latent_dim = 32;
  std::vector<int> hidden = {64, 64, 64};
  bool layer_norm = true;
  double expectile = 0.99;
  double gamma = 0.99;
  double polyak = 0.005;
  double learning_rate = 3e-4;
  int batch = 256;
  int steps = 50000;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
  /// Future-goal probability; the geometric parameter is always 1 - gamma.
  double p_future = 0.625;

  void validate() const;
};

/// Embedding network psi, its smoothed target copy, and the loss constants.
struct TdrModel {
  nn::Mlp online;
  nn::Mlp target;
  ObsNormalizer normalizer;
  double gamma = 0.99;
  double expectile = 0.99;

  int dim() const { return online.output_dim(); }

  LatentPoint embed(const EnvState& s) const;
  LatentMatrix embed(std::span<const Vec2> states) const;
  double value(const EnvState& s, const EnvState& g) const;
};

/// -||a - b||.
inline double latent_value(const LatentPoint& a, const LatentPoint& b) { return -latent_distance(a, b); }

/// |tau - 1(x < 0)| * x^2.
inline double expectile_loss(double x, double tau) { return std::abs(tau - (x < 0.0 ? 1.0 : 0.0)) * x * x; }

/// Mean expectile loss of delta = -1{s != g} + gamma * Vbar(s', g) - V(s, g),
/// V(s, g) = -||psi(s) - psi(g)||. Inputs are normalized observations, one
/// sample per column. If `grad` is non-empty the gradient with respect to the
/// online parameters is accumulated into it; the target net is held fixed.
template <typename T>
T tdr_loss(const nn::BasicMlp<T>& online, const nn::BasicMlp<T>& target, const nn::Matrix<T>& s,
           const nn::Matrix<T>& s_next, const nn::Matrix<T>& g, const std::vector<std::uint8_t>& differs, double gamma,
           double tau, std::span<T> grad) {
  const Eigen::Index batch = s.cols();
  nn::Matrix<T> x(s.rows(), 2 * batch);
  x << s, g;
  nn::Matrix<T> xt(s.rows(), 2 * batch);
  xt << s_next, g;
  nn::Tape<T> tape;
  const nn::Matrix<T> z = grad.empty() ? online.forward(x) : online.forward(x, tape);
  const nn::Matrix<T> zt = target.forward(xt);
  const nn::Matrix<T> diff = z.leftCols(batch) - z.rightCols(batch);
  const auto norms = diff.colwise().norm().eval();
  const auto target_norms = (zt.leftCols(batch) - zt.rightCols(batch)).colwise().norm().eval();
  T loss = T(0);
  nn::Matrix<T> upstream;
  if (!grad.empty()) upstream = nn::Matrix<T>::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const T v = -norms(i);
    const T indicator = differs[static_cast<std::size_t>(i)] ? T(1) : T(0);
    const T delta = -indicator + T(gamma) * (-target_norms(i)) - v;
    const T weight = std::abs(T(tau) - (delta < T(0) ? T(1) : T(0)));
    loss += weight * delta * delta;
    if (!grad.empty() && norms(i) > T(0)) {
      // dL/dV = -2 w delta / B; dV/dpsi(s) = -diff / ||diff||.
      const T d_v = T(-2) * weight * delta / T(batch);
      const auto d_zs = (-d_v / norms(i)) * diff.col(i);
      upstream.col(i) = d_zs;
      upstream.col(batch + i) = -d_zs;
    }
  }
  if (!grad.empty()) online.backward(tape, upstream, grad);
  return loss / T(batch);
}

struct TdrBatch {
  nn::Matrix<float> s, s_next, g;
  std::vector<std::uint8_t> differs;
};

TdrBatch make_tdr_batch(const Dataset& data, const std::vector<TdrSample>& samples, const ObsNormalizer& norm);

/// Online model plus optimizer state.
class TdrTrainer {
 public:
  TdrTrainer(const TdrConfig& cfg, const ObsNormalizer& normalizer);

  /// One optimizer step followed by the target update; returns the loss.
  double step(const TdrBatch& batch);

  const TdrModel& model() const { return model_; }
  TdrModel& model() { return model_; }

 private:
  TdrConfig cfg_;
  TdrModel model_;
  nn::AdamState<float> adam_;
  std::vector<float> grad_;
};

struct TdrTrainResult {
  TdrModel model;
  std::vector<float> loss_history;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ProgressFn = std::function<void(int step, double loss)>;

TdrTrainResult train_tdr(const Dataset& data, const ObsNormalizer& normalizer, const TdrConfig& cfg,
                         const ProgressFn& progress = {});

/// Embeds every dataset state.
DatasetLatents embed_dataset(const TdrModel& model, const Dataset& data);

void save_tdr(const TdrModel& model, const std::filesystem::path& path);
TdrModel load_tdr(const std::filesystem::path& path);

}  // namespace gas
