#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gas/dataset.hpp"
#include "gas/latent.hpp"
#include "gas/nn.hpp"
#include "gas/rng.hpp"
#include "gas/tdr.hpp"

namespace gas {

/// How the actor's training direction is chosen.
enum class SubgoalSampling : std::uint8_t { td_aware = 0, step_based = 1, random_direction = 2 };
std::string_view to_string(SubgoalSampling s);
SubgoalSampling parse_subgoal_sampling(std::string_view text);

struct AgentConfig {
  std::vector<int> hidden = {64, 64, 64};
  bool layer_norm = true;
  double expectile = 0.7;
  double gamma = 0.99;
  double alpha = 1.0;
  double log_std = -1.0;
  double polyak = 0.005;
  double learning_rate = 3e-4;
  int batch = 256;
  int steps = 20000;
  std::uint64_t seed = 0;
  SubgoalSampling sampling = SubgoalSampling::td_aware;
  double h_td = 4.0;

  void validate() const;
};

/// Networks take [obs; direction]; the critic takes [obs; action; direction].
/// Actions are expressed in units of the action limit.
struct AgentModel {
  nn::Mlp critic;
  nn::Mlp critic_target;
  nn::Mlp value;
  nn::Mlp actor;
  ObsNormalizer normalizer;
  int latent_dim = 0;
  double action_limit = 1.0;
  double log_std = -1.0;
  double expectile = 0.7;
  double gamma = 0.99;
  double alpha = 1.0;
};

inline constexpr int kObsDim = 2;
inline constexpr int kActionDim = 2;

/// Standard-normal draw, normalized; redrawn when the norm is below 1e-8.
LatentPoint sample_direction(int dim, Rng& rng);

/// <psi(s') - psi(s), h>.
double intrinsic_reward(const LatentPoint& h_s, const LatentPoint& h_next, const LatentPoint& dir);

/// Unit vector from h_t toward h_sub; empty when they coincide.
std::optional<LatentPoint> direction_to_subgoal(const LatentPoint& h_t, const LatentPoint& h_sub);

template <typename T>
struct CriticBatch {
  nn::Matrix<T> obs, action, next_obs, dir;
  nn::Matrix<T> reward;  // 1 x B
};

template <typename T>
struct ActorBatch {
  nn::Matrix<T> obs, action, dir;
};

namespace detail {

template <typename T>
nn::Matrix<T> stack(std::initializer_list<const nn::Matrix<T>*> parts) {
  Eigen::Index rows = 0;
  for (const auto* p : parts) rows += p->rows();
  nn::Matrix<T> out(rows, (*parts.begin())->cols());
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.middleRows(at, p->rows()) = *p;
    at += p->rows();
  }
  return out;
}

}  // namespace detail

/// r + gamma * V(s', h), the critic regression target.
template <typename T>
nn::Matrix<T> critic_targets(const nn::BasicMlp<T>& value, const CriticBatch<T>& b, double gamma) {
  return b.reward + T(gamma) * value.forward(detail::stack<T>({&b.next_obs, &b.dir}));
}

/// Qbar(s, a, h), the value expectile target.
template <typename T>
nn::Matrix<T> value_targets(const nn::BasicMlp<T>& critic_target, const CriticBatch<T>& b) {
  return critic_target.forward(detail::stack<T>({&b.obs, &b.action, &b.dir}));
}

/// mean (r + gamma V(s', h) - Q(s, a, h))^2; gradient flows into Q only.
template <typename T>
T critic_loss(const nn::BasicMlp<T>& critic, const nn::BasicMlp<T>& value, const CriticBatch<T>& b, double gamma,
              std::span<T> grad) {
  const nn::Matrix<T> y = critic_targets(value, b, gamma);
  nn::Tape<T> tape;
  const auto x = detail::stack<T>({&b.obs, &b.action, &b.dir});
  const nn::Matrix<T> q = grad.empty() ? critic.forward(x) : critic.forward(x, tape);
  const nn::Matrix<T> err = q - y;
  const T batch = T(err.cols());
  if (!grad.empty()) critic.backward(tape, (T(2) / batch) * err, grad);
  return err.squaredNorm() / batch;
}

/// mean l_tau(Qbar(s, a, h) - V(s, h)); gradient flows into V only.
template <typename T>
T value_loss(const nn::BasicMlp<T>& value, const nn::BasicMlp<T>& critic_target, const CriticBatch<T>& b, double tau,
             std::span<T> grad) {
  const nn::Matrix<T> target = value_targets(critic_target, b);
  nn::Tape<T> tape;
  const auto x = detail::stack<T>({&b.obs, &b.dir});
  const nn::Matrix<T> v = grad.empty() ? value.forward(x) : value.forward(x, tape);
  const T batch = T(v.cols());
  T loss = T(0);
  nn::Matrix<T> upstream(1, v.cols());
  for (Eigen::Index i = 0; i < v.cols(); ++i) {
    const T u = target(0, i) - v(0, i);
    const T w = std::abs(T(tau) - (u < T(0) ? T(1) : T(0)));
    loss += w * u * u;
    upstream(0, i) = T(-2) * w * u / batch;
  }
  if (!grad.empty()) value.backward(tape, upstream, grad);
  return loss / batch;
}

/// -mean[Q(s, mu(s, h), h) + alpha * log N(a; mu, exp(log_std)^2)].
/// Gradient flows into the actor only.
template <typename T>
T actor_loss(const nn::BasicMlp<T>& actor, const nn::BasicMlp<T>& critic, const ActorBatch<T>& b, double alpha,
             double log_std, std::span<T> grad) {
  nn::Tape<T> actor_tape, critic_tape;
  const auto ax = detail::stack<T>({&b.obs, &b.dir});
  const nn::Matrix<T> mu = grad.empty() ? actor.forward(ax) : actor.forward(ax, actor_tape);
  const auto cx = detail::stack<T>({&b.obs, &mu, &b.dir});
  const nn::Matrix<T> q = grad.empty() ? critic.forward(cx) : critic.forward(cx, critic_tape);
  const T batch = T(mu.cols());
  const T inv_var = T(std::exp(-2.0 * log_std));
  const T log_norm = T(-log_std - 0.5 * std::log(2.0 * std::numbers::pi));
  const nn::Matrix<T> resid = b.action - mu;
  const T log_prob_sum = T(-0.5) * inv_var * resid.squaredNorm() + T(mu.size()) * log_norm;
  const T loss = -(q.sum() + T(alpha) * log_prob_sum) / batch;
  if (!grad.empty()) {
    std::vector<T> scratch(critic.parameter_count(), T(0));
    const nn::Matrix<T> upstream = nn::Matrix<T>::Constant(1, q.cols(), T(-1) / batch);
    const nn::Matrix<T> d_input = critic.backward(critic_tape, upstream, scratch);
    const nn::Matrix<T> d_mu = d_input.middleRows(kObsDim, kActionDim) - (T(alpha) * inv_var / batch) * resid;
    actor.backward(actor_tape, d_mu, grad);
  }
  return loss;
}

struct AgentLosses {
  double critic = 0.0;
  double value = 0.0;
  double actor = 0.0;
};

AgentModel make_agent(const AgentConfig& cfg, int latent_dim, const ObsNormalizer& normalizer, double action_limit);

class AgentTrainer {
 public:
  AgentTrainer(const AgentConfig& cfg, int latent_dim, const ObsNormalizer& normalizer, double action_limit);

  /// Critic and value updates on `critic`, target smoothing, then one actor
  /// update on `actor` if it has any columns.
  AgentLosses step(const CriticBatch<float>& critic, const ActorBatch<float>& actor);

  const AgentModel& model() const { return model_; }

 private:
  AgentConfig cfg_;
  AgentModel model_;
  nn::AdamState<float> critic_adam_, value_adam_, actor_adam_;
  std::vector<float> critic_grad_, value_grad_, actor_grad_;
};

/// Draws training batches from an embedded dataset.
class AgentSampler {
 public:
  AgentSampler(const Dataset& data, const DatasetLatents& latents, const AgentConfig& cfg,
               const ObsNormalizer& normalizer, double action_limit);

  CriticBatch<float> critic_batch(std::size_t batch, Rng& rng) const;
  /// Samples whose subgoal coincides with the state in latent space are dropped.
  ActorBatch<float> actor_batch(std::size_t batch, Rng& rng) const;

 private:
  const Dataset& data_;
  const DatasetLatents& latents_;
  AgentConfig cfg_;
  ObsNormalizer normalizer_;
  double action_limit_;
  /// Flat subgoal state index per transition (td_aware and step_based).
  std::vector<std::size_t> subgoal_;
};

struct AgentTrainResult {
  AgentModel model;
  std::vector<AgentLosses> history;
};

AgentTrainResult train_agent(const Dataset& data, const DatasetLatents& latents, const ObsNormalizer& normalizer,
                             double action_limit, const AgentConfig& cfg,
                             const std::function<void(int, const AgentLosses&)>& progress = {});

/// Deterministic: clipped mean. Stochastic: Gaussian sample around the mean, clipped.
EnvAction act(const AgentModel& m, const EnvState& s, const LatentPoint& dir, bool deterministic, Rng& rng);

void save_agent(const AgentModel& m, const std::filesystem::path& path);
AgentModel load_agent(const std::filesystem::path& path);

}  // namespace gas
