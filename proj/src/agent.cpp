#include "gas/agent.hpp"

#include <algorithm>
#include <sstream>

namespace gas {

std::string_view to_string(SubgoalSampling s) {
  switch (s) {
    case SubgoalSampling::td_aware:
      return "td-aware";
    case SubgoalSampling::step_based:
      return "step-based";
    case SubgoalSampling::random_direction:
      return "random-direction";
  }
  return "unknown";
}

SubgoalSampling parse_subgoal_sampling(std::string_view text) {
  if (text == "td-aware" || text == "td_aware") return SubgoalSampling::td_aware;
  if (text == "step-based" || text == "step_based") return SubgoalSampling::step_based;
  if (text == "random-direction" || text == "random_direction") return SubgoalSampling::random_direction;
  throw std::invalid_argument("unknown subgoal sampling '" + std::string(text) +
                              "' (expected td-aware|step-based|random-direction)");
}

void AgentConfig::validate() const {
  if (!(expectile > 0.0 && expectile < 1.0)) throw std::invalid_argument("agent expectile must be in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  if (!(polyak >= 0.0 && polyak <= 1.0)) throw std::invalid_argument("polyak coefficient must be in [0, 1]");
  if (!(h_td > 0.0)) throw std::invalid_argument("h_td must be positive");
  if (batch <= 0 || steps < 0) throw std::invalid_argument("batch must be positive and steps non-negative");
}

LatentPoint sample_direction(int dim, Rng& rng) {
  if (dim < 2) throw std::invalid_argument("direction dimension must be at least 2");
  LatentPoint v(dim);
  for (;;) {
    for (int i = 0; i < dim; ++i) v(i) = static_cast<float>(rng.normal());
    const double n = v.cast<double>().norm();
    if (n >= 1e-8) return (v.cast<double>() / n).cast<float>();
  }
}

double intrinsic_reward(const LatentPoint& h_s, const LatentPoint& h_next, const LatentPoint& dir) {
  return (h_next.cast<double>() - h_s.cast<double>()).dot(dir.cast<double>());
}

std::optional<LatentPoint> direction_to_subgoal(const LatentPoint& h_t, const LatentPoint& h_sub) {
  const Eigen::VectorXd d = h_sub.cast<double>() - h_t.cast<double>();
  const double n = d.norm();
  if (n < 1e-8) return std::nullopt;
  return (d / n).cast<float>();
}

namespace {

std::vector<int> widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

AgentModel make_agent(const AgentConfig& cfg, int latent_dim, const ObsNormalizer& normalizer, double action_limit) {
  cfg.validate();
  AgentModel m;
  m.critic = nn::Mlp(widths(kObsDim + kActionDim + latent_dim, cfg.hidden, 1), cfg.layer_norm);
  m.value = nn::Mlp(widths(kObsDim + latent_dim, cfg.hidden, 1), cfg.layer_norm);
  m.actor = nn::Mlp(widths(kObsDim + latent_dim, cfg.hidden, kActionDim), cfg.layer_norm);
  Rng rng = Rng::derive(cfg.seed, 0x6167656e742d696eULL);
  m.critic.initialize(rng);
  m.value.initialize(rng);
  m.actor.initialize(rng);
  m.critic_target = m.critic;
  m.normalizer = normalizer;
  m.latent_dim = latent_dim;
  m.action_limit = action_limit;
  m.log_std = cfg.log_std;
  m.expectile = cfg.expectile;
  m.gamma = cfg.gamma;
  m.alpha = cfg.alpha;
  return m;
}

AgentTrainer::AgentTrainer(const AgentConfig& cfg, int latent_dim, const ObsNormalizer& normalizer,
                           double action_limit)
    : cfg_(cfg), model_(make_agent(cfg, latent_dim, normalizer, action_limit)) {
  const nn::AdamConfig adam{cfg.learning_rate};
  critic_adam_ = nn::AdamState<float>(model_.critic.parameter_count(), adam);
  value_adam_ = nn::AdamState<float>(model_.value.parameter_count(), adam);
  actor_adam_ = nn::AdamState<float>(model_.actor.parameter_count(), adam);
  critic_grad_.assign(model_.critic.parameter_count(), 0.0f);
  value_grad_.assign(model_.value.parameter_count(), 0.0f);
  actor_grad_.assign(model_.actor.parameter_count(), 0.0f);
}

AgentLosses AgentTrainer::step(const CriticBatch<float>& critic, const ActorBatch<float>& actor) {
  AgentLosses out;
  std::fill(critic_grad_.begin(), critic_grad_.end(), 0.0f);
  std::fill(value_grad_.begin(), value_grad_.end(), 0.0f);
  out.critic = critic_loss<float>(model_.critic, model_.value, critic, cfg_.gamma, critic_grad_);
  out.value = value_loss<float>(model_.value, model_.critic_target, critic, cfg_.expectile, value_grad_);
  if (!std::isfinite(out.critic) || !std::isfinite(out.value)) {
    throw nn::NonFiniteError("non-finite critic/value loss at step " + std::to_string(critic_adam_.step));
  }
  nn::adam_step<float>(model_.critic.params(), critic_grad_, critic_adam_);
  nn::adam_step<float>(model_.value.params(), value_grad_, value_adam_);
  nn::polyak_update(model_.critic_target, model_.critic, cfg_.polyak);
  if (actor.obs.cols() > 0) {
    std::fill(actor_grad_.begin(), actor_grad_.end(), 0.0f);
    out.actor = actor_loss<float>(model_.actor, model_.critic, actor, cfg_.alpha, cfg_.log_std, actor_grad_);
    if (!std::isfinite(out.actor)) throw nn::NonFiniteError("non-finite actor loss");
    nn::adam_step<float>(model_.actor.params(), actor_grad_, actor_adam_);
  }
  return out;
}

AgentSampler::AgentSampler(const Dataset& data, const DatasetLatents& latents, const AgentConfig& cfg,
                           const ObsNormalizer& normalizer, double action_limit)
    : data_(data), latents_(latents), cfg_(cfg), normalizer_(normalizer), action_limit_(action_limit) {
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (cfg.sampling == SubgoalSampling::random_direction) return;
  const auto offset = static_cast<std::size_t>(std::llround(cfg.h_td));
  subgoal_.resize(data.transition_count());
  for (std::size_t i = 0; i < data.transition_count(); ++i) {
    const StateRef t = data.transition_ref(i);
    const StateRef sub = cfg.sampling == SubgoalSampling::td_aware ? sample_subgoal_td(data, latents, t, cfg.h_td)
                                                                   : sample_subgoal_step(data, t, offset);
    subgoal_[i] = data.flat_state(sub);
  }
}

CriticBatch<float> AgentSampler::critic_batch(std::size_t batch, Rng& rng) const {
  const int d = static_cast<int>(latents_.points.rows());
  std::vector<Vec2> s, sn;
  CriticBatch<float> b;
  b.action.resize(kActionDim, static_cast<Eigen::Index>(batch));
  b.dir.resize(d, static_cast<Eigen::Index>(batch));
  b.reward.resize(1, static_cast<Eigen::Index>(batch));
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t i = rng.uniform_int(data_.transition_count());
    const StateRef r = data_.transition_ref(i);
    const auto& tr = data_.trajectory(r.trajectory);
    s.push_back(tr.states[r.step]);
    sn.push_back(tr.states[r.step + 1]);
    const auto col = static_cast<Eigen::Index>(k);
    b.action(0, col) = static_cast<float>(tr.actions[r.step].x / action_limit_);
    b.action(1, col) = static_cast<float>(tr.actions[r.step].y / action_limit_);
    const LatentPoint h = sample_direction(d, rng);
    b.dir.col(col) = h;
    const std::size_t flat = data_.flat_state(r);
    b.reward(0, col) = static_cast<float>(intrinsic_reward(latents_.column(flat), latents_.column(flat + 1), h));
  }
  b.obs = normalizer_.apply(s);
  b.next_obs = normalizer_.apply(sn);
  return b;
}

ActorBatch<float> AgentSampler::actor_batch(std::size_t batch, Rng& rng) const {
  const int d = static_cast<int>(latents_.points.rows());
  std::vector<Vec2> s;
  std::vector<Vec2> actions;
  std::vector<LatentPoint> dirs;
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t i = rng.uniform_int(data_.transition_count());
    const StateRef r = data_.transition_ref(i);
    const std::size_t flat = data_.flat_state(r);
    std::optional<LatentPoint> dir;
    if (cfg_.sampling == SubgoalSampling::random_direction) {
      dir = sample_direction(d, rng);
    } else {
      dir = direction_to_subgoal(latents_.column(flat), latents_.column(subgoal_[i]));
    }
    if (!dir) continue;
    const auto& tr = data_.trajectory(r.trajectory);
    s.push_back(tr.states[r.step]);
    actions.push_back(tr.actions[r.step]);
    dirs.push_back(*dir);
  }
  ActorBatch<float> b;
  b.obs = normalizer_.apply(s);
  b.action.resize(kActionDim, static_cast<Eigen::Index>(s.size()));
  b.dir.resize(d, static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    b.action(0, col) = static_cast<float>(actions[k].x / action_limit_);
    b.action(1, col) = static_cast<float>(actions[k].y / action_limit_);
    b.dir.col(col) = dirs[k];
  }
  return b;
}

AgentTrainResult train_agent(const Dataset& data, const DatasetLatents& latents, const ObsNormalizer& normalizer,
                             double action_limit, const AgentConfig& cfg,
                             const std::function<void(int, const AgentLosses&)>& progress) {
  const int d = static_cast<int>(latents.points.rows());
  AgentTrainer trainer(cfg, d, normalizer, action_limit);
  AgentSampler sampler(data, latents, cfg, normalizer, action_limit);
  Rng rng = Rng::derive(cfg.seed, 0x6167656e742d6261ULL);
  AgentTrainResult res;
  res.history.reserve(static_cast<std::size_t>(cfg.steps));
  const auto batch = static_cast<std::size_t>(cfg.batch);
  for (int i = 0; i < cfg.steps; ++i) {
    const auto cb = sampler.critic_batch(batch, rng);
    const auto ab = sampler.actor_batch(batch, rng);
    res.history.push_back(trainer.step(cb, ab));
    if (progress) progress(i, res.history.back());
  }
  res.model = trainer.model();
  return res;
}

EnvAction act(const AgentModel& m, const EnvState& s, const LatentPoint& dir, bool deterministic, Rng& rng) {
  const Vec2 p[1] = {s.position};
  nn::Matrix<float> x(kObsDim + m.latent_dim, 1);
  x << m.normalizer.apply(p), dir;
  const nn::Matrix<float> mu = m.actor.forward(x);
  double ax = mu(0, 0), ay = mu(1, 0);
  if (!deterministic) {
    const double sd = std::exp(m.log_std);
    ax += rng.normal(0.0, sd);
    ay += rng.normal(0.0, sd);
  }
  const double lim = m.action_limit;
  auto clip = [lim](double v) { return static_cast<float>(std::isfinite(v) ? std::clamp(v * lim, -lim, lim) : 0.0); };
  return {{clip(ax), clip(ay)}};
}

namespace {
constexpr std::uint32_t kAgentMagic = 0x41534147;  // "GASA"
constexpr std::uint32_t kAgentVersion = 1;
}  // namespace

void save_agent(const AgentModel& m, const std::filesystem::path& path) {
  std::ostringstream os(std::ios::binary);
  io::write_pod(os, kAgentMagic);
  io::write_pod(os, kAgentVersion);
  io::write_pod(os, static_cast<std::int32_t>(m.latent_dim));
  io::write_pod(os, m.action_limit);
  io::write_pod(os, m.log_std);
  io::write_pod(os, m.expectile);
  io::write_pod(os, m.gamma);
  io::write_pod(os, m.alpha);
  io::write_pod(os, m.normalizer);
  nn::write_mlp(os, m.critic);
  nn::write_mlp(os, m.critic_target);
  nn::write_mlp(os, m.value);
  nn::write_mlp(os, m.actor);
  io::write_file(path, os.str());
}

AgentModel load_agent(const std::filesystem::path& path) {
  std::istringstream is(io::read_file(path), std::ios::binary);
  if (io::read_pod<std::uint32_t>(is) != kAgentMagic) throw io::FormatError(path.string() + " is not a policy checkpoint");
  if (io::read_pod<std::uint32_t>(is) != kAgentVersion) throw io::FormatError("unsupported policy checkpoint version");
  AgentModel m;
  m.latent_dim = io::read_pod<std::int32_t>(is);
  m.action_limit = io::read_pod<double>(is);
  m.log_std = io::read_pod<double>(is);
  m.expectile = io::read_pod<double>(is);
  m.gamma = io::read_pod<double>(is);
  m.alpha = io::read_pod<double>(is);
  m.normalizer = io::read_pod<ObsNormalizer>(is);
  m.critic = nn::read_mlp(is);
  m.critic_target = nn::read_mlp(is);
  m.value = nn::read_mlp(is);
  m.actor = nn::read_mlp(is);
  if (m.actor.input_dim() != kObsDim + m.latent_dim || m.actor.output_dim() != kActionDim) {
    throw io::FormatError("policy checkpoint has inconsistent shapes");
  }
  return m;
}

}  // namespace gas
