#include "gas/tdr.hpp"

#include <fstream>
#include <sstream>

namespace gas {

ObsNormalizer ObsNormalizer::for_maze(const Maze& maze) {
  ObsNormalizer n;
  n.scale_x = static_cast<float>(2.0 / maze.width());
  n.scale_y = static_cast<float>(2.0 / maze.height());
  n.offset_x = -1.0f;
  n.offset_y = -1.0f;
  return n;
}

void TdrConfig::validate() const {
  if (latent_dim < 2) throw std::invalid_argument("latent dimension must be at least 2");
  if (!(expectile > 0.0 && expectile < 1.0)) throw std::invalid_argument("tdr expectile must be in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
  if (!(polyak >= 0.0 && polyak <= 1.0)) throw std::invalid_argument("polyak coefficient must be in [0, 1]");
  if (batch <= 0 || steps < 0) throw std::invalid_argument("batch must be positive and steps non-negative");
  if (!(p_future >= 0.0 && p_future <= 1.0)) throw std::invalid_argument("p_future must be in [0, 1]");
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("hidden widths must be positive");
  }
}

LatentPoint TdrModel::embed(const EnvState& s) const {
  const Vec2 p[1] = {s.position};
  return online.forward(normalizer.apply(p)).col(0);
}

LatentMatrix TdrModel::embed(std::span<const Vec2> states) const {
  constexpr std::size_t kChunk = 4096;
  LatentMatrix out(dim(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); i += kChunk) {
    const auto n = std::min(kChunk, states.size() - i);
    out.middleCols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) =
        online.forward(normalizer.apply(states.subspan(i, n)));
  }
  return out;
}

double TdrModel::value(const EnvState& s, const EnvState& g) const { return latent_value(embed(s), embed(g)); }

TdrBatch make_tdr_batch(const Dataset& data, const std::vector<TdrSample>& samples, const ObsNormalizer& norm) {
  std::vector<Vec2> s, sn, g;
  TdrBatch b;
  for (const auto& x : samples) {
    s.push_back(data.state(x.s));
    sn.push_back(data.state(x.next));
    g.push_back(data.state(x.g));
    b.differs.push_back(data.state(x.s) == data.state(x.g) ? 0 : 1);
  }
  b.s = norm.apply(s);
  b.s_next = norm.apply(sn);
  b.g = norm.apply(g);
  return b;
}

TdrTrainer::TdrTrainer(const TdrConfig& cfg, const ObsNormalizer& normalizer) : cfg_(cfg) {
  cfg.validate();
  std::vector<int> widths{2};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.latent_dim);
  model_.online = nn::Mlp(widths, cfg.layer_norm);
  Rng init = Rng::derive(cfg.seed, 0x7464722d696e6974ULL);
  model_.online.initialize(init);
  model_.target = model_.online;
  model_.normalizer = normalizer;
  model_.gamma = cfg.gamma;
  model_.expectile = cfg.expectile;
  adam_ = nn::AdamState<float>(model_.online.parameter_count(), {cfg.learning_rate});
  grad_.assign(model_.online.parameter_count(), 0.0f);
}

double TdrTrainer::step(const TdrBatch& batch) {
  std::fill(grad_.begin(), grad_.end(), 0.0f);
  const float loss = tdr_loss<float>(model_.online, model_.target, batch.s, batch.s_next, batch.g, batch.differs,
                                     cfg_.gamma, cfg_.expectile, grad_);
  if (!std::isfinite(loss)) throw nn::NonFiniteError("non-finite tdr loss at step " + std::to_string(adam_.step));
  nn::adam_step<float>(model_.online.params(), grad_, adam_);
  nn::polyak_update(model_.target, model_.online, cfg_.polyak);
  return loss;
}

TdrTrainResult train_tdr(const Dataset& data, const ObsNormalizer& normalizer, const TdrConfig& cfg,
                         const ProgressFn& progress) {
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  TdrTrainer trainer(cfg, normalizer);
  RelabelConfig relabel{cfg.p_future, 1.0 - cfg.p_future, 1.0 - cfg.gamma};
  Rng rng = Rng::derive(cfg.seed, 0x7464722d62617463ULL);
  TdrTrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.steps));
  for (int i = 0; i < cfg.steps; ++i) {
    const auto samples = sample_tdr_batch(data, relabel, static_cast<std::size_t>(cfg.batch), rng);
    const double loss = trainer.step(make_tdr_batch(data, samples, normalizer));
    if (loss > cfg.divergence_limit) {
      throw DivergenceError("tdr loss " + std::to_string(loss) + " exceeded " + std::to_string(cfg.divergence_limit) +
                            " at step " + std::to_string(i));
    }
    result.loss_history.push_back(static_cast<float>(loss));
    if (progress) progress(i, loss);
  }
  result.model = trainer.model();
  return result;
}

DatasetLatents embed_dataset(const TdrModel& model, const Dataset& data) {
  DatasetLatents out;
  const auto states = data.all_states();
  out.points = model.embed(states);
  for (std::size_t i = 0; i < data.trajectory_count(); ++i) out.offsets.push_back(data.state_offset(i));
  out.offsets.push_back(data.state_count());
  return out;
}

namespace {
constexpr std::uint32_t kTdrMagic = 0x54534147;  // "GAST"
constexpr std::uint32_t kTdrVersion = 1;
}  // namespace

void save_tdr(const TdrModel& model, const std::filesystem::path& path) {
  std::ostringstream os(std::ios::binary);
  io::write_pod(os, kTdrMagic);
  io::write_pod(os, kTdrVersion);
  io::write_pod(os, model.gamma);
  io::write_pod(os, model.expectile);
  io::write_pod(os, model.normalizer);
  nn::write_mlp(os, model.online);
  nn::write_mlp(os, model.target);
  io::write_file(path, os.str());
}

TdrModel load_tdr(const std::filesystem::path& path) {
  std::istringstream is(io::read_file(path), std::ios::binary);
  if (io::read_pod<std::uint32_t>(is) != kTdrMagic) throw io::FormatError(path.string() + " is not a TDR checkpoint");
  if (io::read_pod<std::uint32_t>(is) != kTdrVersion) throw io::FormatError("unsupported TDR checkpoint version");
  TdrModel m;
  m.gamma = io::read_pod<double>(is);
  m.expectile = io::read_pod<double>(is);
  m.normalizer = io::read_pod<ObsNormalizer>(is);
  m.online = nn::read_mlp(is);
  m.target = nn::read_mlp(is);
  if (!m.online.same_shape(m.target)) throw io::FormatError("online/target architecture mismatch");
  return m;
}

}  // namespace gas
