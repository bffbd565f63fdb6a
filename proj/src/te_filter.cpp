#include "gas/te_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gas {

TeRecord temporal_efficiency(const LatentMatrix& traj, std::size_t t, double h_td) {
  TeRecord rec;
  rec.step_index = t;
  const auto n = static_cast<std::size_t>(traj.cols());
  if (t >= n) throw std::out_of_range("state index beyond trajectory");
  const auto opt = optimal_future(traj, t, h_td);
  const auto offset = static_cast<std::size_t>(std::llround(h_td));
  if (!opt || t + offset >= n) return rec;
  const auto cur = traj.col(static_cast<Eigen::Index>(t)).cast<double>();
  const Eigen::VectorXd a = traj.col(static_cast<Eigen::Index>(*opt)).cast<double>() - cur;
  const Eigen::VectorXd b = traj.col(static_cast<Eigen::Index>(t + offset)).cast<double>() - cur;
  const double na = a.norm(), nb = b.norm();
  if (na < kTeMinNorm || nb < kTeMinNorm) return rec;
  rec.te = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return rec;
}

std::vector<TeRecord> te_records(const DatasetLatents& latents, double h_td) {
  std::vector<TeRecord> out;
  out.reserve(static_cast<std::size_t>(latents.points.cols()));
  for (std::size_t i = 0; i < latents.trajectory_count(); ++i) {
    const LatentMatrix traj = latents.trajectory(i);
    for (std::size_t t = 0; t < static_cast<std::size_t>(traj.cols()); ++t) {
      auto rec = temporal_efficiency(traj, t, h_td);
      rec.trajectory_id = i;
      out.push_back(rec);
    }
  }
  return out;
}

FilterResult filter_states(const DatasetLatents& latents, double h_td, std::optional<double> threshold) {
  FilterResult res;
  res.total = static_cast<std::size_t>(latents.points.cols());
  if (!threshold) {
    res.points = latents.points;
    res.state_index.resize(res.total);
    for (std::size_t i = 0; i < res.total; ++i) res.state_index[i] = i;
    res.defined = res.total;
    return res;
  }
  for (std::size_t i = 0; i < latents.trajectory_count(); ++i) {
    const LatentMatrix traj = latents.trajectory(i);
    for (std::size_t t = 0; t < static_cast<std::size_t>(traj.cols()); ++t) {
      const auto rec = temporal_efficiency(traj, t, h_td);
      if (!rec.te) continue;
      ++res.defined;
      if (*rec.te >= *threshold) res.state_index.push_back(latents.offsets[i] + t);
    }
  }
  res.points.resize(latents.points.rows(), static_cast<Eigen::Index>(res.state_index.size()));
  for (std::size_t k = 0; k < res.state_index.size(); ++k) {
    res.points.col(static_cast<Eigen::Index>(k)) = latents.column(res.state_index[k]);
  }
  return res;
}

}  // namespace gas
