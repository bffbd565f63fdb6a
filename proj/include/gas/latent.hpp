#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>

namespace gas {

using LatentPoint = Eigen::VectorXf;
/// One latent point per column.
using LatentMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;

template <typename A, typename B>
double latent_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return (a.template cast<double>() - b.template cast<double>()).norm();
}

/// Smallest k > t whose point is at least `d` away from point t, if any.
/// `traj` holds one trajectory's embeddings, one state per column.
inline std::optional<std::size_t> optimal_future(const LatentMatrix& traj, std::size_t t, double d) {
  const auto n = static_cast<std::size_t>(traj.cols());
  for (std::size_t k = t + 1; k < n; ++k) {
    if (latent_distance(traj.col(static_cast<Eigen::Index>(t)), traj.col(static_cast<Eigen::Index>(k))) >= d) {
      return k;
    }
  }
  return std::nullopt;
}

}  // namespace gas
