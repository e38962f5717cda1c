#pragma once

#include "kaf/dynamics/system.hpp"
#include "kaf/error.hpp"
#include "kaf/parallel.hpp"
#include "kaf/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace kaf {

struct EnkfConfig
{
  SystemSpec spec;
  int ensemble_size = 64;
  std::vector<int> observed;
  Vector obs_noise_var; // one entry per observed component
  double inflation = 1.02;
  double max_condition = 1e12;
};

struct EnkfResult
{
  RowMatrix mean; // T x dimension, analysis ensemble mean at every time
};

//! Stochastic (perturbed-observation) ensemble Kalman filter. Observations are
//! rows of `obs`, one per sampling interval, the first at the time of the
//! initial ensemble. Members are propagated with the model's RK4 integrator.
inline EnkfResult enkf_run(const EnkfConfig& cfg, const RowMatrix& obs,
                           const RowMatrix& x0_ensemble, Rng& rng)
{
  cfg.spec.validate();
  const int dim = cfg.spec.dimension();
  const int n_ens = cfg.ensemble_size;
  const auto n_obs = static_cast<Eigen::Index>(cfg.observed.size());
  require(n_ens >= 2, "enkf: ensemble_size must be >= 2");
  require(n_obs >= 1, "enkf: observed set is empty");
  require(cfg.obs_noise_var.size() == n_obs, "enkf: one noise variance per observation");
  require((cfg.obs_noise_var.array() > 0.0).all(),
          "enkf: observation noise variances must be positive");
  require(cfg.inflation >= 1.0, "enkf: inflation must be >= 1");
  for (int c : cfg.observed)
    require(c >= 0 && c < dim, "enkf: observed component out of range");
  require(obs.cols() == n_obs, "enkf: observation matrix has the wrong width");
  require(x0_ensemble.rows() == n_ens && x0_ensemble.cols() == dim,
          "enkf: initial ensemble must be ensemble_size x dimension");

  const Eigen::Index T = obs.rows();
  EnkfResult out;
  out.mean.resize(T, dim);
  Eigen::MatrixXd X = x0_ensemble.transpose(); // dim x n_ens
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector obs_sd = cfg.obs_noise_var.array().sqrt();
  const double norm = 1.0 / (n_ens - 1.0);

  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      parallel_for(n_ens, [&](std::ptrdiff_t e) {
        Rk4Workspace ws(dim);
        ws.advance(cfg.spec, std::span<double>(X.col(e).data(), static_cast<std::size_t>(dim)));
      });
    }
    if (!X.allFinite())
      throw Error(ErrorKind::divergence,
                  "enkf: non-finite ensemble at time index " + std::to_string(t));

    Vector mean = X.rowwise().mean();
    Eigen::MatrixXd A = X.colwise() - mean;
    A *= cfg.inflation;
    X = A.colwise() + mean;

    Eigen::MatrixXd HA(n_obs, n_ens);
    for (Eigen::Index o = 0; o < n_obs; ++o)
      HA.row(o) = A.row(cfg.observed[static_cast<std::size_t>(o)]);
    Eigen::MatrixXd S = norm * HA * HA.transpose();
    S.diagonal() += cfg.obs_noise_var;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !std::isfinite(hi) || hi / lo > cfg.max_condition)
      throw Error(ErrorKind::divergence,
                  "enkf: innovation covariance ill-conditioned at time index " +
                    std::to_string(t));
    const Eigen::MatrixXd K = norm * A * HA.transpose() *
                              (es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                               es.eigenvectors().transpose());
    Eigen::MatrixXd innov(n_obs, n_ens);
    for (int e = 0; e < n_ens; ++e)
      for (Eigen::Index o = 0; o < n_obs; ++o)
        innov(o, e) = obs(t, o) + obs_sd[o] * normal(rng) -
                      X(cfg.observed[static_cast<std::size_t>(o)], e);
    X.noalias() += K * innov;
    out.mean.row(t) = X.rowwise().mean().transpose();
  }
  return out;
}

} // namespace kaf
