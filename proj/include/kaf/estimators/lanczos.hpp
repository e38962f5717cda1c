#pragma once

#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace kaf {

struct LanczosOptions
{
  //! Krylov basis size; 0 picks max(2 nev, nev + 64), capped at n.
  int max_basis = 0;
  //! Absolute residual tolerance ||A y - theta y|| for unit Ritz vectors.
  double tol = 1e-11;
  int max_restarts = 1000;
  std::uint64_t seed = 0x4c616e637a6f73ULL;
};

struct LanczosResult
{
  Vector values;           // descending
  Eigen::MatrixXd vectors; // orthonormal columns
  Vector residuals;
  int restarts = 0;
  long matvecs = 0;
};

//! Largest `nev` eigenpairs of a symmetric operator by thick-restart Lanczos
//! with full (twice-iterated classical Gram-Schmidt) reorthogonalization.
//! `apply(x, y)` must write A x into y.
template <typename Apply>
LanczosResult lanczos_largest(Apply&& apply, Eigen::Index n, int nev,
                              const LanczosOptions& opt = {})
{
  require(nev >= 1 && nev <= n, "lanczos: need 1 <= nev <= n");
  Eigen::Index m = opt.max_basis > 0 ? opt.max_basis
                                     : std::max<Eigen::Index>(2 * nev, nev + 64);
  m = std::min(std::max<Eigen::Index>(m, nev + 1), n);
  if (m < nev)
    m = nev;

  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  Vector w(n), h, h2;
  Rng rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto random_orthogonal = [&](Eigen::Index cols) -> bool {
    for (int attempt = 0; attempt < 5; ++attempt) {
      for (Eigen::Index i = 0; i < n; ++i)
        w[i] = normal(rng);
      for (int pass = 0; pass < 2; ++pass) {
        h = V.leftCols(cols).transpose() * w;
        w.noalias() -= V.leftCols(cols) * h;
      }
      const double nw = w.norm();
      if (nw > 1e-8) {
        w /= nw;
        return true;
      }
    }
    return false;
  };

  for (Eigen::Index i = 0; i < n; ++i)
    V(i, 0) = 1.0 + 0.5 * normal(rng);
  V.col(0).normalize();

  LanczosResult res;
  Eigen::Index k = 0; // kept Ritz vectors at the start of a cycle
  for (int restart = 0;; ++restart) {
    Eigen::Index size = m;
    double beta_m = 0.0;
    for (Eigen::Index j = k; j < m; ++j) {
      Vector vj = V.col(j);
      apply(vj, w);
      ++res.matvecs;
      h = V.leftCols(j + 1).transpose() * w;
      w.noalias() -= V.leftCols(j + 1) * h;
      h2 = V.leftCols(j + 1).transpose() * w;
      w.noalias() -= V.leftCols(j + 1) * h2;
      h += h2;
      T(j, j) = h[j];
      if (j == k)
        for (Eigen::Index i = 0; i < k; ++i)
          T(i, k) = T(k, i) = h[i];
      double beta = w.norm();
      if (j + 1 == n) {
        // The basis spans the whole space.
        size = j + 1;
        beta_m = 0.0;
        break;
      }
      const double scale = std::max(1.0, std::abs(T(j, j)));
      if (beta <= 1e-12 * scale) {
        // Invariant subspace: continue with a fresh orthogonal direction.
        if (!random_orthogonal(j + 1)) {
          size = j + 1;
          beta_m = 0.0;
          break;
        }
        beta = 0.0;
        V.col(j + 1) = w;
      } else {
        V.col(j + 1) = w / beta;
      }
      if (j + 1 < m)
        T(j + 1, j) = T(j, j + 1) = beta;
      else
        beta_m = beta;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.topLeftCorner(size, size));
    if (es.info() != Eigen::Success)
      throw Error(ErrorKind::numerical, "lanczos: projected eigenproblem failed");
    // Descending order.
    const Vector theta = es.eigenvalues().reverse();
    const Eigen::MatrixXd Y = es.eigenvectors().rowwise().reverse();
    Vector resid(size);
    for (Eigen::Index i = 0; i < size; ++i)
      resid[i] = std::abs(beta_m * Y(size - 1, i));
    const bool converged = size < nev ? false : (resid.head(nev).maxCoeff() <= opt.tol);

    if (converged || size < nev || restart >= opt.max_restarts || size == n) {
      if (size < nev)
        throw Error(ErrorKind::numerical,
                    "lanczos: Krylov space exhausted with " + std::to_string(size) +
                      " vectors, " + std::to_string(nev) + " requested");
      if (!converged && size != n)
        throw Error(ErrorKind::numerical,
                    "lanczos: no convergence after " + std::to_string(restart) +
                      " restarts (" + std::to_string(res.matvecs) +
                      " products, max residual " +
                      std::to_string(resid.head(nev).maxCoeff()) + ")");
      res.values = theta.head(nev);
      res.vectors = V.leftCols(size) * Y.leftCols(nev);
      res.residuals = resid.head(nev);
      res.restarts = restart;
      return res;
    }

    // Thick restart: keep the leading Ritz vectors and the residual direction.
    const Eigen::Index keep =
      std::min<Eigen::Index>(size - 1, nev + (size - nev) / 3);
    Eigen::MatrixXd kept = V.leftCols(size) * Y.leftCols(keep);
    const Vector r = V.col(size);
    V.leftCols(keep) = kept;
    V.col(keep) = r;
    T.setZero();
    for (Eigen::Index i = 0; i < keep; ++i) {
      T(i, i) = theta[i];
      T(i, keep) = T(keep, i) = beta_m * Y(size - 1, i);
    }
    k = keep;
  }
}

} // namespace kaf
