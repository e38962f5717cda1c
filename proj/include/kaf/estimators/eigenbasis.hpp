#pragma once

#include "kaf/error.hpp"
#include "kaf/estimators/lanczos.hpp"
#include "kaf/kernel/markov.hpp"
#include "kaf/types.hpp"

#include <cmath>

namespace kaf {

//! Measure defining the inner product of the eigenbasis.
enum class ProjectionMeasure
{
  //! Stationary weights of P (row sums of the symmetric kernel), under which
  //! the right eigenvectors of P are orthogonal.
  stationary,
  //! Uniform empirical measure, 1/N per training point.
  uniform
};

//! Leading eigenpairs of a Markov operator P. The columns of `phi` are right
//! eigenvectors of P with unit norm in the weighted inner product
//! <f, g> = sum_i w_i f(x_i) g(x_i). Under the stationary measure they are
//! orthonormal; under the uniform one they are generally not, and gram()
//! gives their inner products.
struct EigenBasis
{
  Vector eigenvalues;      // descending
  Eigen::MatrixXd phi;     // N x (L + 1)
  ProjectionMeasure measure = ProjectionMeasure::stationary;
  Vector weights;          // w_i, summing to 1
  Vector stationary;       // stationary weights of P, summing to 1
  Vector residuals;        // ||P phi - lambda phi|| / ||phi||
  int restarts = 0;
  long matvecs = 0;

  Eigen::Index size() const { return phi.rows(); }
  Eigen::Index count() const { return phi.cols(); }

  Eigen::MatrixXd gram() const
  {
    return phi.transpose() * weights.asDiagonal() * phi;
  }
};

inline const char* to_string(ProjectionMeasure m)
{
  return m == ProjectionMeasure::stationary ? "stationary" : "uniform";
}

//! Solves the symmetric problem for D^{1/2} P D^{-1/2} (D the row sums of the
//! symmetric kernel) and maps the eigenvectors back to P.
inline EigenBasis eigendecompose(const MarkovOperator& op, int L,
                                 ProjectionMeasure measure = ProjectionMeasure::stationary,
                                 const LanczosOptions& opt = {})
{
  const Eigen::Index N = op.size();
  require(L >= 0 && L + 1 <= N, "eigendecompose: need 0 <= L and L + 1 <= N");
  const Vector sqrt_d = op.row_sum.array().sqrt();
  const Vector inv_sqrt_d = sqrt_d.cwiseInverse();
  Vector tmp(N);
  auto apply = [&](const Vector& x, Vector& y) {
    tmp = x.cwiseProduct(inv_sqrt_d);
    y.noalias() = op.P * tmp;
    y.array() *= sqrt_d.array();
  };
  const LanczosResult lr = lanczos_largest(apply, N, L + 1, opt);

  EigenBasis b;
  b.eigenvalues = lr.values;
  b.restarts = lr.restarts;
  b.matvecs = lr.matvecs;
  b.measure = measure;
  b.stationary = op.row_sum / op.row_sum.sum();
  b.weights = measure == ProjectionMeasure::stationary
                ? b.stationary
                : Vector::Constant(N, 1.0 / static_cast<double>(N));
  b.phi.resize(N, L + 1);
  b.residuals.resize(L + 1);
  for (int j = 0; j <= L; ++j) {
    Vector f = lr.vectors.col(j).cwiseProduct(inv_sqrt_d);
    f /= std::sqrt(f.cwiseAbs2().dot(b.weights));
    Eigen::Index at = 0;
    f.cwiseAbs().maxCoeff(&at);
    if (f[at] < 0.0)
      f = -f;
    const Vector r = op.P * f - b.eigenvalues[j] * f;
    b.residuals[j] = r.norm() / f.norm();
    b.phi.col(j) = f;
  }
  return b;
}

} // namespace kaf
