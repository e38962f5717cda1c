#pragma once

#include "kaf/error.hpp"
#include "kaf/estimators/eigenbasis.hpp"
#include "kaf/kernel/markov.hpp"
#include "kaf/types.hpp"

#include <Eigen/Cholesky>

#include <memory>

namespace kaf {

//! Truncated eigenfunction expansion fitted by least squares in the basis
//! measure (the orthogonal projection when the basis is orthonormal in it),
//! extended to new points through the kernel.
struct NystromEstimator
{
  std::shared_ptr<const MarkovOperator> op;
  std::shared_ptr<const EigenBasis> basis;
  int L = 0;            // requested truncation
  int terms = 0;        // terms actually used (eigenvalue floor applied)
  int dropped = 0;      // terms removed by the eigenvalue floor
  Eigen::MatrixXd coefficients; // terms x r

  //! In-sample fitted values sum_j c_j phi_j.
  RowMatrix fitted() const
  {
    return basis->phi.leftCols(terms) * coefficients;
  }
};

inline constexpr double eigenvalue_floor = 1e-8;

inline NystromEstimator fit_nystrom(std::shared_ptr<const MarkovOperator> op,
                                    std::shared_ptr<const EigenBasis> basis,
                                    const RowMatrix& responses, int L)
{
  require(op && basis, "fit_nystrom: missing operator or basis");
  require(L >= 0 && L + 1 <= basis->count(), "fit_nystrom: L exceeds the basis size");
  require(responses.rows() == basis->size(),
          "fit_nystrom: responses must align with the training points");
  require(responses.allFinite(), "fit_nystrom: non-finite responses");

  NystromEstimator est;
  est.op = std::move(op);
  est.basis = std::move(basis);
  est.L = L;
  const Vector& lambda = est.basis->eigenvalues;
  const double floor = eigenvalue_floor * lambda[0];
  int terms = 0;
  while (terms <= L && lambda[terms] >= floor)
    ++terms;
  require(terms >= 1, "fit_nystrom: leading eigenvalue is not positive");
  est.terms = terms;
  est.dropped = L + 1 - terms;

  const auto Phi = est.basis->phi.leftCols(terms);
  const Eigen::MatrixXd WPhi = est.basis->weights.asDiagonal() * Phi;
  const Eigen::MatrixXd G = WPhi.transpose() * Phi;
  const Eigen::MatrixXd rhs = WPhi.transpose() * responses;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::numerical, "fit_nystrom: basis Gram matrix is singular");
  est.coefficients = llt.solve(rhs);
  return est;
}

//! Predictions from precomputed extension rows of the estimator's operator.
inline RowMatrix predict_nystrom(const NystromEstimator& est, const SparseRows& ext)
{
  require(ext.cols() == est.basis->size(), "predict_nystrom: extension width mismatch");
  Eigen::MatrixXd psi = ext * est.basis->phi.leftCols(est.terms);
  for (int j = 0; j < est.terms; ++j)
    psi.col(j) /= est.basis->eigenvalues[j];
  return psi * est.coefficients;
}

inline RowMatrix predict_nystrom(const NystromEstimator& est, const RowMatrix& new_points)
{
  return predict_nystrom(est, extend_rows(*est.op, new_points));
}

} // namespace kaf
