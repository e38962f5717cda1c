#pragma once

#include "kaf/error.hpp"
#include "kaf/kernel/markov.hpp"
#include "kaf/types.hpp"

#include <memory>

namespace kaf {

//! Kernel smoothing regression: the Markov operator applied to the training
//! responses.
struct SmoothingEstimator
{
  std::shared_ptr<const MarkovOperator> op;
  RowMatrix responses;

  RowMatrix fitted() const { return op->P * responses; }
};

inline SmoothingEstimator fit_kernel_smoothing(std::shared_ptr<const MarkovOperator> op,
                                               const RowMatrix& responses)
{
  require(op != nullptr, "fit_kernel_smoothing: missing operator");
  require(responses.rows() == op->size(),
          "fit_kernel_smoothing: responses must align with the training points");
  return SmoothingEstimator{ std::move(op), responses };
}

inline RowMatrix predict_kernel_smoothing(const SmoothingEstimator& est, const SparseRows& ext)
{
  require(ext.cols() == est.responses.rows(),
          "predict_kernel_smoothing: extension width mismatch");
  return ext * est.responses;
}

inline RowMatrix predict_kernel_smoothing(const SmoothingEstimator& est,
                                          const RowMatrix& new_points)
{
  return predict_kernel_smoothing(est, extend_rows(*est.op, new_points));
}

} // namespace kaf
