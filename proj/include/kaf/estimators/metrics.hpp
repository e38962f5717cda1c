#pragma once

#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <cmath>

namespace kaf {

//! RMSE per lead. Columns are lead-major blocks of `response_dim` entries, so
//! lead l occupies columns [l * response_dim, (l + 1) * response_dim).
inline Vector rmse_curve(const RowMatrix& predictions, const RowMatrix& truth,
                         Eigen::Index response_dim = 1)
{
  require(predictions.rows() == truth.rows() && predictions.cols() == truth.cols(),
          "rmse_curve: shape mismatch");
  require(response_dim >= 1 && truth.cols() % response_dim == 0,
          "rmse_curve: columns are not a multiple of the response dimension");
  require(truth.rows() >= 1, "rmse_curve: no points");
  const Eigen::Index leads = truth.cols() / response_dim;
  Vector out(leads);
  for (Eigen::Index l = 0; l < leads; ++l) {
    const auto diff = predictions.middleCols(l * response_dim, response_dim) -
                      truth.middleCols(l * response_dim, response_dim);
    out[l] = std::sqrt(diff.squaredNorm() / double(truth.rows() * response_dim));
  }
  return out;
}

inline double rmse(const Vector& estimate, const Vector& truth)
{
  require(estimate.size() == truth.size() && truth.size() >= 1, "rmse: shape mismatch");
  return std::sqrt((estimate - truth).squaredNorm() / double(truth.size()));
}

} // namespace kaf
