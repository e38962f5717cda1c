#pragma once

#include "kaf/kaf.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace kaf::test {

//! n points on the unit circle; evenly spaced, or i.i.d. uniform in angle.
inline RowMatrix circle_points(Eigen::Index n, Rng* rng = nullptr, Vector* angles = nullptr)
{
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  RowMatrix x(n, 2);
  Vector th(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    th[i] = rng ? u(*rng) : 2.0 * std::numbers::pi * double(i) / double(n);
    x(i, 0) = std::cos(th[i]);
    x(i, 1) = std::sin(th[i]);
  }
  if (angles)
    *angles = th;
  return x;
}

inline RowMatrix uniform_cloud(Eigen::Index n, int dim, Rng& rng)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c)
      x(i, c) = u(rng);
  return x;
}

inline SystemSpec linear_spec(const Eigen::MatrixXd& a, double dt, double obs_dt)
{
  return SystemSpec{ LinearSystem{ a }, dt, obs_dt };
}

//! Dense copy of P.
inline Eigen::MatrixXd dense(const SparseRows& p)
{
  return Eigen::MatrixXd(p);
}

} // namespace kaf::test
