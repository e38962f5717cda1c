#pragma once

#include "kaf/error.hpp"
#include "kaf/kernel/neighbors.hpp"
#include "kaf/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace kaf {

struct BandwidthTuning
{
  double epsilon = 0.0;
  double dimension = 0.0; // 2 * maximal log-log slope
  std::vector<double> log2_epsilon;
  std::vector<double> log_sum; // log T at each evaluated grid point
};

namespace detail {

//! T(eps) * N^2 = sum over the support of exp(-a / eps). Partial sums over
//! fixed chunks are combined in order, so the result does not depend on the
//! thread count.
inline double kernel_sum(const std::vector<double>& a, double eps)
{
  constexpr std::size_t chunk = 4096;
  const double inv = 1.0 / eps;
  const std::size_t n_chunks = (a.size() + chunk - 1) / chunk;
  std::vector<double> partial(n_chunks, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
    const std::size_t b = static_cast<std::size_t>(c) * chunk;
    const std::size_t e = std::min(a.size(), b + chunk);
    double s = 0.0;
    for (std::size_t k = b; k < e; ++k)
      s += std::exp(-a[k] * inv);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double s = 0.0;
  for (double v : partial)
    s += v;
  return s;
}

} // namespace detail

//! Slope-maximization bandwidth selection. `scaled` holds
//! ||x_i - x_j||^2 / (rho_i rho_j) over the kernel support (self pairs
//! included). The grid is log2 eps = lo, lo + step, ..., hi. A coarse pass
//! at 4x the step locates the region of maximal slope, which is then resolved
//! at full resolution.
inline BandwidthTuning auto_tune_bandwidth(const std::vector<double>& scaled,
                                           Eigen::Index n,
                                           double lo = -30.0,
                                           double hi = 10.0,
                                           double step = 0.25)
{
  require(!scaled.empty() && n >= 1, "auto_tune_bandwidth: empty support");
  require(hi > lo && step > 0.0, "auto_tune_bandwidth: bad grid");
  for (double v : scaled)
    require(std::isfinite(v) && v >= 0.0,
            "auto_tune_bandwidth: scaled distances must be finite and >= 0");

  const int n_grid = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  const double norm = std::log(double(n) * double(n));
  std::vector<double> logT(static_cast<std::size_t>(n_grid),
                           std::numeric_limits<double>::quiet_NaN());
  auto eval = [&](int k) {
    auto& v = logT[static_cast<std::size_t>(k)];
    if (std::isnan(v))
      v = std::log(detail::kernel_sum(scaled, std::exp2(lo + step * k))) - norm;
    return v;
  };
  auto slope = [&](int k) { return (eval(k + 1) - eval(k)) / (step * std::log(2.0)); };

  constexpr int coarse = 4;
  int best_coarse = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k + coarse < n_grid; k += coarse) {
    const double s = (eval(k + coarse) - eval(k)) / (coarse * step * std::log(2.0));
    if (s > best) {
      best = s;
      best_coarse = k;
    }
  }
  const int from = std::max(0, best_coarse - 2 * coarse);
  const int to = std::min(n_grid - 2, best_coarse + 3 * coarse);
  int arg = from;
  best = -std::numeric_limits<double>::infinity();
  for (int k = from; k <= to; ++k) {
    const double s = slope(k);
    if (s > best) {
      best = s;
      arg = k;
    }
  }
  if (!(best > 0.0) || arg == 0 || arg == n_grid - 2)
    throw Error(ErrorKind::tuning_failure,
                "bandwidth auto-tuning found no interior slope maximum");

  BandwidthTuning out;
  out.epsilon = std::exp2(lo + step * (arg + 0.5));
  out.dimension = 2.0 * best;
  for (int k = 0; k < n_grid; ++k)
    if (!std::isnan(logT[static_cast<std::size_t>(k)])) {
      out.log2_epsilon.push_back(lo + step * k);
      out.log_sum.push_back(logT[static_cast<std::size_t>(k)]);
    }
  return out;
}

//! Pilot bandwidth: root-mean-square distance to the first k0 + 1 entries of
//! each kNN list (the point itself included).
inline Vector pilot_bandwidth(const NeighborGraph& g, int k0)
{
  const int k = std::min(k0 + 1, g.knn);
  Vector rho(g.n);
  for (Eigen::Index i = 0; i < g.n; ++i) {
    double s = 0.0;
    for (int c = 0; c < k; ++c)
      s += g.dist2[static_cast<std::size_t>(i * g.knn + c)];
    rho[i] = std::sqrt(s / k);
  }
  return rho;
}

//! Scaled squared distances ||x_i - x_j||^2 / (rho_i rho_j) over the
//! symmetrized support of g.
inline std::vector<double> scaled_distances(const NeighborGraph& g, const Vector& rho)
{
  std::vector<double> a(g.col.size());
  for (Eigen::Index i = 0; i < g.n; ++i)
    for (auto e = g.row_ptr[static_cast<std::size_t>(i)];
         e < g.row_ptr[static_cast<std::size_t>(i + 1)]; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      a[ue] = g.sym_dist2[ue] / (rho[i] * rho[g.col[ue]]);
    }
  return a;
}

} // namespace kaf
