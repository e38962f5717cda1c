#pragma once

#include "kaf/dynamics/hamiltonian.hpp"
#include "kaf/dynamics/system.hpp"
#include "kaf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace kaf {

//! Random starting point for attractor sampling.
inline Vector random_initial_state(const SystemSpec& spec, Rng& rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = spec.dimension();
  Vector x(n);
  if (std::holds_alternative<Lorenz63>(spec.kind)) {
    x << 5.0 * normal(rng), 5.0 * normal(rng), 25.0 + 5.0 * normal(rng);
  } else if (const auto* l96 = std::get_if<Lorenz96>(&spec.kind)) {
    for (int i = 0; i < n; ++i)
      x[i] = l96->forcing + normal(rng);
  } else {
    for (int i = 0; i < n; ++i)
      x[i] = normal(rng);
  }
  return x;
}

//! n states distributed (approximately) by the invariant measure. Dissipative
//! systems are spun up from random states for `spinup` time units; the
//! Hamiltonian system is sampled directly from exp(-H) by HMC.
inline RowMatrix sample_invariant(const SystemSpec& spec,
                                  Eigen::Index n,
                                  double spinup,
                                  Rng& rng,
                                  const HmcOptions& hmc = {})
{
  spec.validate();
  require(spinup > 0.0, "sample_invariant: spinup must be positive");
  require(n >= 0, "sample_invariant: n must be non-negative");
  const int dim = spec.dimension();
  if (n == 0)
    return RowMatrix(0, dim);
  if (std::holds_alternative<Hamiltonian16>(spec.kind))
    return hmc_sample(std::nullopt, n, rng, hmc);

  const std::uint64_t base = rng();
  const auto steps =
    static_cast<Eigen::Index>(std::ceil(spinup / spec.obs_dt - 1e-9));
  RowMatrix out(n, dim);
  parallel_for(n, [&](std::ptrdiff_t i) {
    Rng member = split_stream(base, static_cast<std::uint64_t>(i));
    Vector x = random_initial_state(spec, member);
    advance(spec, x, steps);
    out.row(i) = x.transpose();
  });
  return out;
}

//! One long trajectory started from a spun-up random state.
inline Trajectory attractor_trajectory(const SystemSpec& spec,
                                       Eigen::Index n_samples,
                                       double spinup,
                                       Rng& rng)
{
  RowMatrix x0 = sample_invariant(spec, 1, spinup, rng);
  return integrate(spec, x0.row(0).transpose(), n_samples);
}

struct McEstimate
{
  RowMatrix mean;   // n_leads x |response components|
  RowMatrix std_error; // Monte-Carlo standard error of each mean entry
};

struct McRequest
{
  std::vector<int> observed;  // clamped state components
  std::vector<int> response;  // averaged state components
  std::vector<int> leads;     // lead indices in sampling intervals, ascending
  Eigen::Index n_mc = 1000;
  HmcOptions hmc;
};

//! Monte-Carlo estimate of E[response(t) | observed(0) = x0_fixed]. For the
//! Hamiltonian system the unobserved coordinates are drawn by HMC from the
//! conditional canonical density (observed must be {0, 1}); otherwise they are
//! independent standard Gaussians.
inline McEstimate mc_conditional_expectation(const SystemSpec& spec,
                                             const Vector& x0_fixed,
                                             const McRequest& req,
                                             Rng& rng)
{
  spec.validate();
  require(req.n_mc >= 1, "mc_conditional_expectation: n_mc must be >= 1");
  require(!req.leads.empty() && !req.response.empty(),
          "mc_conditional_expectation: leads and response must be non-empty");
  require(std::is_sorted(req.leads.begin(), req.leads.end()) &&
            req.leads.front() >= 0,
          "mc_conditional_expectation: leads must be ascending and >= 0");
  require(x0_fixed.size() == static_cast<Eigen::Index>(req.observed.size()),
          "mc_conditional_expectation: x0_fixed size must match observed");
  const int dim = spec.dimension();
  for (int c : req.observed)
    require(c >= 0 && c < dim, "mc_conditional_expectation: bad component");
  for (int c : req.response)
    require(c >= 0 && c < dim, "mc_conditional_expectation: bad component");

  const bool hamiltonian = std::holds_alternative<Hamiltonian16>(spec.kind);
  RowMatrix initial(req.n_mc, dim);
  if (hamiltonian) {
    require(req.observed.size() == 2 && req.observed[0] == 0 &&
              req.observed[1] == 1,
            "mc_conditional_expectation: Hamiltonian conditioning is on "
            "components 0 and 1");
    initial = hmc_sample(std::array<double, 2>{ x0_fixed[0], x0_fixed[1] },
                         req.n_mc, rng, req.hmc);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < req.n_mc; ++k)
      for (int c = 0; c < dim; ++c)
        initial(k, c) = normal(rng);
    for (std::size_t o = 0; o < req.observed.size(); ++o)
      initial.col(req.observed[o]).setConstant(x0_fixed[o]);
  }

  const auto n_leads = static_cast<Eigen::Index>(req.leads.size());
  const auto r = static_cast<Eigen::Index>(req.response.size());
  RowMatrix sum = RowMatrix::Zero(n_leads, r);
  RowMatrix sum2 = RowMatrix::Zero(n_leads, r);
  Rk4Workspace ws(dim);
  Vector x(dim);
  for (Eigen::Index k = 0; k < req.n_mc; ++k) {
    x = initial.row(k).transpose();
    int t = 0;
    for (Eigen::Index l = 0; l < n_leads; ++l) {
      for (; t < req.leads[l]; ++t)
        ws.advance(spec, std::span<double>(x.data(), x.size()));
      for (Eigen::Index c = 0; c < r; ++c) {
        const double v = x[req.response[c]];
        sum(l, c) += v;
        sum2(l, c) += v * v;
      }
    }
  }
  McEstimate est;
  const double n = static_cast<double>(req.n_mc);
  est.mean = sum / n;
  est.std_error.resize(n_leads, r);
  for (Eigen::Index l = 0; l < n_leads; ++l)
    for (Eigen::Index c = 0; c < r; ++c) {
      const double var =
        n > 1 ? std::max(0.0, (sum2(l, c) - n * est.mean(l, c) * est.mean(l, c)) /
                                (n - 1.0))
              : 0.0;
      est.std_error(l, c) = std::sqrt(var / n);
    }
  // Observed response components are exact at lead 0.
  for (Eigen::Index l = 0; l < n_leads; ++l) {
    if (req.leads[l] != 0)
      continue;
    for (Eigen::Index c = 0; c < r; ++c)
      for (std::size_t o = 0; o < req.observed.size(); ++o)
        if (req.response[c] == req.observed[o]) {
          est.mean(l, c) = x0_fixed[o];
          est.std_error(l, c) = 0.0;
        }
  }
  return est;
}

} // namespace kaf
