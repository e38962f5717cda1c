#pragma once

#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <random>

namespace kaf {

inline constexpr int hamiltonian_dim = 16;

using State16 = std::array<double, hamiltonian_dim>;

inline double hamiltonian_energy(const double* w)
{
  double quad = 0.0;
  for (int i = 0; i < hamiltonian_dim; ++i)
    quad += w[i] * w[i];
  double quartic = 0.0;
  for (int k = 0; k < 7; ++k)
    quartic += w[2 * k] * w[2 * k] * w[2 * k + 2] * w[2 * k + 2];
  return 0.5 * (quad + quartic);
}

inline double hamiltonian_energy(const Vector& w)
{
  require(w.size() == hamiltonian_dim,
          "hamiltonian_energy: state must have dimension 16");
  return hamiltonian_energy(w.data());
}

//! Gradient of H written into g.
inline void hamiltonian_gradient(const double* w, double* g)
{
  for (int i = 0; i < hamiltonian_dim; ++i)
    g[i] = w[i];
  for (int k = 0; k < 8; ++k) {
    double c = 0.0;
    if (k > 0)
      c += w[2 * k - 2] * w[2 * k - 2];
    if (k < 7)
      c += w[2 * k + 2] * w[2 * k + 2];
    g[2 * k] += w[2 * k] * c;
  }
}

struct HmcOptions
{
  int leapfrog_steps = 20;
  int burn_in = 1000;
  int thin = 5;
  double initial_step = 0.2;
  double target_low = 0.65;
  double target_high = 0.85;
  //! Relative uniform jitter applied to the step size every iteration.
  double jitter = 0.2;
  int adapt_window = 50;
  bool adapt = true;
  double min_acceptance = 0.10;
};

struct HmcDiagnostics
{
  double step_size = 0.0;
  double acceptance = 0.0; // over the sampling phase
};

//! Samples from the density proportional to exp(-H). When `fixed` holds a
//! pair, the first two coordinates are clamped to it and only the remaining
//! 14 coordinates move.
inline RowMatrix hmc_sample(const std::optional<std::array<double, 2>>& fixed,
                            Eigen::Index n,
                            Rng& rng,
                            const HmcOptions& opt = {},
                            HmcDiagnostics* diag = nullptr)
{
  require(n >= 1, "hmc_sample: n must be >= 1");
  require(opt.leapfrog_steps >= 1 && opt.thin >= 1 && opt.burn_in >= 0 &&
            opt.adapt_window >= 1 && opt.initial_step > 0.0,
          "hmc_sample: invalid options");

  const int first = fixed ? 2 : 0;
  State16 x{};
  if (fixed) {
    x[0] = (*fixed)[0];
    x[1] = (*fixed)[1];
  }
  State16 xp, p, g;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  double step = opt.initial_step;
  double energy = hamiltonian_energy(x.data());

  auto iterate = [&]() -> bool {
    const double h =
      step * (1.0 + opt.jitter * (2.0 * unif(rng) - 1.0));
    xp = x;
    double kinetic0 = 0.0;
    for (int i = first; i < hamiltonian_dim; ++i) {
      p[i] = normal(rng);
      kinetic0 += p[i] * p[i];
    }
    hamiltonian_gradient(xp.data(), g.data());
    for (int i = first; i < hamiltonian_dim; ++i)
      p[i] -= 0.5 * h * g[i];
    for (int s = 0; s < opt.leapfrog_steps; ++s) {
      for (int i = first; i < hamiltonian_dim; ++i)
        xp[i] += h * p[i];
      hamiltonian_gradient(xp.data(), g.data());
      const double scale = (s + 1 == opt.leapfrog_steps) ? 0.5 : 1.0;
      for (int i = first; i < hamiltonian_dim; ++i)
        p[i] -= scale * h * g[i];
    }
    double kinetic1 = 0.0;
    for (int i = first; i < hamiltonian_dim; ++i)
      kinetic1 += p[i] * p[i];
    const double energy1 = hamiltonian_energy(xp.data());
    const double log_ratio =
      energy + 0.5 * kinetic0 - energy1 - 0.5 * kinetic1;
    const double u = unif(rng);
    if (std::isfinite(log_ratio) && std::log(u) < log_ratio) {
      x = xp;
      energy = energy1;
      return true;
    }
    return false;
  };

  int window_accepts = 0;
  int window_count = 0;
  double last_window_rate = 1.0;
  for (int it = 0; it < opt.burn_in; ++it) {
    window_accepts += iterate() ? 1 : 0;
    if (++window_count == opt.adapt_window) {
      last_window_rate = double(window_accepts) / window_count;
      if (opt.adapt) {
        if (last_window_rate < opt.target_low)
          step *= 0.8;
        else if (last_window_rate > opt.target_high)
          step *= 1.15;
      }
      window_accepts = 0;
      window_count = 0;
    }
  }
  if (opt.burn_in >= opt.adapt_window && last_window_rate < opt.min_acceptance)
    throw Error(ErrorKind::tuning_failure,
                "hmc_sample: acceptance rate " +
                  std::to_string(last_window_rate) +
                  " below threshold during tuning");

  RowMatrix out(n, hamiltonian_dim);
  long accepts = 0;
  long total = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int t = 0; t < opt.thin; ++t) {
      accepts += iterate() ? 1 : 0;
      ++total;
    }
    for (int i = 0; i < hamiltonian_dim; ++i)
      out(s, i) = x[i];
  }
  const double rate = double(accepts) / double(total);
  if (total >= opt.adapt_window && rate < opt.min_acceptance)
    throw Error(ErrorKind::tuning_failure,
                "hmc_sample: acceptance rate " + std::to_string(rate) +
                  " below threshold");
  if (diag) {
    diag->step_size = step;
    diag->acceptance = rate;
  }
  return out;
}

} // namespace kaf
