#pragma once

#include "kaf/dynamics/system.hpp"
#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <cmath>
#include <random>
#include <string>
#include <variant>

namespace kaf {

struct GaussianNoise
{
  double variance = 1.0;
};

//! Student-t with `dof` degrees of freedom, multiplied by `scale`.
struct StudentTNoise
{
  double dof = 3.0;
  double scale = 1.0;
};

struct UniformNoise
{
  double a = -1.0;
  double b = 1.0;
};

//! theta_t = amplitude * sin(t * U_t), U_t ~ Uniform[-half_width, half_width],
//! with t the 1-based sample index.
struct SineNoise
{
  double amplitude = 1.0;
  double half_width = 0.5;
};

using NoiseKind = std::variant<GaussianNoise, StudentTNoise, UniformNoise, SineNoise>;

struct NoiseModel
{
  NoiseKind kind = GaussianNoise{};
  std::uint64_t seed = 0;

  void validate() const
  {
    std::visit(
      [](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, GaussianNoise>)
          require(k.variance >= 0.0 && std::isfinite(k.variance),
                  "Gaussian noise variance must be non-negative");
        else if constexpr (std::is_same_v<T, StudentTNoise>)
          require(k.dof > 2.0 && k.scale >= 0.0,
                  "Student-t noise needs dof > 2 and scale >= 0");
        else if constexpr (std::is_same_v<T, UniformNoise>)
          require(k.a < k.b, "uniform noise needs a < b");
        else
          require(k.half_width >= 0.0, "sine noise half-width must be >= 0");
      },
      kind);
  }

  std::string name() const
  {
    switch (kind.index()) {
      case 0:
        return "gaussian";
      case 1:
        return "student_t";
      case 2:
        return "uniform";
      default:
        return "time_varying";
    }
  }
};

//! Scale factor making a Student-t variable with `dof` degrees of freedom
//! have the requested variance.
inline double student_t_scale(double dof, double variance)
{
  require(dof > 2.0 && variance >= 0.0, "student_t_scale: need dof > 2");
  return std::sqrt(variance * (dof - 2.0) / dof);
}

inline Vector noise_sequence(const NoiseModel& model, Eigen::Index n)
{
  model.validate();
  Vector out(n);
  Rng rng = split_stream(model.seed, 0x6e6f697365ULL);
  std::visit(
    [&](const auto& k) {
      using T = std::decay_t<decltype(k)>;
      if constexpr (std::is_same_v<T, GaussianNoise>) {
        if (k.variance == 0.0) {
          out.setZero();
          return;
        }
        std::normal_distribution<double> d(0.0, std::sqrt(k.variance));
        for (Eigen::Index t = 0; t < n; ++t)
          out[t] = d(rng);
      } else if constexpr (std::is_same_v<T, StudentTNoise>) {
        std::student_t_distribution<double> d(k.dof);
        for (Eigen::Index t = 0; t < n; ++t)
          out[t] = k.scale * d(rng);
      } else if constexpr (std::is_same_v<T, UniformNoise>) {
        std::uniform_real_distribution<double> d(k.a, k.b);
        for (Eigen::Index t = 0; t < n; ++t)
          out[t] = d(rng);
      } else {
        std::uniform_real_distribution<double> d(-k.half_width, k.half_width);
        for (Eigen::Index t = 0; t < n; ++t)
          out[t] = k.amplitude * std::sin(double(t + 1) * d(rng));
      }
    },
    model.kind);
  return out;
}

//! Noisy copy of one trajectory component; the trajectory is not modified.
inline Vector apply_noise(const Trajectory& traj, int component, const NoiseModel& model)
{
  require(component >= 0 && component < traj.states.cols(),
          "apply_noise: component out of range");
  Vector z = traj.states.col(component);
  z += noise_sequence(model, z.size());
  return z;
}

} // namespace kaf
