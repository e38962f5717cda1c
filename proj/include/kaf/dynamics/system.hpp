#pragma once

#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace kaf {

struct Lorenz63
{
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

//! Lorenz-96 ring with periodic indexing.
struct Lorenz96
{
  int n = 40;
  double forcing = 8.0;
};

//! 16-dimensional system with Hamiltonian
//! H = 1/2 (sum_i w_i^2 + sum_{i=1..7} w_{2i-1}^2 w_{2i+1}^2).
//! Odd (1-based) coordinates are positions, even ones their conjugate momenta.
struct Hamiltonian16
{};

//! dx/dt = A x. Used for test fixtures (zero field, harmonic oscillator,
//! linear Kalman filter comparisons).
struct LinearSystem
{
  Eigen::MatrixXd a;
};

using SystemKind = std::variant<Lorenz63, Lorenz96, Hamiltonian16, LinearSystem>;

struct SystemSpec
{
  SystemKind kind;
  double dt = 0.0;     // integration step
  double obs_dt = 0.0; // sampling interval, integer multiple of dt

  int dimension() const
  {
    return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Lorenz63>)
          return 3;
        else if constexpr (std::is_same_v<T, Lorenz96>)
          return s.n;
        else if constexpr (std::is_same_v<T, Hamiltonian16>)
          return 16;
        else
          return static_cast<int>(s.a.rows());
      },
      kind);
  }

  //! Number of integration steps per sampling interval.
  int substeps() const
  {
    return static_cast<int>(std::lround(obs_dt / dt));
  }

  void validate() const
  {
    require(dt > 0.0 && std::isfinite(dt), "integration step must be positive");
    require(obs_dt > 0.0 && std::isfinite(obs_dt),
            "sampling interval must be positive");
    const double ratio = obs_dt / dt;
    require(std::lround(ratio) >= 1 &&
              std::abs(ratio - std::round(ratio)) < 1e-9 * ratio,
            "obs_dt/dt must be a positive integer");
    if (const auto* l96 = std::get_if<Lorenz96>(&kind))
      require(l96->n >= 4, "Lorenz96 needs n >= 4");
    if (const auto* lin = std::get_if<LinearSystem>(&kind))
      require(lin->a.rows() == lin->a.cols() && lin->a.rows() > 0,
              "linear system matrix must be square");
  }

  std::string describe() const
  {
    std::ostringstream os;
    os.precision(17);
    std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Lorenz63>)
          os << "lorenz63 sigma=" << s.sigma << " rho=" << s.rho
             << " beta=" << s.beta;
        else if constexpr (std::is_same_v<T, Lorenz96>)
          os << "lorenz96 n=" << s.n << " forcing=" << s.forcing;
        else if constexpr (std::is_same_v<T, Hamiltonian16>)
          os << "hamiltonian16";
        else
          os << "linear n=" << s.a.rows();
      },
      kind);
    os << " dt=" << dt << " obs_dt=" << obs_dt;
    return os.str();
  }
};

//! Writes f(x) into out. Both spans have the system dimension.
inline void vector_field(const SystemSpec& spec,
                         std::span<const double> x,
                         std::span<double> out)
{
  std::visit(
    [&](const auto& s) {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, Lorenz63>) {
        out[0] = s.sigma * (x[1] - x[0]);
        out[1] = x[0] * (s.rho - x[2]) - x[1];
        out[2] = x[0] * x[1] - s.beta * x[2];
      } else if constexpr (std::is_same_v<T, Lorenz96>) {
        const int n = s.n;
        for (int i = 0; i < n; ++i) {
          const double xp1 = x[(i + 1) % n];
          const double xm1 = x[(i + n - 1) % n];
          const double xm2 = x[(i + n - 2) % n];
          out[i] = (xp1 - xm2) * xm1 - x[i] + s.forcing;
        }
      } else if constexpr (std::is_same_v<T, Hamiltonian16>) {
        // q_k = x[2k], p_k = x[2k+1]
        for (int k = 0; k < 8; ++k) {
          const double q = x[2 * k];
          double coupling = 1.0;
          if (k > 0)
            coupling += x[2 * k - 2] * x[2 * k - 2];
          if (k < 7)
            coupling += x[2 * k + 2] * x[2 * k + 2];
          out[2 * k] = x[2 * k + 1];
          out[2 * k + 1] = -q * coupling;
        }
      } else {
        const auto n = s.a.rows();
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
        Eigen::Map<Eigen::VectorXd> ov(out.data(), n);
        ov.noalias() = s.a * xv;
      }
    },
    spec.kind);
}

//! Scratch buffers for allocation-free RK4 stepping.
class Rk4Workspace
{
public:
  explicit Rk4Workspace(int n)
    : k1_(n), k2_(n), k3_(n), k4_(n), tmp_(n)
  {}

  //! Advances x in place by one classical Runge-Kutta step of size h.
  void step(const SystemSpec& spec, std::span<double> x, double h)
  {
    const std::size_t n = x.size();
    vector_field(spec, x, k1_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = x[i] + 0.5 * h * k1_[i];
    vector_field(spec, tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = x[i] + 0.5 * h * k2_[i];
    vector_field(spec, tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = x[i] + h * k3_[i];
    vector_field(spec, tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      x[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }

  //! Advances x by one sampling interval (spec.substeps() steps of spec.dt).
  void advance(const SystemSpec& spec, std::span<double> x)
  {
    const int steps = spec.substeps();
    for (int s = 0; s < steps; ++s)
      step(spec, x, spec.dt);
    for (double v : x)
      if (!std::isfinite(v))
        throw Error(ErrorKind::numerical_blowup,
                    "non-finite state while integrating " + spec.describe());
  }

private:
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

inline Vector rk4_step(const SystemSpec& spec, const Vector& state, double dt)
{
  require(dt > 0.0, "rk4_step: dt must be positive");
  require(state.size() == spec.dimension(),
          "rk4_step: state dimension does not match the system");
  Vector x = state;
  Rk4Workspace ws(spec.dimension());
  ws.step(spec, std::span<double>(x.data(), x.size()), dt);
  if (!x.allFinite())
    throw Error(ErrorKind::numerical_blowup, "rk4_step produced non-finite state");
  return x;
}

struct Trajectory
{
  RowMatrix states; // n_samples x dimension
  double t0 = 0.0;
  double obs_dt = 0.0;

  Eigen::Index size() const { return states.rows(); }
};

//! Samples the orbit of x0 every spec.obs_dt; the first row is x0.
inline Trajectory integrate(const SystemSpec& spec,
                            const Vector& x0,
                            Eigen::Index n_samples,
                            double t0 = 0.0)
{
  spec.validate();
  require(n_samples >= 1, "integrate: n_samples must be >= 1");
  require(x0.size() == spec.dimension(),
          "integrate: initial state dimension does not match the system");
  Trajectory traj;
  traj.t0 = t0;
  traj.obs_dt = spec.obs_dt;
  traj.states.resize(n_samples, x0.size());
  Vector x = x0;
  Rk4Workspace ws(spec.dimension());
  for (Eigen::Index t = 0; t < n_samples; ++t) {
    traj.states.row(t) = x.transpose();
    if (t + 1 < n_samples)
      ws.advance(spec, std::span<double>(x.data(), x.size()));
  }
  return traj;
}

//! Integrates x forward by n sampling intervals in place.
inline void advance(const SystemSpec& spec, Vector& x, Eigen::Index n)
{
  Rk4Workspace ws(spec.dimension());
  for (Eigen::Index t = 0; t < n; ++t)
    ws.advance(spec, std::span<double>(x.data(), x.size()));
}

// Default configurations used by the benchmark experiments.

inline SystemSpec lorenz63_spec(double obs_dt = 0.1)
{
  return SystemSpec{ Lorenz63{}, obs_dt / 8.0, obs_dt };
}

inline SystemSpec lorenz96_spec(int n, double forcing, double obs_dt)
{
  // 5D runs at the sampling interval 1/64; the 40D ring sub-steps by 4.
  const double dt = n <= 5 ? obs_dt : obs_dt / 4.0;
  return SystemSpec{ Lorenz96{ n, forcing }, dt, obs_dt };
}

inline SystemSpec hamiltonian16_spec(double obs_dt = 0.1)
{
  return SystemSpec{ Hamiltonian16{}, obs_dt / 8.0, obs_dt };
}

} // namespace kaf
