#pragma once

#include "kaf/error.hpp"
#include "kaf/io/matrix_io.hpp"
#include "kaf/kernel/bandwidth.hpp"
#include "kaf/kernel/neighbors.hpp"
#include "kaf/parallel.hpp"
#include "kaf/types.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace kaf {

struct KernelParams
{
  //! Bandwidth; 0 selects the slope-maximization auto-tuner.
  double epsilon = 0.0;
  //! Intrinsic dimension; 0 uses the rounded tuner estimate (at least 1).
  //! With a fixed epsilon and no estimate available it falls back to 1.
  double d = 0.0;
  //! Right-normalization exponent; defaults to -d/4.
  std::optional<double> alpha;
  //! Neighbors per point, capped at N. knn = N gives the dense kernel.
  int knn = 128;
  //! Neighbors (besides the point itself) used for the pilot bandwidth.
  int pilot_neighbors = 8;
  //! When positive, rho is this constant instead of the density-based
  //! bandwidth (constant-bandwidth kernel).
  double fixed_rho = 0.0;
};

//! Row-stochastic kernel over training points with everything needed to
//! compute rows for new points.
struct MarkovOperator
{
  RowMatrix points;
  KernelParams params;
  int knn = 0;
  double d = 0.0;
  double alpha = 0.0;
  double epsilon0 = 0.0; // pilot pass bandwidth
  double epsilon = 0.0;
  double d_hat = 0.0;    // tuner dimension estimate (0 when not tuned)

  Vector rho0;    // pilot bandwidth
  Vector q_pilot; // density estimate with rho0
  Vector rho;     // q_pilot^{-1/2} (or the constant)
  Vector q;       // density estimate with rho
  Vector q_alpha; // q^alpha
  Vector row_sum; // row sums of the right-normalized kernel
  Vector radius2; // squared distance to the knn-th neighbor

  SparseRows P;

  Eigen::Index size() const { return points.rows(); }
  bool variable_bandwidth() const { return !(params.fixed_rho > 0.0); }
};

namespace detail {

inline void check_finite_positive(const Vector& v, ErrorKind kind, const char* what)
{
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!(std::isfinite(v[i]) && v[i] > 0.0))
      throw Error(kind, std::string(what) + " is not positive and finite at point " +
                          std::to_string(i));
}

//! sum_j eps^{-d/2} exp(-d2_j / (eps rho_i rho_j)) / rho_i^d
inline double density_sum(const int* col, const double* d2, std::size_t len,
                          double rho_i, const Vector& rho, double eps, double d)
{
  double s = 0.0;
  for (std::size_t e = 0; e < len; ++e)
    s += std::exp(-d2[e] / (eps * rho_i * rho[col[e]]));
  return s * std::pow(eps, -0.5 * d) / std::pow(rho_i, d);
}

} // namespace detail

inline MarkovOperator build_markov(const RowMatrix& points, const KernelParams& params)
{
  const Eigen::Index N = points.rows();
  require(N >= 1, "build_markov: empty point set");
  require(params.epsilon >= 0.0 && params.d >= 0.0 && params.fixed_rho >= 0.0,
          "build_markov: negative parameter");
  require(params.knn >= 2 || N == 1, "build_markov: knn must be >= 2");
  require(params.knn <= N,
          "build_markov: knn exceeds the number of training points");
  require(params.pilot_neighbors >= 1, "build_markov: pilot_neighbors must be >= 1");

  MarkovOperator op;
  op.points = points;
  op.params = params;
  op.knn = params.knn;

  const NeighborGraph g = knn_graph(points, op.knn);
  op.radius2 = g.radius2;

  auto rows = [&](Eigen::Index i) {
    const auto b = static_cast<std::size_t>(g.row_ptr[static_cast<std::size_t>(i)]);
    const auto e = static_cast<std::size_t>(g.row_ptr[static_cast<std::size_t>(i + 1)]);
    return std::pair{ b, e - b };
  };
  auto density = [&](const Vector& rho, double eps, double d) {
    Vector q(N);
    parallel_for(N, [&](std::ptrdiff_t i) {
      const auto [b, len] = rows(i);
      q[i] = detail::density_sum(g.col.data() + b, g.sym_dist2.data() + b, len,
                                 rho[i], rho, eps, d);
    });
    return q;
  };

  if (op.variable_bandwidth()) {
    op.rho0 = pilot_bandwidth(g, std::min(params.pilot_neighbors, op.knn - 1));
    for (Eigen::Index i = 0; i < N; ++i)
      if (!(op.rho0[i] > 0.0))
        throw Error(ErrorKind::degenerate_geometry,
                    "zero pilot bandwidth at point " + std::to_string(i) +
                      " (too many coincident points for the neighbor count)");
    const BandwidthTuning pilot = auto_tune_bandwidth(scaled_distances(g, op.rho0), N);
    op.epsilon0 = pilot.epsilon;
    op.d = params.d > 0.0 ? params.d : std::max(1.0, std::round(pilot.dimension));
    op.q_pilot = density(op.rho0, op.epsilon0, op.d);
    detail::check_finite_positive(op.q_pilot, ErrorKind::degenerate_geometry,
                                  "pilot density");
    op.rho = op.q_pilot.array().rsqrt();
    detail::check_finite_positive(op.rho, ErrorKind::degenerate_geometry, "bandwidth");
  } else {
    op.rho0 = Vector::Constant(N, params.fixed_rho);
    op.rho = op.rho0;
    op.d = params.d;
  }

  if (params.epsilon > 0.0) {
    op.epsilon = params.epsilon;
  } else {
    const BandwidthTuning t = auto_tune_bandwidth(scaled_distances(g, op.rho), N);
    op.epsilon = t.epsilon;
    op.d_hat = t.dimension;
    if (!op.variable_bandwidth() && params.d <= 0.0)
      op.d = std::max(1.0, std::round(t.dimension));
  }
  if (op.d <= 0.0)
    op.d = 1.0;
  if (!op.variable_bandwidth()) {
    op.epsilon0 = op.epsilon;
    op.q_pilot = Vector::Ones(N);
  }
  op.alpha = params.alpha.value_or(-op.d / 4.0);

  op.q = density(op.rho, op.epsilon, op.d);
  detail::check_finite_positive(op.q, ErrorKind::degenerate_geometry, "density");
  op.q_alpha = op.q.array().pow(op.alpha);
  detail::check_finite_positive(op.q_alpha, ErrorKind::numerical, "density normalizer");

  // Right normalization, then row normalization.
  const double scale = std::pow(op.epsilon, -0.5 * op.d);
  std::vector<double> w(g.col.size());
  op.row_sum.resize(N);
  parallel_for(N, [&](std::ptrdiff_t i) {
    const auto [b, len] = rows(i);
    double s = 0.0;
    for (std::size_t e = b; e < b + len; ++e) {
      const int j = g.col[e];
      const double k =
        scale * std::exp(-g.sym_dist2[e] / (op.epsilon * op.rho[i] * op.rho[j]));
      w[e] = k / (op.q_alpha[i] * op.q_alpha[j]);
      s += w[e];
    }
    op.row_sum[i] = s;
  });
  detail::check_finite_positive(op.row_sum, ErrorKind::numerical, "row normalizer");

  op.P.resize(N, N);
  op.P.resizeNonZeros(static_cast<Eigen::Index>(g.col.size()));
  auto* outer = op.P.outerIndexPtr();
  auto* inner = op.P.innerIndexPtr();
  auto* values = op.P.valuePtr();
  for (Eigen::Index i = 0; i <= N; ++i)
    outer[i] = static_cast<SparseRows::StorageIndex>(g.row_ptr[static_cast<std::size_t>(i)]);
  for (std::size_t e = 0; e < g.col.size(); ++e)
    inner[e] = g.col[e];
  parallel_for(N, [&](std::ptrdiff_t i) {
    const auto [b, len] = rows(i);
    for (std::size_t e = b; e < b + len; ++e)
      values[e] = w[e] / op.row_sum[i];
  });
  return op;
}

//! Kernel rows for new points against the training set, normalized exactly
//! as the training rows are. A new point equal to training point i yields
//! row i of P. A point without kernel mass raises an out-of-support error,
//! unless `unsupported` is given: then the point is flagged there and its row
//! is left empty.
inline SparseRows extend_rows(const MarkovOperator& op, const RowMatrix& new_points,
                              std::vector<char>* unsupported = nullptr)
{
  const Eigen::Index M = new_points.rows();
  const Eigen::Index N = op.size();
  SparseRows out(M, N);
  if (M == 0)
    return out;
  require(new_points.cols() == op.points.cols(),
          "extend_rows: new points have the wrong dimension");

  if (unsupported)
    unsupported->assign(static_cast<std::size_t>(M), 0);
  const int k0 = std::min(op.params.pilot_neighbors, op.knn - 1) + 1;
  const double scale = std::pow(op.epsilon, -0.5 * op.d);
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(M));
  std::vector<std::vector<double>> vals(static_cast<std::size_t>(M));

  for_each_query_support(
    new_points, op.points, op.knn, op.radius2, [&](Eigen::Index q, const QuerySupport& s) {
      auto no_mass = [&]() {
        if (unsupported) {
          (*unsupported)[static_cast<std::size_t>(q)] = 1;
          return;
        }
        throw Error(ErrorKind::out_of_support,
                    "new point " + std::to_string(q) +
                      " has no kernel mass against the training set");
      };
      const std::size_t len = s.col.size();
      double rho0 = op.params.fixed_rho;
      double rho = op.params.fixed_rho;
      if (op.variable_bandwidth()) {
        double acc = 0.0;
        for (int c = 0; c < k0; ++c)
          acc += s.nearest_d2[static_cast<std::size_t>(c)];
        rho0 = std::sqrt(acc / k0);
        if (!(rho0 > 0.0)) {
          // Coincident with several training points: fall back to the
          // training bandwidth of the nearest one.
          rho0 = op.rho0[s.nearest.front()];
        }
        const double qp = detail::density_sum(s.col.data(), s.d2.data(), len, rho0,
                                              op.rho0, op.epsilon0, op.d);
        if (!(qp > 0.0) || !std::isfinite(qp))
          return no_mass();
        rho = 1.0 / std::sqrt(qp);
      }
      std::vector<double> w(len);
      double qsum = 0.0;
      for (std::size_t e = 0; e < len; ++e) {
        w[e] = scale * std::exp(-s.d2[e] / (op.epsilon * rho * op.rho[s.col[e]]));
        qsum += w[e];
      }
      const double qx = qsum / std::pow(rho, op.d);
      if (!(qx > 0.0) || !std::isfinite(qx))
        return no_mass();
      const double qx_alpha = std::pow(qx, op.alpha);
      double total = 0.0;
      for (std::size_t e = 0; e < len; ++e) {
        w[e] /= qx_alpha * op.q_alpha[s.col[e]];
        total += w[e];
      }
      if (!(total > 0.0) || !std::isfinite(total))
        return no_mass();
      for (auto& v : w)
        v /= total;
      cols[static_cast<std::size_t>(q)] = s.col;
      vals[static_cast<std::size_t>(q)] = std::move(w);
    });

  Eigen::Index nnz = 0;
  for (const auto& c : cols)
    nnz += static_cast<Eigen::Index>(c.size());
  out.reserve(nnz);
  for (Eigen::Index q = 0; q < M; ++q) {
    out.startVec(q);
    const auto& c = cols[static_cast<std::size_t>(q)];
    const auto& v = vals[static_cast<std::size_t>(q)];
    for (std::size_t e = 0; e < c.size(); ++e)
      out.insertBack(q, c[e]) = v[e];
  }
  out.finalize();
  return out;
}

//! Single-file text serialization: header line, parameter line, normalizer
//! vectors, then the training points and the sparse triplets of P.
inline void save_markov(const std::string& path, const MarkovOperator& op)
{
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw Error(ErrorKind::invalid_input, "cannot open " + path + " for writing");
  using io::format_double;
  os << "# kaf-markov 1\n";
  os << "params knn=" << op.knn << " pilot_neighbors=" << op.params.pilot_neighbors
     << " fixed_rho=" << format_double(op.params.fixed_rho)
     << " d=" << format_double(op.d) << " alpha=" << format_double(op.alpha)
     << " epsilon0=" << format_double(op.epsilon0)
     << " epsilon=" << format_double(op.epsilon) << " d_hat=" << format_double(op.d_hat)
     << " req_epsilon=" << format_double(op.params.epsilon)
     << " req_d=" << format_double(op.params.d)
     << " req_alpha=" << (op.params.alpha ? format_double(*op.params.alpha) : "none")
     << '\n';
  const Eigen::Index N = op.size();
  RowMatrix norm(N, 7);
  norm.col(0) = op.rho0;
  norm.col(1) = op.q_pilot;
  norm.col(2) = op.rho;
  norm.col(3) = op.q;
  norm.col(4) = op.q_alpha;
  norm.col(5) = op.row_sum;
  norm.col(6) = op.radius2;
  io::write_matrix(os, norm, "normalizers rho0 q_pilot rho q q_alpha row_sum radius2");
  io::write_matrix(os, op.points, "points");
  RowMatrix trip(op.P.nonZeros(), 3);
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (SparseRows::InnerIterator it(op.P, i); it; ++it, ++at) {
      trip(at, 0) = double(i);
      trip(at, 1) = double(it.col());
      trip(at, 2) = it.value();
    }
  io::write_matrix(os, trip, "triplets");
}

inline MarkovOperator load_markov(const std::string& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error(ErrorKind::invalid_input, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  require(line == "# kaf-markov 1", "load_markov: unsupported header");
  std::getline(is, line);
  std::istringstream ps(line);
  std::string tag;
  ps >> tag;
  require(tag == "params", "load_markov: missing params line");
  MarkovOperator op;
  std::string kv;
  while (ps >> kv) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "load_markov: bad parameter " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    if (key == "req_alpha") {
      if (val != "none")
        op.params.alpha = std::stod(val);
      continue;
    }
    const double v = std::stod(val);
    if (key == "knn")
      op.knn = op.params.knn = static_cast<int>(v);
    else if (key == "pilot_neighbors")
      op.params.pilot_neighbors = static_cast<int>(v);
    else if (key == "fixed_rho")
      op.params.fixed_rho = v;
    else if (key == "d")
      op.d = v;
    else if (key == "alpha")
      op.alpha = v;
    else if (key == "epsilon0")
      op.epsilon0 = v;
    else if (key == "epsilon")
      op.epsilon = v;
    else if (key == "d_hat")
      op.d_hat = v;
    else if (key == "req_epsilon")
      op.params.epsilon = v;
    else if (key == "req_d")
      op.params.d = v;
  }
  const RowMatrix norm = io::read_matrix(is).data;
  require(norm.cols() == 7, "load_markov: bad normalizer block");
  op.rho0 = norm.col(0);
  op.q_pilot = norm.col(1);
  op.rho = norm.col(2);
  op.q = norm.col(3);
  op.q_alpha = norm.col(4);
  op.row_sum = norm.col(5);
  op.radius2 = norm.col(6);
  op.points = io::read_matrix(is).data;
  const RowMatrix trip = io::read_matrix(is).data;
  const Eigen::Index N = op.points.rows();
  require(norm.rows() == N && trip.cols() == 3, "load_markov: inconsistent blocks");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(trip.rows()));
  for (Eigen::Index k = 0; k < trip.rows(); ++k)
    t.emplace_back(static_cast<int>(trip(k, 0)), static_cast<int>(trip(k, 1)), trip(k, 2));
  op.P.resize(N, N);
  op.P.setFromTriplets(t.begin(), t.end());
  return op;
}

} // namespace kaf
