#pragma once

#include "kaf/error.hpp"
#include "kaf/parallel.hpp"
#include "kaf/types.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace kaf {

//! Squared Euclidean distance between row i of a and row j of b.
inline double squared_distance(const RowMatrix& a, Eigen::Index i,
                               const RowMatrix& b, Eigen::Index j)
{
  const double* x = a.row(i).data();
  const double* y = b.row(j).data();
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double t = x[k] - y[k];
    s += t * t;
  }
  return s;
}

//! Calls visit(q, approx) for every query row q, where approx[j] is a
//! GEMM-based approximation of the squared distance to training row j. The
//! approximation is only used to shortlist candidates; callers recompute
//! exact distances for the candidates they keep.
template <typename Visit>
void for_each_distance_row(const RowMatrix& queries, const RowMatrix& points, Visit&& visit)
{
  constexpr Eigen::Index block = 128;
  const Eigen::Index M = queries.rows();
  const Eigen::Index N = points.rows();
  const Vector pn = points.rowwise().squaredNorm();
  const Eigen::Index n_blocks = (M + block - 1) / block;
  parallel_for(n_blocks, [&](std::ptrdiff_t b) {
    const Eigen::Index start = b * block;
    const Eigen::Index rows = std::min(block, M - start);
    const auto qb = queries.middleRows(start, rows);
    RowMatrix dist(rows, N);
    dist.noalias() = -2.0 * qb * points.transpose();
    const Vector qn = qb.rowwise().squaredNorm();
    for (Eigen::Index r = 0; r < rows; ++r) {
      dist.row(r).array() += pn.transpose().array() + qn[r];
      visit(start + r, dist.row(r).data());
    }
  });
}

//! Indices of the k nearest training rows to query q, sorted by exact
//! squared distance (ties broken by index), together with those distances.
//! `scratch` must hold N entries.
inline void nearest_from_row(const RowMatrix& queries, Eigen::Index q,
                             const RowMatrix& points, const double* approx,
                             int k, std::vector<int>& scratch,
                             int* idx_out, double* d2_out)
{
  const auto N = static_cast<int>(points.rows());
  const int shortlist = std::min(N, k + 8);
  scratch.resize(static_cast<std::size_t>(N));
  std::iota(scratch.begin(), scratch.end(), 0);
  auto by_approx = [&](int a, int b) {
    return approx[a] < approx[b] || (approx[a] == approx[b] && a < b);
  };
  if (shortlist < N)
    std::nth_element(scratch.begin(), scratch.begin() + shortlist, scratch.end(),
                     by_approx);
  std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(shortlist));
  for (int c = 0; c < shortlist; ++c)
    cand[c] = { squared_distance(queries, q, points, scratch[c]), scratch[c] };
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
  for (int c = 0; c < k; ++c) {
    idx_out[c] = cand[c].second;
    d2_out[c] = cand[c].first;
  }
}

//! k-nearest-neighbor lists (self included) plus the symmetrized support.
struct NeighborGraph
{
  Eigen::Index n = 0;
  int knn = 0;
  std::vector<int> idx;     // n * knn, row-major, nearest first
  std::vector<double> dist2; // n * knn
  Vector radius2;            // squared distance to the knn-th neighbor

  // Union-symmetrized support in CSR form, columns ascending.
  std::vector<Eigen::Index> row_ptr;
  std::vector<int> col;
  std::vector<double> sym_dist2;

  Eigen::Index nnz() const { return static_cast<Eigen::Index>(col.size()); }
};

inline NeighborGraph knn_graph(const RowMatrix& points, int knn)
{
  const Eigen::Index N = points.rows();
  require(N >= 1, "knn_graph: empty point set");
  require(knn >= 1 && knn <= N,
          "knn_graph: knn must lie in [1, N] (knn = N gives the dense graph)");
  require(points.allFinite(), "knn_graph: non-finite coordinates");

  NeighborGraph g;
  g.n = N;
  g.knn = knn;
  g.idx.resize(static_cast<std::size_t>(N * knn));
  g.dist2.resize(static_cast<std::size_t>(N * knn));
  g.radius2.resize(N);

  for_each_distance_row(points, points, [&](Eigen::Index q, const double* approx) {
    thread_local std::vector<int> scratch;
    nearest_from_row(points, q, points, approx, knn, scratch,
                     g.idx.data() + q * knn, g.dist2.data() + q * knn);
    g.radius2[q] = g.dist2[static_cast<std::size_t>(q * knn + knn - 1)];
  });

  // Union symmetrization.
  std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i)
    for (int c = 0; c < knn; ++c) {
      const int j = g.idx[static_cast<std::size_t>(i * knn + c)];
      const double d2 = g.dist2[static_cast<std::size_t>(i * knn + c)];
      adj[static_cast<std::size_t>(i)].push_back({ j, d2 });
      adj[static_cast<std::size_t>(j)].push_back({ static_cast<int>(i), d2 });
    }
  g.row_ptr.assign(static_cast<std::size_t>(N + 1), 0);
  for (Eigen::Index i = 0; i < N; ++i) {
    auto& a = adj[static_cast<std::size_t>(i)];
    std::sort(a.begin(), a.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    a.erase(std::unique(a.begin(), a.end(),
                        [](const auto& x, const auto& y) { return x.first == y.first; }),
            a.end());
    g.row_ptr[static_cast<std::size_t>(i + 1)] =
      g.row_ptr[static_cast<std::size_t>(i)] + static_cast<Eigen::Index>(a.size());
  }
  g.col.resize(static_cast<std::size_t>(g.row_ptr.back()));
  g.sym_dist2.resize(g.col.size());
  for (Eigen::Index i = 0; i < N; ++i) {
    auto& a = adj[static_cast<std::size_t>(i)];
    auto at = static_cast<std::size_t>(g.row_ptr[static_cast<std::size_t>(i)]);
    for (const auto& [j, d2] : a) {
      g.col[at] = j;
      g.sym_dist2[at] = d2;
      ++at;
    }
    std::vector<std::pair<int, double>>().swap(a);
  }
  return g;
}

//! Support of a query point: its knn nearest training points together with
//! every training point j that would count the query among its own knn
//! nearest neighbors (squared distance within radius2[j]).
struct QuerySupport
{
  std::vector<int> nearest;        // knn nearest, closest first
  std::vector<double> nearest_d2;
  std::vector<int> col;            // full support, ascending
  std::vector<double> d2;
};

template <typename Visit>
void for_each_query_support(const RowMatrix& queries, const RowMatrix& points,
                            int knn, const Vector& radius2, Visit&& visit)
{
  require(queries.cols() == points.cols(),
          "query dimension does not match the training points");
  require(queries.allFinite(), "non-finite query coordinates");
  const auto N = static_cast<int>(points.rows());
  const Vector pn = points.rowwise().squaredNorm();
  for_each_distance_row(queries, points, [&](Eigen::Index q, const double* approx) {
    thread_local std::vector<int> scratch;
    const double qn = queries.row(q).squaredNorm();
    QuerySupport s;
    s.nearest.resize(static_cast<std::size_t>(knn));
    s.nearest_d2.resize(static_cast<std::size_t>(knn));
    nearest_from_row(queries, q, points, approx, knn, scratch, s.nearest.data(),
                     s.nearest_d2.data());
    std::vector<std::pair<int, double>> sup;
    sup.reserve(static_cast<std::size_t>(2 * knn));
    for (int c = 0; c < knn; ++c)
      sup.push_back({ s.nearest[c], s.nearest_d2[c] });
    for (int j = 0; j < N; ++j) {
      const double r2 = radius2[j];
      // Slack covers the cancellation error of the GEMM expansion.
      if (approx[j] <= r2 + 1e-10 * (pn[j] + qn) + 1e-300) {
        const double d2 = squared_distance(queries, q, points, j);
        if (d2 <= r2)
          sup.push_back({ j, d2 });
      }
    }
    std::sort(sup.begin(), sup.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    sup.erase(std::unique(sup.begin(), sup.end(),
                          [](const auto& x, const auto& y) { return x.first == y.first; }),
              sup.end());
    s.col.reserve(sup.size());
    s.d2.reserve(sup.size());
    for (const auto& [j, d2] : sup) {
      s.col.push_back(j);
      s.d2.push_back(d2);
    }
    visit(q, s);
  });
}

} // namespace kaf
