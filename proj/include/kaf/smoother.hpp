#pragma once

#include "kaf/embedding.hpp"
#include "kaf/error.hpp"
#include "kaf/estimators/eigenbasis.hpp"
#include "kaf/estimators/nystrom.hpp"
#include "kaf/kernel/markov.hpp"
#include "kaf/types.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <vector>

namespace kaf {

//! Denoiser for a scalar series: estimates the clean value at position k
//! (1-based) of a window of m_s noisy observations.
struct SmootherModel
{
  int m_s = 0;
  int k = 0;
  int L = 0;
  NystromEstimator estimator;
};

//! Output of a smoother on a series of length T. estimates[t] is the clean
//! estimate at 0-based series index first + t; the covered range is
//! [k, T - (m_s - k)] in 1-based indices.
struct DenoisedSequence
{
  Vector estimates;
  Eigen::Index first = 0;
  std::vector<char> unsupported; // windows without kernel support
  Eigen::Index n_unsupported = 0;

  Eigen::Index first_index_1based() const { return first + 1; }
  Eigen::Index last_index_1based() const { return first + estimates.size(); }
};

inline RowMatrix series_windows(const Vector& series, int m_s)
{
  RowMatrix s(series.size(), 1);
  s.col(0) = series;
  return delay_embed(s, DelayEmbedding{ m_s, 1 });
}

//! Smoothers for several target positions sharing one kernel and eigenbasis,
//! fitted on precomputed noisy windows (one window of length m_s per row).
inline std::vector<SmootherModel> fit_smoothers_on_windows(const RowMatrix& windows,
                                                           const std::vector<int>& ks, int L,
                                                           const KernelParams& kernel,
                                                           ProjectionMeasure measure = ProjectionMeasure::stationary,
                                                           const LanczosOptions& lanczos = {})
{
  const int m_s = static_cast<int>(windows.cols());
  require(m_s >= 1, "fit_smoother: m_s must be >= 1");
  require(!ks.empty(), "fit_smoother: no target positions");
  for (int k : ks)
    require(k >= 1 && k <= m_s, "fit_smoother: k must lie in [1, m_s]");
  require(windows.rows() >= 2, "fit_smoother: need at least two windows");

  KernelParams kp = kernel;
  kp.knn = std::min<int>(kp.knn, static_cast<int>(windows.rows()));
  auto op = std::make_shared<const MarkovOperator>(build_markov(windows, kp));
  auto basis = std::make_shared<const EigenBasis>(eigendecompose(*op, L, measure, lanczos));

  std::vector<SmootherModel> models;
  for (int k : ks) {
    RowMatrix response = windows.col(k - 1);
    models.push_back(SmootherModel{ m_s, k, L, fit_nystrom(op, basis, response, L) });
  }
  return models;
}

//! Smoothers for several target positions trained on all windows of one
//! noisy series.
inline std::vector<SmootherModel> fit_smoothers(const Vector& noisy_series, int m_s,
                                                const std::vector<int>& ks, int L,
                                                const KernelParams& kernel,
                                                ProjectionMeasure measure = ProjectionMeasure::stationary,
                                                const LanczosOptions& lanczos = {})
{
  require(m_s >= 1, "fit_smoother: m_s must be >= 1");
  require(noisy_series.size() >= m_s + 1, "fit_smoother: series too short");
  return fit_smoothers_on_windows(series_windows(noisy_series, m_s), ks, L, kernel, measure,
                                  lanczos);
}

inline SmootherModel fit_smoother(const Vector& noisy_series, int m_s, int k, int L,
                                  const KernelParams& kernel,
                                  ProjectionMeasure measure = ProjectionMeasure::stationary,
                                  const LanczosOptions& lanczos = {})
{
  return fit_smoothers(noisy_series, m_s, { k }, L, kernel, measure, lanczos).front();
}

//! Kernel extension rows of every window of `noisy`; shared by models fitted
//! on the same operator.
struct WindowRows
{
  SparseRows rows;
  std::vector<char> unsupported;
};

inline WindowRows window_rows(const SmootherModel& model, const Vector& noisy)
{
  require(noisy.size() >= model.m_s, "denoise_sequence: sequence shorter than the window");
  WindowRows w;
  w.rows = extend_rows(*model.estimator.op, series_windows(noisy, model.m_s), &w.unsupported);
  return w;
}

inline DenoisedSequence denoise_sequence(const SmootherModel& model, const WindowRows& rows)
{
  DenoisedSequence out;
  const RowMatrix pred = predict_nystrom(model.estimator, rows.rows);
  out.estimates = pred.col(0);
  out.first = model.k - 1;
  out.unsupported = rows.unsupported;
  for (Eigen::Index t = 0; t < out.estimates.size(); ++t)
    if (out.unsupported[static_cast<std::size_t>(t)]) {
      out.estimates[t] = std::numeric_limits<double>::quiet_NaN();
      ++out.n_unsupported;
    }
  return out;
}

inline DenoisedSequence denoise_sequence(const SmootherModel& model, const Vector& noisy)
{
  return denoise_sequence(model, window_rows(model, noisy));
}

//! Denoised estimates for arbitrary windows (rows of length m_s), processed
//! in blocks to bound memory. Windows without kernel support give NaN.
inline Vector denoise_windows(const SmootherModel& model, const RowMatrix& windows,
                              Eigen::Index block = 20000)
{
  require(windows.cols() == model.m_s, "denoise_windows: window length mismatch");
  Vector out(windows.rows());
  for (Eigen::Index b = 0; b < windows.rows(); b += block) {
    const Eigen::Index n = std::min(block, windows.rows() - b);
    std::vector<char> unsupported;
    const SparseRows ext = extend_rows(*model.estimator.op, windows.middleRows(b, n), &unsupported);
    out.segment(b, n) = predict_nystrom(model.estimator, ext).col(0);
    for (Eigen::Index t = 0; t < n; ++t)
      if (unsupported[static_cast<std::size_t>(t)])
        out[b + t] = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

//! RMSE against the clean series over the covered range, skipping windows
//! flagged as unsupported.
inline double smoother_rmse(const DenoisedSequence& d, const Vector& truth)
{
  require(d.first >= 0 && d.first + d.estimates.size() <= truth.size(),
          "smoother_rmse: estimates do not fit inside the truth series");
  double s = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index t = 0; t < d.estimates.size(); ++t) {
    if (!d.unsupported.empty() && d.unsupported[static_cast<std::size_t>(t)])
      continue;
    const double e = d.estimates[t] - truth[d.first + t];
    s += e * e;
    ++n;
  }
  require(n >= 1, "smoother_rmse: empty range");
  return std::sqrt(s / double(n));
}

//! RMSE of `estimates` against truth[first .. first + size) .
inline double smoother_rmse(const Vector& estimates, const Vector& truth, Eigen::Index first)
{
  DenoisedSequence d;
  d.estimates = estimates;
  d.first = first;
  return smoother_rmse(d, truth);
}

} // namespace kaf
