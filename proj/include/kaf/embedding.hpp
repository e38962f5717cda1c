#pragma once

#include "kaf/error.hpp"
#include "kaf/types.hpp"

#include <algorithm>
#include <vector>

namespace kaf {

struct DelayEmbedding
{
  int m = 1;
  int stride = 1;

  Eigen::Index span() const { return Eigen::Index(m - 1) * stride; }

  void validate() const
  {
    require(m >= 1, "delay embedding: m must be >= 1");
    require(stride >= 1, "delay embedding: stride must be >= 1");
  }
};

//! Row j holds (x_j, x_{j+stride}, ..., x_{j+(m-1)stride}), oldest first, so
//! the last block is the present sample.
inline RowMatrix delay_embed(const RowMatrix& series, const DelayEmbedding& emb)
{
  emb.validate();
  const Eigen::Index T = series.rows();
  const Eigen::Index p = series.cols();
  require(T >= emb.span() + 1, "delay_embed: series shorter than the window");
  const Eigen::Index rows = T - emb.span();
  RowMatrix out(rows, emb.m * p);
  for (Eigen::Index j = 0; j < rows; ++j)
    for (int l = 0; l < emb.m; ++l)
      out.block(j, l * p, 1, p) = series.row(j + Eigen::Index(l) * emb.stride);
  return out;
}

struct TrainingPairs
{
  RowMatrix covariates;      // N x (m * obs_dim)
  RowMatrix responses;       // N x (n_leads * obs_dim), lead-major blocks
  std::vector<int> lead_times;
  std::vector<Eigen::Index> end_index; // time index of the last lag per row
};

//! Aligns delay windows with responses X_{t+lead}, t being the time of the
//! last lag. Windows whose largest lead runs past the series are dropped.
inline TrainingPairs build_training_pairs(const RowMatrix& series,
                                          const DelayEmbedding& emb,
                                          const std::vector<int>& lead_times)
{
  emb.validate();
  require(!lead_times.empty(), "build_training_pairs: no lead times");
  for (int l : lead_times)
    require(l >= 0, "build_training_pairs: lead times must be >= 0");
  const int max_lead = *std::max_element(lead_times.begin(), lead_times.end());
  const Eigen::Index T = series.rows();
  const Eigen::Index p = series.cols();
  const Eigen::Index rows = T - emb.span() - max_lead;
  require(rows >= 1, "build_training_pairs: series too short for the leads");

  TrainingPairs out;
  out.lead_times = lead_times;
  out.covariates.resize(rows, emb.m * p);
  out.responses.resize(rows, Eigen::Index(lead_times.size()) * p);
  out.end_index.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (int l = 0; l < emb.m; ++l)
      out.covariates.block(j, l * p, 1, p) =
        series.row(j + Eigen::Index(l) * emb.stride);
    const Eigen::Index t = j + emb.span();
    out.end_index[static_cast<std::size_t>(j)] = t;
    for (std::size_t k = 0; k < lead_times.size(); ++k)
      out.responses.block(j, Eigen::Index(k) * p, 1, p) =
        series.row(t + lead_times[k]);
  }
  return out;
}

//! Embeds each trajectory separately and stacks the results, so no window
//! crosses a trajectory boundary.
inline TrainingPairs build_training_pairs(const std::vector<RowMatrix>& segments,
                                          const DelayEmbedding& emb,
                                          const std::vector<int>& lead_times)
{
  require(!segments.empty(), "build_training_pairs: no segments");
  std::vector<TrainingPairs> parts;
  parts.reserve(segments.size());
  Eigen::Index rows = 0;
  for (const auto& s : segments) {
    parts.push_back(build_training_pairs(s, emb, lead_times));
    rows += parts.back().covariates.rows();
  }
  TrainingPairs out;
  out.lead_times = lead_times;
  out.covariates.resize(rows, parts.front().covariates.cols());
  out.responses.resize(rows, parts.front().responses.cols());
  Eigen::Index at = 0;
  for (auto& part : parts) {
    const Eigen::Index n = part.covariates.rows();
    out.covariates.middleRows(at, n) = part.covariates;
    out.responses.middleRows(at, n) = part.responses;
    out.end_index.insert(out.end_index.end(), part.end_index.begin(),
                         part.end_index.end());
    at += n;
  }
  return out;
}

} // namespace kaf
