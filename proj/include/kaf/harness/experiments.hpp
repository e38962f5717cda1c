#pragma once

#include "kaf/baselines/enkf.hpp"
#include "kaf/dynamics/noise.hpp"
#include "kaf/dynamics/sampling.hpp"
#include "kaf/dynamics/system.hpp"
#include "kaf/estimators/eigenbasis.hpp"
#include "kaf/estimators/metrics.hpp"
#include "kaf/estimators/nystrom.hpp"
#include "kaf/estimators/smoothing.hpp"
#include "kaf/harness/config.hpp"
#include "kaf/kernel/markov.hpp"
#include "kaf/parallel.hpp"
#include "kaf/smoother.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace kaf::harness {

//! Matrix written to the bundle's predictions directory.
struct NamedMatrix
{
  std::string name;
  std::vector<std::string> columns;
  RowMatrix data;
};

struct RunOutput
{
  json results;
  std::vector<NamedMatrix> predictions;
};

using Logger = std::function<void(const std::string&)>;

namespace detail {

//! Random-stream tags; each stage of an experiment draws from its own stream.
enum StreamTag : std::uint64_t
{
  stream_train = 0x100,
  stream_test = 0x200,
  stream_oracle = 0x300,
  stream_enkf = 0x500,
};

inline Rng stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t sub = 0)
{
  return split_stream(split_stream(seed, tag)(), sub);
}

inline void note(const Logger& log, const std::string& msg)
{
  if (log)
    log(msg);
}

inline json vec_json(const Vector& v)
{
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v[i]);
  return a;
}

inline json lead_json(const std::vector<int>& leads, double obs_dt, json& times)
{
  json a = json::array();
  times = json::array();
  for (int l : leads) {
    a.push_back(l);
    times.push_back(l * obs_dt);
  }
  return a;
}

inline json operator_json(const MarkovOperator& op)
{
  return json{ { "N", op.size() },
               { "knn", op.knn },
               { "nnz", op.P.nonZeros() },
               { "epsilon", op.epsilon },
               { "epsilon0", op.epsilon0 },
               { "d", op.d },
               { "d_hat", op.d_hat },
               { "alpha", op.alpha } };
}

inline json basis_json(const EigenBasis& b)
{
  return json{ { "measure", to_string(b.measure) },
               { "count", b.count() },
               { "lambda_0", b.eigenvalues[0] },
               { "lambda_L", b.eigenvalues[b.eigenvalues.size() - 1] },
               { "max_residual", b.residuals.maxCoeff() },
               { "restarts", b.restarts },
               { "matvecs", b.matvecs } };
}

inline KernelParams capped(KernelParams k, Eigen::Index n)
{
  k.knn = static_cast<int>(std::min<Eigen::Index>(k.knn, n));
  return k;
}

//! Integrates each row of x0 for `steps` sampling intervals and records the
//! given components at every sample: row i holds the (steps + 1) samples of
//! member i, time-major, |components| values each.
inline RowMatrix simulate_members(const SystemSpec& spec, const RowMatrix& x0, int steps,
                                  const std::vector<int>& components)
{
  const int dim = spec.dimension();
  const auto r = static_cast<Eigen::Index>(components.size());
  RowMatrix out(x0.rows(), (steps + 1) * r);
  parallel_for(x0.rows(), [&](std::ptrdiff_t i) {
    Rk4Workspace ws(dim);
    Vector x = x0.row(i).transpose();
    for (int t = 0; t <= steps; ++t) {
      if (t > 0)
        ws.advance(spec, std::span<double>(x.data(), x.size()));
      for (Eigen::Index c = 0; c < r; ++c)
        out(i, t * r + c) = x[components[static_cast<std::size_t>(c)]];
    }
  });
  return out;
}

inline RowMatrix standard_gaussian(Eigen::Index n, int dim, Rng& rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c)
      x(i, c) = normal(rng);
  return x;
}

//! Rows of `m` whose flag is clear.
inline RowMatrix keep_rows(const RowMatrix& m, const std::vector<char>& drop)
{
  Eigen::Index n = 0;
  for (char d : drop)
    n += d ? 0 : 1;
  RowMatrix out(n, m.cols());
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (!drop[static_cast<std::size_t>(i)])
      out.row(j++) = m.row(i);
  return out;
}

inline Eigen::Index count_flags(const std::vector<char>& f)
{
  Eigen::Index n = 0;
  for (char c : f)
    n += c ? 1 : 0;
  return n;
}

//! Fits the selected estimators on (covariates, responses) and returns the
//! predictions at the query points, keyed by estimator name.
struct EstimatorPredictions
{
  std::vector<std::string> names;
  std::vector<RowMatrix> values;
  std::vector<char> unsupported;
  json diagnostics;
};

inline EstimatorPredictions fit_and_predict(const RowMatrix& covariates, const RowMatrix& responses,
                                            const RowMatrix& queries, const EstimatorSet& est,
                                            const KernelParams& kernel, const Logger& log,
                                            const std::string& label)
{
  EstimatorPredictions out;
  note(log, label + ": kernel on " + std::to_string(covariates.rows()) + " points of dimension " +
              std::to_string(covariates.cols()));
  auto op = std::make_shared<const MarkovOperator>(
    build_markov(covariates, capped(kernel, covariates.rows())));
  out.diagnostics["kernel"] = operator_json(*op);
  const SparseRows ext = extend_rows(*op, queries, &out.unsupported);
  if (est.nystrom) {
    note(log, label + ": eigenbasis L=" + std::to_string(est.nystrom->L));
    auto basis = std::make_shared<const EigenBasis>(
      eigendecompose(*op, est.nystrom->L, est.nystrom->measure));
    out.diagnostics["basis"] = basis_json(*basis);
    const NystromEstimator ny = fit_nystrom(op, basis, responses, est.nystrom->L);
    out.diagnostics["nystrom_terms"] = ny.terms;
    out.names.push_back("nystrom");
    out.values.push_back(predict_nystrom(ny, ext));
  }
  if (est.smoothing) {
    out.names.push_back("smoothing");
    out.values.push_back(predict_kernel_smoothing(fit_kernel_smoothing(op, responses), ext));
  }
  out.diagnostics["unsupported_queries"] = count_flags(out.unsupported);
  return out;
}

inline RowMatrix draw_initial(const ExperimentConfig& cfg, const std::string& initial,
                              Eigen::Index n, Rng& rng)
{
  if (initial == "gaussian")
    return standard_gaussian(n, cfg.system.dimension(), rng);
  return sample_invariant(cfg.system, n, cfg.spinup, rng);
}

inline RowMatrix lead_columns(const RowMatrix& samples, const std::vector<int>& leads,
                              Eigen::Index r, Eigen::Index offset)
{
  RowMatrix out(samples.rows(), static_cast<Eigen::Index>(leads.size()) * r);
  for (std::size_t l = 0; l < leads.size(); ++l)
    out.middleCols(static_cast<Eigen::Index>(l) * r, r) =
      samples.middleCols((offset + leads[l]) * r, r);
  return out;
}

} // namespace detail

inline RunOutput run_conditional_expectation(const ExperimentConfig& cfg,
                                             const ConditionalExpectationConfig& c,
                                             const Logger& log)
{
  using namespace detail;
  const std::vector<int> leads = c.leads.leads();
  const auto r = static_cast<Eigen::Index>(c.observed.size());
  RunOutput out;
  json& res = out.results;
  json times;
  res["leads"] = lead_json(leads, cfg.system.obs_dt, times);
  res["lead_times"] = times;
  res["curves"] = json::array();

  Rng test_rng = stream(cfg.seed, stream_test);
  note(log, "drawing " + std::to_string(c.N_out) + " verification initial conditions");
  const RowMatrix x0_out = draw_initial(cfg, c.initial, c.N_out, test_rng);
  RowMatrix out_cov(c.N_out, r);
  for (Eigen::Index o = 0; o < r; ++o)
    out_cov.col(o) = x0_out.col(c.observed[static_cast<std::size_t>(o)]);

  note(log, "Monte-Carlo oracle: " + std::to_string(c.n_mc) + " samples per point");
  const std::uint64_t oracle_seed = split_stream(cfg.seed, stream_oracle)();
  RowMatrix oracle(c.N_out, static_cast<Eigen::Index>(leads.size()) * r);
  Vector max_se(c.N_out);
  McRequest req;
  req.observed = c.observed;
  req.response = c.observed;
  req.leads = leads;
  req.n_mc = c.n_mc;
  parallel_for(c.N_out, [&](std::ptrdiff_t j) {
    Rng rng = split_stream(oracle_seed, static_cast<std::uint64_t>(j));
    const McEstimate mc =
      mc_conditional_expectation(cfg.system, out_cov.row(j).transpose(), req, rng);
    for (Eigen::Index l = 0; l < mc.mean.rows(); ++l)
      oracle.block(j, l * r, 1, r) = mc.mean.row(l);
    max_se[j] = mc.std_error.maxCoeff();
  });
  res["diagnostics"]["oracle_max_std_error"] = max_se.maxCoeff();

  NamedMatrix sample;
  sample.name = "sample_point";
  sample.columns = { "lead", "time" };
  for (Eigen::Index o = 0; o < r; ++o)
    sample.columns.push_back("oracle_c" + std::to_string(c.observed[static_cast<std::size_t>(o)]));
  std::vector<RowMatrix> sample_cols;

  for (std::size_t ni = 0; ni < c.N.size(); ++ni) {
    const Eigen::Index N = c.N[ni];
    Rng train_rng = stream(cfg.seed, stream_train, ni);
    note(log, "N=" + std::to_string(N) + ": drawing training initial conditions");
    const RowMatrix x0 = draw_initial(cfg, c.initial, N, train_rng);
    const RowMatrix samples = simulate_members(cfg.system, x0, c.leads.max, c.observed);
    const RowMatrix cov = samples.leftCols(r);
    const RowMatrix resp = lead_columns(samples, leads, r, 0);
    const std::string label = "N=" + std::to_string(N);
    EstimatorPredictions pred =
      fit_and_predict(cov, resp, out_cov, c.estimators, cfg.kernel, log, label);
    res["diagnostics"]["fits"].push_back(json{ { "N", N }, { "fit", pred.diagnostics } });
    const RowMatrix truth = keep_rows(oracle, pred.unsupported);
    for (std::size_t e = 0; e < pred.names.size(); ++e) {
      const Vector curve = rmse_curve(keep_rows(pred.values[e], pred.unsupported), truth, r);
      res["curves"].push_back(
        json{ { "estimator", pred.names[e] }, { "N", N }, { "rmse", vec_json(curve) } });
      for (Eigen::Index o = 0; o < r; ++o)
        sample.columns.push_back(pred.names[e] + "_N" + std::to_string(N) + "_c" +
                                 std::to_string(c.observed[static_cast<std::size_t>(o)]));
      sample_cols.push_back(pred.values[e].row(0));
    }
  }

  const auto n_leads = static_cast<Eigen::Index>(leads.size());
  sample.data.resize(n_leads, static_cast<Eigen::Index>(sample.columns.size()));
  for (Eigen::Index l = 0; l < n_leads; ++l) {
    sample.data(l, 0) = leads[static_cast<std::size_t>(l)];
    sample.data(l, 1) = leads[static_cast<std::size_t>(l)] * cfg.system.obs_dt;
    Eigen::Index col = 2;
    for (Eigen::Index o = 0; o < r; ++o)
      sample.data(l, col++) = oracle(0, l * r + o);
    for (const auto& s : sample_cols)
      for (Eigen::Index o = 0; o < r; ++o)
        sample.data(l, col++) = s(0, l * r + o);
  }
  out.predictions.push_back(std::move(sample));
  return out;
}

inline RunOutput run_delay_forecast(const ExperimentConfig& cfg, const DelayForecastConfig& c,
                                    const Logger& log)
{
  using namespace detail;
  const std::vector<int> leads = c.leads.leads();
  int max_m = 0;
  for (int m : c.m)
    max_m = std::max(max_m, m);
  const int present = (max_m - 1) * c.stride;
  const int steps = present + c.leads.max;

  RunOutput out;
  json& res = out.results;
  json times;
  res["leads"] = lead_json(leads, cfg.system.obs_dt, times);
  res["lead_times"] = times;
  res["curves"] = json::array();

  auto segments = [&](Eigen::Index n, std::uint64_t tag) {
    Rng rng = stream(cfg.seed, tag);
    const RowMatrix x0 = sample_invariant(cfg.system, n, cfg.spinup, rng);
    return simulate_members(cfg.system, x0, steps, { c.component });
  };
  note(log, "simulating " + std::to_string(c.N) + " training segments");
  const RowMatrix train = segments(c.N, stream_train);
  note(log, "simulating " + std::to_string(c.N_out) + " verification segments");
  const RowMatrix test = segments(c.N_out, stream_test);
  const RowMatrix truth = lead_columns(test, leads, 1, present);

  NamedMatrix sample;
  sample.name = "sample_point";
  sample.columns = { "lead", "time", "truth" };
  std::vector<Vector> sample_cols;

  for (int m : c.m) {
    auto delays = [&](const RowMatrix& s) {
      RowMatrix d(s.rows(), m);
      for (int i = 0; i < m; ++i)
        d.col(i) = s.col(present - (m - 1 - i) * c.stride);
      return d;
    };
    const std::string label = "m=" + std::to_string(m);
    EstimatorPredictions pred =
      fit_and_predict(delays(train), lead_columns(train, leads, 1, present), delays(test),
                      c.estimators, cfg.kernel, log, label);
    res["diagnostics"]["fits"].push_back(json{ { "m", m }, { "fit", pred.diagnostics } });
    const RowMatrix kept_truth = keep_rows(truth, pred.unsupported);
    for (std::size_t e = 0; e < pred.names.size(); ++e) {
      const Vector curve = rmse_curve(keep_rows(pred.values[e], pred.unsupported), kept_truth, 1);
      res["curves"].push_back(
        json{ { "estimator", pred.names[e] }, { "m", m }, { "rmse", vec_json(curve) } });
      sample.columns.push_back(pred.names[e] + "_m" + std::to_string(m));
      sample_cols.push_back(pred.values[e].row(0).transpose());
    }
  }

  const auto n_leads = static_cast<Eigen::Index>(leads.size());
  sample.data.resize(n_leads, static_cast<Eigen::Index>(sample.columns.size()));
  for (Eigen::Index l = 0; l < n_leads; ++l) {
    sample.data(l, 0) = leads[static_cast<std::size_t>(l)];
    sample.data(l, 1) = leads[static_cast<std::size_t>(l)] * cfg.system.obs_dt;
    sample.data(l, 2) = truth(0, l);
    for (std::size_t s = 0; s < sample_cols.size(); ++s)
      sample.data(l, 3 + static_cast<Eigen::Index>(s)) = sample_cols[s][l];
  }
  out.predictions.push_back(std::move(sample));
  return out;
}

//! Components observed by an EnKF restricted to `count` of `dim` components:
//! evenly spaced around the ring, starting at `first`.
inline std::vector<int> observed_components(int count, int dim, int first)
{
  std::vector<int> out;
  for (int i = 0; i < count; ++i)
    out.push_back((first + static_cast<int>((static_cast<long long>(i) * dim) / count)) % dim);
  std::sort(out.begin(), out.end());
  return out;
}

inline RunOutput run_smoother(const ExperimentConfig& cfg, const SmootherExperimentConfig& c,
                              const Logger& log)
{
  using namespace detail;
  const SmootherParams& sp = c.smoother;
  RunOutput out;
  json& res = out.results;
  res["k"] = sp.k;
  res["m_s"] = sp.m_s;
  res["noise"] = json::array();
  for (const auto& n : c.test_noise)
    res["noise"].push_back(n.label);
  res["smoother"] = json::array();
  res["noisy"] = json::array();
  res["enkf"] = json::array();

  note(log, "training trajectory of " + std::to_string(c.N + sp.m_s - 1) + " samples");
  Rng train_rng = stream(cfg.seed, stream_train);
  const Trajectory train = attractor_trajectory(cfg.system, c.N + sp.m_s - 1, cfg.spinup, train_rng);
  const Vector noisy_train = apply_noise(train, c.component, c.train_noise.model);
  note(log, "fitting smoother m_s=" + std::to_string(sp.m_s) + " L=" + std::to_string(sp.L));
  const std::vector<SmootherModel> models =
    fit_smoothers(noisy_train, sp.m_s, sp.k, sp.L, cfg.kernel, sp.measure);
  res["diagnostics"]["kernel"] = operator_json(*models.front().estimator.op);
  res["diagnostics"]["basis"] = basis_json(*models.front().estimator.basis);

  Rng test_rng = stream(cfg.seed, stream_test);
  const Trajectory test = attractor_trajectory(cfg.system, c.N_out, cfg.spinup, test_rng);
  const Vector truth = test.states.col(c.component);
  res["diagnostics"]["truth_std"] =
    std::sqrt((truth.array() - truth.mean()).square().sum() / double(truth.size() - 1));

  std::vector<Vector> noisy_test;
  for (const auto& noise : c.test_noise) {
    note(log, "denoising verification data with " + noise.label + " noise");
    noisy_test.push_back(apply_noise(test, c.component, noise.model));
    const Vector& z = noisy_test.back();
    res["noisy"].push_back(json{ { "noise", noise.label }, { "rmse", rmse(z, truth) } });
    const WindowRows rows = window_rows(models.front(), z);
    for (const auto& model : models) {
      const DenoisedSequence d = denoise_sequence(model, rows);
      res["smoother"].push_back(json{ { "k", model.k },
                                      { "noise", noise.label },
                                      { "rmse", smoother_rmse(d, truth) },
                                      { "first_index", d.first_index_1based() },
                                      { "last_index", d.last_index_1based() },
                                      { "unsupported", d.n_unsupported } });
      const Eigen::Index n = std::min<Eigen::Index>(c.n_predictions, d.estimates.size());
      if (n > 0) {
        NamedMatrix p;
        p.name = "denoised_" + noise.label + "_k" + std::to_string(model.k);
        p.columns = { "index", "truth", "noisy", "estimate" };
        p.data.resize(n, 4);
        for (Eigen::Index t = 0; t < n; ++t) {
          const Eigen::Index i = d.first + t;
          p.data.row(t) << double(i + 1), truth[i], z[i], d.estimates[t];
        }
        out.predictions.push_back(std::move(p));
      }
    }
  }

  if (c.enkf) {
    const EnkfSettings& s = *c.enkf;
    const int dim = cfg.system.dimension();
    for (std::size_t ci = 0; ci < s.observed_counts.size(); ++ci) {
      const std::vector<int> obs_comp = observed_components(s.observed_counts[ci], dim, c.component);
      for (std::size_t ni = 0; ni < c.test_noise.size(); ++ni) {
        const NamedNoise& noise = c.test_noise[ni];
        note(log, "EnKF with " + std::to_string(obs_comp.size()) + " observed components, " +
                    noise.label + " noise");
        RowMatrix obs(c.N_out, static_cast<Eigen::Index>(obs_comp.size()));
        for (std::size_t o = 0; o < obs_comp.size(); ++o) {
          if (obs_comp[o] == c.component) {
            obs.col(static_cast<Eigen::Index>(o)) = noisy_test[ni];
          } else {
            NoiseModel m = noise.model;
            m.seed = split_stream(noise.model.seed, static_cast<std::uint64_t>(obs_comp[o]) + 1)();
            obs.col(static_cast<Eigen::Index>(o)) = apply_noise(test, obs_comp[o], m);
          }
        }
        EnkfConfig ec;
        ec.spec = cfg.system;
        ec.ensemble_size = s.ensemble_size;
        ec.observed = obs_comp;
        ec.obs_noise_var = Vector::Constant(static_cast<Eigen::Index>(obs_comp.size()),
                                            s.obs_noise_var > 0.0 ? s.obs_noise_var : noise.variance);
        ec.inflation = s.inflation;
        Rng rng = stream(cfg.seed, stream_enkf, ci * 64 + ni);
        const RowMatrix x0 = sample_invariant(cfg.system, s.ensemble_size, cfg.spinup, rng);
        json entry{ { "observed", static_cast<int>(obs_comp.size()) }, { "noise", noise.label } };
        try {
          const EnkfResult r = enkf_run(ec, obs, x0, rng);
          const Eigen::Index n = c.N_out - s.discard;
          entry["rmse"] = rmse(r.mean.col(c.component).tail(n), truth.tail(n));
          entry["status"] = "ok";
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::divergence && e.kind() != ErrorKind::numerical_blowup)
            throw;
          note(log, std::string("EnKF diverged: ") + e.what());
          entry["rmse"] = nullptr;
          entry["status"] = "diverged";
          entry["message"] = e.what();
        }
        res["enkf"].push_back(std::move(entry));
      }
    }
  }
  return out;
}

inline RunOutput run_smooth_then_predict(const ExperimentConfig& cfg,
                                         const SmoothThenPredictConfig& c, const Logger& log)
{
  using namespace detail;
  const std::vector<int> leads = c.leads.leads();
  const int m_s = c.smoother.m_s;
  const int k = c.smoother.k.front();
  int max_m = 0;
  for (int m : c.m)
    max_m = std::max(max_m, m);
  // Denoised values exist at segment indices k-1 .. S-1-(m_s-k); the present
  // is the last index of the longest delay window inside that range.
  const int present = (k - 1) + (max_m - 1);
  const int S = (m_s - 1) + (max_m - 1) + c.leads.max + 1;

  RunOutput out;
  json& res = out.results;
  json times;
  res["leads"] = lead_json(leads, cfg.system.obs_dt, times);
  res["lead_times"] = times;
  res["curves"] = json::array();

  auto segments = [&](Eigen::Index n, std::uint64_t tag) {
    Rng rng = stream(cfg.seed, tag);
    const RowMatrix x0 = sample_invariant(cfg.system, n, cfg.spinup, rng);
    return simulate_members(cfg.system, x0, S - 1, { c.component });
  };
  auto noisy = [&](const RowMatrix& clean, std::uint64_t sub) {
    NoiseModel m = c.noise.model;
    m.seed = split_stream(c.noise.model.seed, sub)();
    const Vector e = noise_sequence(m, clean.size());
    RowMatrix z = clean;
    z += Eigen::Map<const RowMatrix>(e.data(), clean.rows(), clean.cols());
    return z;
  };
  note(log, "simulating " + std::to_string(c.N) + " training and " + std::to_string(c.N_out) +
              " verification segments");
  const RowMatrix train = segments(c.N, stream_train);
  const RowMatrix test = segments(c.N_out, stream_test);
  const RowMatrix z_train = noisy(train, 1);
  const RowMatrix z_test = noisy(test, 2);

  note(log, "fitting smoother on the first window of each training segment");
  const SmootherModel model =
    fit_smoothers_on_windows(z_train.leftCols(m_s), { k }, c.smoother.L, cfg.kernel,
                             c.smoother.measure)
      .front();
  res["diagnostics"]["smoother_kernel"] = operator_json(*model.estimator.op);
  res["diagnostics"]["smoother_basis"] = basis_json(*model.estimator.basis);

  // Denoise the positions that feed covariates (and, for training, responses).
  auto denoise = [&](const RowMatrix& z, const std::vector<int>& positions) {
    RowMatrix windows(z.rows() * static_cast<Eigen::Index>(positions.size()), m_s);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (std::size_t p = 0; p < positions.size(); ++p)
        windows.row(i * static_cast<Eigen::Index>(positions.size()) + static_cast<Eigen::Index>(p)) =
          z.block(i, positions[p] - (k - 1), 1, m_s);
    const Vector est = denoise_windows(model, windows);
    RowMatrix d = RowMatrix::Constant(z.rows(), z.cols(), std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (std::size_t p = 0; p < positions.size(); ++p)
        d(i, positions[p]) =
          est[i * static_cast<Eigen::Index>(positions.size()) + static_cast<Eigen::Index>(p)];
    return d;
  };
  std::vector<int> cov_pos;
  for (int j = max_m - 1; j >= 0; --j)
    cov_pos.push_back(present - j);
  std::vector<int> train_pos = cov_pos;
  for (int l : leads)
    if (l > 0)
      train_pos.push_back(present + l);
  note(log, "denoising training segments");
  const RowMatrix d_train = denoise(z_train, train_pos);
  note(log, "denoising verification segments");
  const RowMatrix d_test = denoise(z_test, cov_pos);

  auto incomplete = [](const RowMatrix& d, const std::vector<int>& pos) {
    std::vector<char> drop(static_cast<std::size_t>(d.rows()), 0);
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (int p : pos)
        if (!std::isfinite(d(i, p)))
          drop[static_cast<std::size_t>(i)] = 1;
    return drop;
  };
  const std::vector<char> drop_train = incomplete(d_train, train_pos);
  const std::vector<char> drop_test = incomplete(d_test, cov_pos);
  res["diagnostics"]["dropped_training_segments"] = count_flags(drop_train);
  res["diagnostics"]["dropped_verification_segments"] = count_flags(drop_test);
  {
    const Vector est = keep_rows(d_test, drop_test).col(present);
    const Vector tru = keep_rows(test, drop_test).col(present);
    res["diagnostics"]["denoised_rmse"] = rmse(est, tru);
  }

  const RowMatrix clean_train = keep_rows(train, drop_train);
  const RowMatrix den_train = keep_rows(d_train, drop_train);
  const RowMatrix clean_test = keep_rows(test, drop_test);
  const RowMatrix den_test = keep_rows(d_test, drop_test);
  const RowMatrix truth = lead_columns(clean_test, leads, 1, present);

  NamedMatrix sample;
  sample.name = "sample_point";
  sample.columns = { "lead", "time", "truth" };
  std::vector<Vector> sample_cols;

  EstimatorSet smoothing;
  smoothing.smoothing = true;
  for (int m : c.m) {
    auto delays = [&](const RowMatrix& s) {
      RowMatrix d(s.rows(), m);
      for (int i = 0; i < m; ++i)
        d.col(i) = s.col(present - (m - 1 - i));
      return d;
    };
    // Lead 0 responses of the denoised model are the denoised present values.
    const RowMatrix den_resp = lead_columns(den_train, leads, 1, present);
    const std::string label = "m=" + std::to_string(m);
    for (const char* data : { "denoised", "clean" }) {
      const bool den = std::string(data) == "denoised";
      EstimatorPredictions pred = fit_and_predict(
        delays(den ? den_train : clean_train),
        den ? den_resp : lead_columns(clean_train, leads, 1, present),
        delays(den ? den_test : clean_test), smoothing, cfg.kernel, log, label + " " + data);
      res["diagnostics"]["fits"].push_back(
        json{ { "m", m }, { "data", data }, { "fit", pred.diagnostics } });
      const Vector curve = rmse_curve(keep_rows(pred.values[0], pred.unsupported),
                                      keep_rows(truth, pred.unsupported), 1);
      res["curves"].push_back(json{ { "data", data }, { "m", m }, { "rmse", vec_json(curve) } });
      sample.columns.push_back(std::string(data) + "_m" + std::to_string(m));
      sample_cols.push_back(pred.values[0].row(0).transpose());
    }
  }

  const auto n_leads = static_cast<Eigen::Index>(leads.size());
  sample.data.resize(n_leads, static_cast<Eigen::Index>(sample.columns.size()));
  for (Eigen::Index l = 0; l < n_leads; ++l) {
    sample.data(l, 0) = leads[static_cast<std::size_t>(l)];
    sample.data(l, 1) = leads[static_cast<std::size_t>(l)] * cfg.system.obs_dt;
    sample.data(l, 2) = truth(0, l);
    for (std::size_t s = 0; s < sample_cols.size(); ++s)
      sample.data(l, 3 + static_cast<Eigen::Index>(s)) = sample_cols[s][l];
  }
  out.predictions.push_back(std::move(sample));
  return out;
}

//! Runs an experiment and returns its results document and prediction tables.
inline RunOutput run_experiment(const ExperimentConfig& cfg, const Logger& log = {})
{
  RunOutput out = std::visit(
    [&](const auto& body) -> RunOutput {
      using T = std::decay_t<decltype(body)>;
      if constexpr (std::is_same_v<T, ConditionalExpectationConfig>)
        return run_conditional_expectation(cfg, body, log);
      else if constexpr (std::is_same_v<T, DelayForecastConfig>)
        return run_delay_forecast(cfg, body, log);
      else if constexpr (std::is_same_v<T, SmootherExperimentConfig>)
        return run_smoother(cfg, body, log);
      else
        return run_smooth_then_predict(cfg, body, log);
    },
    cfg.body);
  json head{ { "id", cfg.id }, { "kind", cfg.kind }, { "anchor", cfg.anchor }, { "seed", cfg.seed } };
  head.update(out.results);
  out.results = std::move(head);
  return out;
}

} // namespace kaf::harness
