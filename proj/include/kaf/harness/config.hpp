#pragma once

#include "kaf/dynamics/noise.hpp"
#include "kaf/dynamics/system.hpp"
#include "kaf/error.hpp"
#include "kaf/estimators/eigenbasis.hpp"
#include "kaf/kernel/markov.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace kaf::harness {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

//! Lead indices 0, step, 2 step, ..., max (in sampling intervals).
struct LeadGrid
{
  int max = 0;
  int step = 1;

  std::vector<int> leads() const
  {
    std::vector<int> out;
    for (int l = 0; l <= max; l += step)
      out.push_back(l);
    return out;
  }
};

struct NystromConfig
{
  int L = 100;
  ProjectionMeasure measure = ProjectionMeasure::stationary;
};

struct EstimatorSet
{
  std::optional<NystromConfig> nystrom;
  bool smoothing = false;
};

struct NamedNoise
{
  std::string label;
  NoiseModel model;
  double variance = 0.0; // nominal variance
};

//! Nyström-vs-smoothing estimation of E[X_t | X_0] against a Monte-Carlo
//! oracle, with X the observed components of the state.
struct ConditionalExpectationConfig
{
  std::string initial = "invariant"; // or "gaussian"
  std::vector<int> observed;
  LeadGrid leads;
  std::vector<Eigen::Index> N;
  Eigen::Index N_out = 0;
  Eigen::Index n_mc = 0;
  EstimatorSet estimators;
};

//! Forecast of an observed component from m delays, for several m.
struct DelayForecastConfig
{
  int component = 0;
  std::vector<int> m;
  int stride = 1;
  LeadGrid leads;
  Eigen::Index N = 0;
  Eigen::Index N_out = 0;
  EstimatorSet estimators;
};

struct SmootherParams
{
  int m_s = 5;
  std::vector<int> k;
  int L = 120;
  ProjectionMeasure measure = ProjectionMeasure::stationary;
};

struct EnkfSettings
{
  int ensemble_size = 64;
  std::vector<int> observed_counts;
  double inflation = 1.02;
  double obs_noise_var = 0.0; // 0: nominal variance of the test noise
  Eigen::Index discard = 0;   // leading analysis times excluded from the RMSE
};

//! Denoising of one component with a smoother trained on noisy data,
//! evaluated on an independent trajectory under several noise models.
struct SmootherExperimentConfig
{
  int component = 0;
  SmootherParams smoother;
  Eigen::Index N = 0;
  Eigen::Index N_out = 0;
  NamedNoise train_noise;
  std::vector<NamedNoise> test_noise;
  std::optional<EnkfSettings> enkf;
  Eigen::Index n_predictions = 500;
};

//! Kernel-smoothing forecasts trained on denoised delay windows, compared with
//! the same estimator trained on clean data.
struct SmoothThenPredictConfig
{
  int component = 0;
  std::vector<int> m;
  LeadGrid leads;
  Eigen::Index N = 0;
  Eigen::Index N_out = 0;
  SmootherParams smoother;
  NamedNoise noise;
};

using ExperimentBody = std::variant<ConditionalExpectationConfig, DelayForecastConfig,
                                    SmootherExperimentConfig, SmoothThenPredictConfig>;

struct ExperimentConfig
{
  std::string id;
  std::string anchor;
  std::string kind;
  std::uint64_t seed = 0;
  SystemSpec system;
  KernelParams kernel;
  double spinup = 50.0;
  ExperimentBody body;
  json effective; // validated document the run was derived from
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& path, const std::string& what)
{
  throw Error(ErrorKind::invalid_input, "config " + path + ": " + what);
}

inline const json& field(const json& j, const std::string& path, const char* key)
{
  if (!j.is_object() || !j.contains(key))
    config_error(path + "." + key, "missing");
  return j.at(key);
}

inline double number(const json& j, const std::string& path)
{
  if (!j.is_number())
    config_error(path, "expected a number");
  return j.get<double>();
}

inline long long integer(const json& j, const std::string& path)
{
  if (!j.is_number_integer())
    config_error(path, "expected an integer");
  return j.get<long long>();
}

inline double number_or(const json& j, const std::string& path, const char* key, double fallback)
{
  return j.contains(key) ? number(j.at(key), path + "." + key) : fallback;
}

inline long long integer_or(const json& j, const std::string& path, const char* key,
                            long long fallback)
{
  return j.contains(key) ? integer(j.at(key), path + "." + key) : fallback;
}

inline std::string string_field(const json& j, const std::string& path, const char* key)
{
  const json& v = field(j, path, key);
  if (!v.is_string())
    config_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

inline std::vector<int> int_list(const json& j, const std::string& path)
{
  if (!j.is_array() || j.empty())
    config_error(path, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(static_cast<int>(integer(j[i], path + "[" + std::to_string(i) + "]")));
  return out;
}

inline Eigen::Index positive_count(const json& j, const std::string& path, const char* key)
{
  const long long v = integer(field(j, path, key), path + "." + key);
  if (v < 1)
    config_error(path + "." + key, "must be >= 1");
  return static_cast<Eigen::Index>(v);
}

inline SystemSpec parse_system(const json& j, const std::string& path)
{
  const std::string kind = string_field(j, path, "kind");
  SystemSpec spec;
  if (kind == "lorenz63") {
    spec = lorenz63_spec(number_or(j, path, "obs_dt", 0.1));
  } else if (kind == "lorenz96") {
    const long long n = integer(field(j, path, "n"), path + ".n");
    if (n < 4)
      config_error(path + ".n", "Lorenz-96 needs n >= 4");
    spec = lorenz96_spec(static_cast<int>(n), number_or(j, path, "forcing", 8.0),
                         number(field(j, path, "obs_dt"), path + ".obs_dt"));
  } else if (kind == "hamiltonian16") {
    spec = hamiltonian16_spec(number_or(j, path, "obs_dt", 0.1));
  } else {
    config_error(path + ".kind", "unknown system '" + kind + "'");
  }
  if (j.contains("dt"))
    spec.dt = number(j.at("dt"), path + ".dt");
  try {
    spec.validate();
  } catch (const Error& e) {
    config_error(path, e.what());
  }
  return spec;
}

inline KernelParams parse_kernel(const json& j, const std::string& path)
{
  KernelParams k;
  if (j.is_null())
    return k;
  if (!j.is_object())
    config_error(path, "expected an object");
  k.knn = static_cast<int>(integer_or(j, path, "knn", k.knn));
  k.pilot_neighbors = static_cast<int>(integer_or(j, path, "pilot_neighbors", k.pilot_neighbors));
  if (k.knn < 2)
    config_error(path + ".knn", "must be >= 2");
  if (k.pilot_neighbors < 1)
    config_error(path + ".pilot_neighbors", "must be >= 1");
  auto auto_or_number = [&](const char* key, double& out) {
    if (!j.contains(key))
      return;
    const json& v = j.at(key);
    if (v.is_string() && v.get<std::string>() == "auto")
      out = 0.0;
    else {
      out = number(v, path + "." + key);
      if (!(out > 0.0))
        config_error(path + "." + key, "must be positive or \"auto\"");
    }
  };
  auto_or_number("epsilon", k.epsilon);
  auto_or_number("d", k.d);
  return k;
}

inline ProjectionMeasure parse_measure(const json& j, const std::string& path)
{
  if (!j.contains("measure"))
    return ProjectionMeasure::stationary;
  const std::string m = string_field(j, path, "measure");
  if (m == "stationary")
    return ProjectionMeasure::stationary;
  if (m == "uniform")
    return ProjectionMeasure::uniform;
  config_error(path + ".measure", "expected \"stationary\" or \"uniform\"");
}

inline LeadGrid parse_leads(const json& j, const std::string& path)
{
  LeadGrid g;
  g.max = static_cast<int>(integer(field(j, path, "max"), path + ".max"));
  g.step = static_cast<int>(integer_or(j, path, "step", 1));
  if (g.max < 0 || g.step < 1)
    config_error(path, "need max >= 0 and step >= 1");
  return g;
}

inline EstimatorSet parse_estimators(const json& j, const std::string& path)
{
  if (!j.is_object())
    config_error(path, "expected an object");
  EstimatorSet e;
  for (const auto& [key, v] : j.items()) {
    if (key == "nystrom") {
      NystromConfig n;
      n.L = static_cast<int>(integer(field(v, path + ".nystrom", "L"), path + ".nystrom.L"));
      if (n.L < 0)
        config_error(path + ".nystrom.L", "must be >= 0");
      n.measure = parse_measure(v, path + ".nystrom");
      e.nystrom = n;
    } else if (key == "smoothing") {
      e.smoothing = true;
    } else {
      config_error(path + "." + key, "unknown estimator");
    }
  }
  if (!e.nystrom && !e.smoothing)
    config_error(path, "no estimator selected");
  return e;
}

inline NamedNoise parse_noise(const json& j, const std::string& path, std::uint64_t seed)
{
  NamedNoise n;
  const std::string kind = string_field(j, path, "kind");
  n.label = j.contains("label") ? string_field(j, path, "label") : kind;
  n.model.seed = seed;
  if (kind == "gaussian") {
    const double var = number(field(j, path, "variance"), path + ".variance");
    n.model.kind = GaussianNoise{ var };
    n.variance = var;
  } else if (kind == "student_t") {
    const double dof = number(field(j, path, "dof"), path + ".dof");
    if (!(dof > 2.0))
      config_error(path + ".dof", "must exceed 2");
    double scale = 0.0;
    if (j.contains("variance")) {
      n.variance = number(j.at("variance"), path + ".variance");
      scale = student_t_scale(dof, n.variance);
    } else {
      scale = number(field(j, path, "scale"), path + ".scale");
      n.variance = scale * scale * dof / (dof - 2.0);
    }
    n.model.kind = StudentTNoise{ dof, scale };
  } else if (kind == "uniform") {
    double a = 0.0;
    double b = 0.0;
    if (j.contains("half_width")) {
      b = number(j.at("half_width"), path + ".half_width");
      a = -b;
    } else {
      a = number(field(j, path, "a"), path + ".a");
      b = number(field(j, path, "b"), path + ".b");
    }
    if (!(a < b))
      config_error(path, "uniform noise needs a < b");
    n.model.kind = UniformNoise{ a, b };
    n.variance = (b - a) * (b - a) / 12.0;
  } else if (kind == "time_varying") {
    const double amp = number(field(j, path, "amplitude"), path + ".amplitude");
    const double w = number_or(j, path, "half_width", 0.5);
    n.model.kind = SineNoise{ amp, w };
    n.variance = number_or(j, path, "variance", amp * amp / 2.0);
  } else {
    config_error(path + ".kind", "unknown noise kind '" + kind + "'");
  }
  try {
    n.model.validate();
  } catch (const Error& e) {
    config_error(path, e.what());
  }
  return n;
}

inline SmootherParams parse_smoother(const json& j, const std::string& path)
{
  SmootherParams s;
  s.m_s = static_cast<int>(integer(field(j, path, "m_s"), path + ".m_s"));
  const json& k = field(j, path, "k");
  s.k = k.is_array() ? int_list(k, path + ".k")
                     : std::vector<int>{ static_cast<int>(integer(k, path + ".k")) };
  s.L = static_cast<int>(integer(field(j, path, "L"), path + ".L"));
  s.measure = parse_measure(j, path);
  if (s.m_s < 1)
    config_error(path + ".m_s", "must be >= 1");
  for (int v : s.k)
    if (v < 1 || v > s.m_s)
      config_error(path + ".k", "entries must lie in [1, m_s]");
  if (s.L < 0)
    config_error(path + ".L", "must be >= 0");
  return s;
}

inline void check_components(const std::vector<int>& c, int dim, const std::string& path)
{
  for (int v : c)
    if (v < 0 || v >= dim)
      config_error(path, "component " + std::to_string(v) + " does not exist");
}

inline std::uint64_t noise_seed(std::uint64_t seed, std::uint64_t tag)
{
  return split_stream(seed, tag)();
}

} // namespace detail

//! FNV-1a 64-bit hash.
inline std::uint64_t fnv1a(const std::string& s)
{
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v)
{
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

struct ConfigOverrides
{
  bool fast = false;
  std::optional<std::uint64_t> seed;
};

//! Parses JSON text (comments allowed). Syntax errors are invalid-input.
inline json parse_json_text(const std::string& text, const std::string& origin)
{
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::invalid_input, origin + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::invalid_input, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

//! Validates a configuration document and resolves it into typed settings.
//! With `fast`, the document's "fast" block is merged over it first.
inline ExperimentConfig parse_config(json doc, const ConfigOverrides& ov = {})
{
  using namespace detail;
  if (!doc.is_object())
    config_error("", "top level must be an object");
  const long long version = integer(field(doc, "", "schema_version"), "schema_version");
  if (version != schema_version)
    config_error("schema_version", "unsupported version " + std::to_string(version));
  if (ov.fast && doc.contains("fast")) {
    if (!doc.at("fast").is_object())
      config_error("fast", "expected an object");
    doc.merge_patch(doc.at("fast"));
  }
  doc.erase("fast");
  if (ov.seed)
    doc["seed"] = *ov.seed;

  ExperimentConfig cfg;
  cfg.id = string_field(doc, "", "id");
  cfg.anchor = string_field(doc, "", "anchor");
  cfg.kind = string_field(doc, "", "kind");
  if (cfg.id.empty() || cfg.id.find_first_of("/\\ ") != std::string::npos)
    config_error("id", "must be a non-empty name without spaces or slashes");
  const json& seed = field(doc, "", "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
    config_error("seed", "expected a non-negative integer");
  cfg.seed = seed.get<std::uint64_t>();
  cfg.system = parse_system(field(doc, "", "system"), "system");
  cfg.kernel = parse_kernel(doc.value("kernel", json()), "kernel");
  cfg.spinup = number_or(doc, "", "spinup", 50.0);
  if (!(cfg.spinup > 0.0))
    config_error("spinup", "must be positive");
  const int dim = cfg.system.dimension();

  if (cfg.kind == "conditional_expectation") {
    ConditionalExpectationConfig c;
    c.initial = doc.contains("initial") ? string_field(doc, "", "initial") : "invariant";
    if (c.initial != "invariant" && c.initial != "gaussian")
      config_error("initial", "expected \"invariant\" or \"gaussian\"");
    c.observed = int_list(field(doc, "", "observed"), "observed");
    check_components(c.observed, dim, "observed");
    if (std::holds_alternative<Hamiltonian16>(cfg.system.kind) &&
        c.observed != std::vector<int>{ 0, 1 })
      config_error("observed", "the Hamiltonian oracle conditions on components [0, 1]");
    c.leads = parse_leads(field(doc, "", "leads"), "leads");
    const json& n = field(doc, "", "N");
    if (n.is_array()) {
      for (int v : int_list(n, "N"))
        c.N.push_back(v);
    } else {
      c.N.push_back(positive_count(doc, "", "N"));
    }
    for (auto v : c.N)
      if (v < 2)
        config_error("N", "entries must be >= 2");
    c.N_out = positive_count(doc, "", "N_out");
    c.n_mc = positive_count(doc, "", "n_mc");
    c.estimators = parse_estimators(field(doc, "", "estimators"), "estimators");
    cfg.body = c;
  } else if (cfg.kind == "delay_forecast") {
    DelayForecastConfig c;
    c.component = static_cast<int>(integer_or(doc, "", "component", 0));
    check_components({ c.component }, dim, "component");
    c.m = int_list(field(doc, "", "m"), "m");
    for (int v : c.m)
      if (v < 1)
        config_error("m", "entries must be >= 1");
    c.stride = static_cast<int>(integer_or(doc, "", "stride", 1));
    if (c.stride < 1)
      config_error("stride", "must be >= 1");
    c.leads = parse_leads(field(doc, "", "leads"), "leads");
    c.N = positive_count(doc, "", "N");
    c.N_out = positive_count(doc, "", "N_out");
    c.estimators = parse_estimators(field(doc, "", "estimators"), "estimators");
    cfg.body = c;
  } else if (cfg.kind == "smoother") {
    SmootherExperimentConfig c;
    c.component = static_cast<int>(integer_or(doc, "", "component", 0));
    check_components({ c.component }, dim, "component");
    c.smoother = parse_smoother(field(doc, "", "smoother"), "smoother");
    c.N = positive_count(doc, "", "N");
    c.N_out = positive_count(doc, "", "N_out");
    if (c.N_out < c.smoother.m_s)
      config_error("N_out", "shorter than the smoother window");
    c.train_noise = parse_noise(field(doc, "", "train_noise"), "train_noise",
                                noise_seed(cfg.seed, 0x7472));
    const json& tn = field(doc, "", "test_noise");
    if (!tn.is_array() || tn.empty())
      config_error("test_noise", "expected a non-empty array");
    for (std::size_t i = 0; i < tn.size(); ++i)
      c.test_noise.push_back(parse_noise(tn[i], "test_noise[" + std::to_string(i) + "]",
                                         noise_seed(cfg.seed, 0x7465000 + i)));
    for (std::size_t i = 0; i < c.test_noise.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (c.test_noise[i].label == c.test_noise[j].label)
          config_error("test_noise", "duplicate label '" + c.test_noise[i].label + "'");
    if (doc.contains("enkf")) {
      const json& e = doc.at("enkf");
      EnkfSettings s;
      s.ensemble_size = static_cast<int>(integer_or(e, "enkf", "ensemble_size", 64));
      s.observed_counts = int_list(field(e, "enkf", "observed_counts"), "enkf.observed_counts");
      s.inflation = number_or(e, "enkf", "inflation", 1.02);
      s.obs_noise_var = number_or(e, "enkf", "obs_noise_var", 0.0);
      s.discard = integer_or(e, "enkf", "discard", 0);
      if (s.ensemble_size < 2)
        config_error("enkf.ensemble_size", "must be >= 2");
      if (!(s.inflation >= 1.0))
        config_error("enkf.inflation", "must be >= 1");
      if (s.obs_noise_var < 0.0)
        config_error("enkf.obs_noise_var", "must be >= 0");
      if (s.discard < 0 || s.discard >= c.N_out)
        config_error("enkf.discard", "must lie in [0, N_out)");
      for (int v : s.observed_counts)
        if (v < 1 || v > dim)
          config_error("enkf.observed_counts", "entries must lie in [1, dimension]");
      c.enkf = s;
    }
    c.n_predictions = integer_or(doc, "", "n_predictions", 500);
    if (c.n_predictions < 0)
      config_error("n_predictions", "must be >= 0");
    cfg.body = c;
  } else if (cfg.kind == "smooth_then_predict") {
    SmoothThenPredictConfig c;
    c.component = static_cast<int>(integer_or(doc, "", "component", 0));
    check_components({ c.component }, dim, "component");
    c.m = int_list(field(doc, "", "m"), "m");
    for (int v : c.m)
      if (v < 1)
        config_error("m", "entries must be >= 1");
    c.leads = parse_leads(field(doc, "", "leads"), "leads");
    c.N = positive_count(doc, "", "N");
    c.N_out = positive_count(doc, "", "N_out");
    c.smoother = parse_smoother(field(doc, "", "smoother"), "smoother");
    if (c.smoother.k.size() != 1)
      config_error("smoother.k", "exactly one target position is required");
    c.noise = parse_noise(field(doc, "", "noise"), "noise", noise_seed(cfg.seed, 0x7370));
    cfg.body = c;
  } else {
    config_error("kind", "unknown experiment kind '" + cfg.kind + "'");
  }
  cfg.effective = std::move(doc);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path, const ConfigOverrides& ov = {})
{
  return parse_config(read_json_file(path), ov);
}

//! Hash of the effective configuration (canonical key order).
inline std::string config_hash(const ExperimentConfig& cfg)
{
  return hex64(fnv1a(cfg.effective.dump()));
}

} // namespace kaf::harness
