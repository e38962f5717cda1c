#pragma once

#include "kaf/error.hpp"
#include "kaf/harness/config.hpp"
#include "kaf/harness/experiments.hpp"
#include "kaf/io/matrix_io.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifndef KAF_VERSION
#define KAF_VERSION "1.0.0"
#endif

namespace kaf::harness {

namespace fs = std::filesystem;

//! Tab-separated table with a header row.
struct Table
{
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string str() const
  {
    std::ostringstream os;
    for (std::size_t c = 0; c < columns.size(); ++c)
      os << (c ? "\t" : "") << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c)
        os << (c ? "\t" : "") << r[c];
      os << '\n';
    }
    return os.str();
  }
};

namespace detail {

inline std::string cell(const json& v)
{
  if (v.is_number_integer())
    return std::to_string(v.get<long long>());
  if (v.is_number())
    return io::format_double(v.get<double>());
  if (v.is_string())
    return v.get<std::string>();
  if (v.is_null())
    return "NA";
  return v.dump();
}

inline std::string curve_label(const json& c)
{
  std::string s = c.contains("estimator") ? c.at("estimator").get<std::string>()
                                          : c.at("data").get<std::string>();
  if (c.contains("N"))
    s += "_N" + std::to_string(c.at("N").get<long long>());
  if (c.contains("m"))
    s += "_m" + std::to_string(c.at("m").get<long long>());
  return s;
}

inline const json& array_or_empty(const json& j, const char* key)
{
  static const json empty = json::array();
  return j.contains(key) && j.at(key).is_array() ? j.at(key) : empty;
}

} // namespace detail

//! Tables derived from a results document: RMSE-vs-lead curves for the
//! forecasting experiments; a k-by-noise table and a method-by-noise
//! benchmark table for the smoother experiments. Missing results give
//! header-only tables.
inline std::vector<Table> emit_tables(const json& results)
{
  using detail::array_or_empty;
  using detail::cell;
  std::vector<Table> out;
  const std::string kind = results.value("kind", "");
  if (kind == "smoother") {
    const json& noise = array_or_empty(results, "noise");
    Table ks{ "smoother_k_sweep", { "k" }, {} };
    Table bench{ "benchmark", { "method" }, {} };
    for (const auto& n : noise) {
      ks.columns.push_back(n.get<std::string>());
      bench.columns.push_back(n.get<std::string>());
    }
    auto lookup = [&](const json& entries, const char* key, const json& value) {
      std::vector<std::string> row;
      for (const auto& n : noise) {
        std::string v = "NA";
        for (const auto& e : entries)
          if (e.at(key) == value && e.at("noise") == n)
            v = cell(e.at("rmse"));
        row.push_back(v);
      }
      return row;
    };
    for (const auto& k : array_or_empty(results, "k")) {
      std::vector<std::string> row{ cell(k) };
      for (auto& v : lookup(array_or_empty(results, "smoother"), "k", k))
        row.push_back(v);
      ks.rows.push_back(row);
    }
    const long long m_s = results.value("m_s", 0LL);
    for (const auto& k : array_or_empty(results, "k")) {
      std::vector<std::string> row{ "smoother_m" + std::to_string(m_s) + "_k" + cell(k) };
      for (auto& v : lookup(array_or_empty(results, "smoother"), "k", k))
        row.push_back(v);
      bench.rows.push_back(row);
    }
    std::vector<long long> counts;
    for (const auto& e : array_or_empty(results, "enkf")) {
      const long long c = e.at("observed").get<long long>();
      if (std::find(counts.begin(), counts.end(), c) == counts.end())
        counts.push_back(c);
    }
    for (long long c : counts) {
      std::vector<std::string> row{ "enkf_" + std::to_string(c) + "obs" };
      for (auto& v : lookup(array_or_empty(results, "enkf"), "observed", json(c)))
        row.push_back(v);
      bench.rows.push_back(row);
    }
    if (!array_or_empty(results, "noisy").empty()) {
      std::vector<std::string> row{ "noisy_observations" };
      for (const auto& n : noise) {
        std::string v = "NA";
        for (const auto& e : array_or_empty(results, "noisy"))
          if (e.at("noise") == n)
            v = cell(e.at("rmse"));
        row.push_back(v);
      }
      bench.rows.push_back(row);
    }
    out.push_back(std::move(ks));
    out.push_back(std::move(bench));
  } else {
    Table t{ "rmse_curves", { "lead", "time" }, {} };
    const json& curves = array_or_empty(results, "curves");
    for (const auto& c : curves)
      t.columns.push_back(detail::curve_label(c));
    const json& leads = array_or_empty(results, "leads");
    const json& times = array_or_empty(results, "lead_times");
    for (std::size_t l = 0; l < leads.size(); ++l) {
      std::vector<std::string> row{ cell(leads[l]), l < times.size() ? cell(times[l]) : "NA" };
      for (const auto& c : curves)
        row.push_back(l < c.at("rmse").size() ? cell(c.at("rmse")[l]) : "NA");
      t.rows.push_back(row);
    }
    out.push_back(std::move(t));
  }
  return out;
}

//! Flat name -> value map of every scalar result, used by compare_runs.
inline json metrics_from_results(const json& results)
{
  using detail::array_or_empty;
  json m = json::object();
  const std::string kind = results.value("kind", "");
  if (kind == "smoother") {
    for (const auto& e : array_or_empty(results, "smoother"))
      m["smoother." + e.at("noise").get<std::string>() + ".k" +
        std::to_string(e.at("k").get<long long>())] = e.at("rmse");
    for (const auto& e : array_or_empty(results, "enkf"))
      m["enkf." + e.at("noise").get<std::string>() + ".obs" +
        std::to_string(e.at("observed").get<long long>())] = e.at("rmse");
    for (const auto& e : array_or_empty(results, "noisy"))
      m["noisy." + e.at("noise").get<std::string>()] = e.at("rmse");
  } else {
    const json& leads = array_or_empty(results, "leads");
    for (const auto& c : array_or_empty(results, "curves")) {
      const std::string label = detail::curve_label(c);
      for (std::size_t l = 0; l < leads.size() && l < c.at("rmse").size(); ++l)
        m["rmse." + label + ".lead" + std::to_string(leads[l].get<long long>())] = c.at("rmse")[l];
    }
  }
  return m;
}

inline void write_text(const fs::path& path, const std::string& text)
{
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw Error(ErrorKind::invalid_input, "cannot write " + path.string());
  os << text;
}

inline std::string read_text(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::invalid_input, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_tables(const fs::path& dir, const std::vector<Table>& tables)
{
  fs::create_directories(dir);
  for (const auto& t : tables)
    write_text(dir / (t.name + ".tsv"), t.str());
}

struct RunInfo
{
  bool fast = false;
  int threads = 0;
  double wall_time = 0.0;
};

//! Writes the result bundle for `cfg` into dir:
//!   manifest.json   id, anchor, config hash, seed, versions, wall time
//!   config.json     effective configuration
//!   results.json    structured results
//!   metrics.json    flat metric map
//!   tables/*.tsv    tables derived from results.json
//!   predictions/*   sample predictions in the matrix text format
//! Every file except the wall-time field of the manifest is a deterministic
//! function of the configuration and seed.
inline void write_bundle(const fs::path& dir, const ExperimentConfig& cfg, const RunOutput& out,
                         const RunInfo& info)
{
  fs::create_directories(dir);
  json manifest{ { "id", cfg.id },
                 { "anchor", cfg.anchor },
                 { "kind", cfg.kind },
                 { "schema_version", schema_version },
                 { "config_hash", config_hash(cfg) },
                 { "seed", cfg.seed },
                 { "fast", info.fast },
                 { "versions",
                   { { "kaf", KAF_VERSION },
                     { "eigen",
                       std::to_string(EIGEN_WORLD_VERSION) + "." +
                         std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION) },
                     { "compiler", __VERSION__ } } },
                 { "wall_time_seconds", info.wall_time } };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "config.json", cfg.effective.dump(2) + "\n");
  write_text(dir / "results.json", out.results.dump(2) + "\n");
  write_text(dir / "metrics.json", metrics_from_results(out.results).dump(2) + "\n");
  write_tables(dir / "tables", emit_tables(out.results));
  if (!out.predictions.empty()) {
    fs::create_directories(dir / "predictions");
    for (const auto& p : out.predictions) {
      std::string meta = "columns=";
      for (std::size_t c = 0; c < p.columns.size(); ++c)
        meta += (c ? "," : "") + p.columns[c];
      io::write_matrix((dir / "predictions" / (p.name + ".txt")).string(), p.data, meta);
    }
  }
}

//! Per-metric tolerance |a - b| <= abs + rel * |a|.
struct Tolerance
{
  double abs = 0.0;
  double rel = 0.0;
};

//! Tolerance document:
//!   { "default": {"abs": x, "rel": y},
//!     "metrics": { "<name or prefix*>": {"abs": x, "rel": y}, ... } }
//! The longest matching pattern wins.
struct Tolerances
{
  Tolerance fallback;
  std::map<std::string, Tolerance> patterns;

  static Tolerances from_json(const json& j)
  {
    auto one = [](const json& t, const std::string& path) {
      if (!t.is_object())
        throw Error(ErrorKind::invalid_input, "tolerances " + path + ": expected an object");
      Tolerance r;
      r.abs = t.value("abs", 0.0);
      r.rel = t.value("rel", 0.0);
      if (!(r.abs >= 0.0) || !(r.rel >= 0.0))
        throw Error(ErrorKind::invalid_input, "tolerances " + path + ": must be >= 0");
      return r;
    };
    Tolerances t;
    if (!j.is_object())
      throw Error(ErrorKind::invalid_input, "tolerances: expected an object");
    if (j.contains("default"))
      t.fallback = one(j.at("default"), "default");
    if (j.contains("metrics"))
      for (const auto& [k, v] : j.at("metrics").items())
        t.patterns[k] = one(v, k);
    return t;
  }

  Tolerance lookup(const std::string& name) const
  {
    Tolerance best = fallback;
    std::size_t best_len = 0;
    bool found = false;
    for (const auto& [pat, tol] : patterns) {
      const bool prefix = !pat.empty() && pat.back() == '*';
      const std::string stem = prefix ? pat.substr(0, pat.size() - 1) : pat;
      const bool match = prefix ? name.compare(0, stem.size(), stem) == 0 : name == pat;
      if (match && (!found || stem.size() + (prefix ? 0 : 1) > best_len)) {
        best = tol;
        best_len = stem.size() + (prefix ? 0 : 1);
        found = true;
      }
    }
    return best;
  }
};

struct Comparison
{
  bool pass = true;
  json report;
};

//! Compares the metrics of bundle `a` (the reference) with bundle `b`. Every
//! metric of `a` must be present in `b` and agree within tolerance; extra
//! metrics of `b` are listed but not judged.
inline Comparison compare_metrics(const std::string& id_a, const json& a, const std::string& id_b,
                                  const json& b, const Tolerances& tol)
{
  if (id_a != id_b)
    throw Error(ErrorKind::invalid_input,
                "compare: experiment ids differ ('" + id_a + "' vs '" + id_b + "')");
  Comparison c;
  c.report["id"] = id_a;
  c.report["metrics"] = json::array();
  c.report["unjudged"] = json::array();
  for (const auto& [name, va] : a.items()) {
    json row{ { "metric", name }, { "reference", va } };
    const Tolerance t = tol.lookup(name);
    row["abs"] = t.abs;
    row["rel"] = t.rel;
    if (!b.contains(name)) {
      row["status"] = "missing";
      c.pass = false;
    } else if (!va.is_number() || !b.at(name).is_number()) {
      row["value"] = b.at(name);
      row["status"] = "non-finite";
      c.pass = false;
    } else {
      const double x = va.get<double>();
      const double y = b.at(name).get<double>();
      row["value"] = y;
      const bool ok = std::isfinite(y) && std::abs(x - y) <= t.abs + t.rel * std::abs(x);
      row["status"] = ok ? "pass" : "fail";
      c.pass = c.pass && ok;
    }
    c.report["metrics"].push_back(row);
  }
  for (const auto& [name, vb] : b.items())
    if (!a.contains(name))
      c.report["unjudged"].push_back(name);
  c.report["verdict"] = c.pass ? "pass" : "fail";
  return c;
}

inline std::string bundle_id(const fs::path& dir)
{
  return parse_json_text(read_text(dir / "manifest.json"), (dir / "manifest.json").string())
    .at("id")
    .get<std::string>();
}

inline json bundle_metrics(const fs::path& dir)
{
  return parse_json_text(read_text(dir / "metrics.json"), (dir / "metrics.json").string());
}

inline Comparison compare_runs(const fs::path& a, const fs::path& b, const Tolerances& tol)
{
  return compare_metrics(bundle_id(a), bundle_metrics(a), bundle_id(b), bundle_metrics(b), tol);
}

//! Relative paths of all files in a bundle, sorted.
inline std::vector<std::string> bundle_files(const fs::path& dir)
{
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

//! Bundle content with the manifest's wall-time field removed; equal digests
//! mean byte-identical bundles up to wall time.
inline std::string bundle_fingerprint(const fs::path& dir)
{
  std::string s;
  for (const auto& f : bundle_files(dir)) {
    std::string text = read_text(dir / f);
    if (f == "manifest.json") {
      json m = parse_json_text(text, f);
      m.erase("wall_time_seconds");
      text = m.dump(2);
    }
    s += f + "\n" + hex64(fnv1a(text)) + "\n";
  }
  return s;
}

} // namespace kaf::harness
