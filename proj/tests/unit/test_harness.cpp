#include "kaf/harness/bundle.hpp"
#include "kaf/harness/config.hpp"
#include "kaf/harness/experiments.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace kaf;
using namespace kaf::harness;

namespace {

fs::path scratch(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("kaf_harness_" + name);
  fs::remove_all(p);
  return p;
}

json smoother_doc()
{
  return parse_json_text(R"({
    // comments are allowed
    "schema_version": 1,
    "id": "tiny-smoother",
    "anchor": "unit test",
    "kind": "smoother",
    "seed": 5,
    "system": { "kind": "lorenz63", "obs_dt": 0.1 },
    "kernel": { "knn": 32 },
    "spinup": 10,
    "smoother": { "m_s": 5, "k": [1, 2], "L": 20 },
    "N": 400,
    "N_out": 120,
    "train_noise": { "kind": "gaussian", "variance": 4.0 },
    "test_noise": [ { "kind": "gaussian", "variance": 4.0 },
                    { "kind": "uniform", "half_width": 3.4641016151377544 } ],
    "enkf": { "ensemble_size": 16, "observed_counts": [1, 3] },
    "n_predictions": 10,
    "fast": { "N": 300 }
  })",
                         "inline");
}

json curve_doc()
{
  return parse_json_text(R"({
    "schema_version": 1,
    "id": "tiny-delay",
    "anchor": "unit test",
    "kind": "delay_forecast",
    "seed": 9,
    "system": { "kind": "lorenz96", "n": 5, "forcing": 8.0, "obs_dt": 0.015625 },
    "kernel": { "knn": 32 },
    "spinup": 10,
    "m": [2, 4],
    "leads": { "max": 8, "step": 4 },
    "N": 300,
    "N_out": 40,
    "estimators": { "nystrom": { "L": 20 }, "smoothing": {} }
  })",
                         "inline");
}

ExperimentConfig tiny(json doc, const ConfigOverrides& ov = {})
{
  return parse_config(std::move(doc), ov);
}

ErrorKind parse_error_kind(const json& doc)
{
  try {
    parse_config(doc);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::numerical;
}

} // namespace

TEST(Config, ParsesCommentsAndTypedFields)
{
  const ExperimentConfig cfg = tiny(smoother_doc());
  EXPECT_EQ(cfg.id, "tiny-smoother");
  EXPECT_EQ(cfg.kind, "smoother");
  const auto& c = std::get<SmootherExperimentConfig>(cfg.body);
  EXPECT_EQ(c.smoother.k, (std::vector<int>{ 1, 2 }));
  EXPECT_EQ(c.N, 400);
  ASSERT_EQ(c.test_noise.size(), 2u);
  EXPECT_EQ(c.test_noise[1].label, "uniform");
  EXPECT_NEAR(c.test_noise[1].variance, 4.0, 1e-12);
  ASSERT_TRUE(c.enkf.has_value());
  EXPECT_EQ(c.enkf->inflation, 1.02);
}

TEST(Config, FastOverlayAndSeedOverride)
{
  const ExperimentConfig full = tiny(smoother_doc());
  const ExperimentConfig fast = tiny(smoother_doc(), { true, 77 });
  EXPECT_EQ(std::get<SmootherExperimentConfig>(fast.body).N, 300);
  EXPECT_EQ(fast.seed, 77u);
  EXPECT_NE(config_hash(full), config_hash(fast));
  EXPECT_EQ(config_hash(full), config_hash(tiny(smoother_doc())));
  EXPECT_EQ(config_hash(full).size(), 16u);
  EXPECT_FALSE(full.effective.contains("fast"));
}

TEST(Config, RejectsInvalidDocuments)
{
  json doc = smoother_doc();
  doc["schema_version"] = 2;
  EXPECT_EQ(parse_error_kind(doc), ErrorKind::invalid_input);
  doc = smoother_doc();
  doc["kind"] = "unknown";
  EXPECT_EQ(parse_error_kind(doc), ErrorKind::invalid_input);
  doc = smoother_doc();
  doc["smoother"]["k"] = json::array({ 6 });
  EXPECT_EQ(parse_error_kind(doc), ErrorKind::invalid_input);
  doc = smoother_doc();
  doc.erase("N");
  EXPECT_EQ(parse_error_kind(doc), ErrorKind::invalid_input);
  doc = smoother_doc();
  doc["kernel"]["knn"] = "many";
  EXPECT_EQ(parse_error_kind(doc), ErrorKind::invalid_input);
  EXPECT_THROW(parse_json_text("{ \"a\": ", "inline"), Error);
}

TEST(Config, BundledConfigsValidateAndNameTheirAnchor)
{
  int count = 0;
  for (const auto& e : fs::directory_iterator(fs::path(KAF_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json")
      continue;
    ++count;
    for (bool fast : { false, true }) {
      const ExperimentConfig cfg = load_config(e.path().string(), { fast, std::nullopt });
      EXPECT_EQ(cfg.id, e.path().stem().string());
      EXPECT_FALSE(cfg.anchor.empty());
    }
  }
  EXPECT_EQ(count, 9);
}

TEST(Tables, EmptyResultsGiveHeaderOnlyTables)
{
  const auto curves = emit_tables(json{ { "kind", "delay_forecast" } });
  ASSERT_EQ(curves.size(), 1u);
  EXPECT_EQ(curves[0].str(), "lead\ttime\n");
  const auto sm = emit_tables(json{ { "kind", "smoother" } });
  ASSERT_EQ(sm.size(), 2u);
  EXPECT_EQ(sm[0].str(), "k\n");
  EXPECT_EQ(sm[1].str(), "method\n");
}

TEST(Tables, BenchmarkLayout)
{
  json r{ { "kind", "smoother" },
          { "k", { 3 } },
          { "m_s", 6 },
          { "noise", { "gaussian", "student_t", "uniform" } },
          { "smoother", json::array() },
          { "enkf", json::array() },
          { "noisy", json::array() } };
  for (const std::string n : { "gaussian", "student_t", "uniform" }) {
    r["smoother"].push_back({ { "k", 3 }, { "noise", n }, { "rmse", 0.5 } });
    r["noisy"].push_back({ { "noise", n }, { "rmse", 1.0 } });
    for (int c : { 10, 30, 40 })
      r["enkf"].push_back({ { "observed", c }, { "noise", n }, { "rmse", c == 10 ? json() : json(0.25) } });
  }
  const auto t = emit_tables(r);
  const Table& bench = t[1];
  EXPECT_EQ(bench.columns, (std::vector<std::string>{ "method", "gaussian", "student_t", "uniform" }));
  std::vector<std::string> names;
  for (const auto& row : bench.rows)
    names.push_back(row.front());
  EXPECT_EQ(names, (std::vector<std::string>{ "smoother_m6_k3", "enkf_10obs", "enkf_30obs",
                                              "enkf_40obs", "noisy_observations" }));
  EXPECT_EQ(bench.rows[1][1], "NA");
  EXPECT_EQ(bench.rows[2][1], "0.25");
  EXPECT_EQ(emit_tables(r)[1].str(), bench.str());
  const json m = metrics_from_results(r);
  EXPECT_EQ(m.at("smoother.uniform.k3"), 0.5);
  EXPECT_EQ(m.at("enkf.gaussian.obs30"), 0.25);
  EXPECT_TRUE(m.at("enkf.gaussian.obs10").is_null());
}

TEST(Tolerances, LongestPatternWins)
{
  const Tolerances t = Tolerances::from_json(json::parse(R"({
    "default": { "abs": 1.0 },
    "metrics": { "rmse.*": { "abs": 0.1 }, "rmse.nystrom*": { "rel": 0.2 },
                 "rmse.nystrom.lead0": { "abs": 0.0 } } })"));
  EXPECT_EQ(t.lookup("other").abs, 1.0);
  EXPECT_EQ(t.lookup("rmse.smoothing.lead1").abs, 0.1);
  EXPECT_EQ(t.lookup("rmse.nystrom.lead1").rel, 0.2);
  EXPECT_EQ(t.lookup("rmse.nystrom.lead0").abs, 0.0);
  EXPECT_EQ(t.lookup("rmse.nystrom.lead0").rel, 0.0);
  EXPECT_THROW(Tolerances::from_json(json::parse(R"({"default": {"abs": -1}})")), Error);
}

TEST(Compare, IdenticalPassAndPerturbationFails)
{
  const json a{ { "x", 1.0 }, { "y", 2.0 } };
  const Tolerances tol = Tolerances::from_json(json::parse(R"({"default": {"abs": 0.01}})"));
  EXPECT_TRUE(compare_metrics("e", a, "e", a, tol).pass);
  json b = a;
  b["y"] = 2.5;
  const Comparison c = compare_metrics("e", a, "e", b, tol);
  EXPECT_FALSE(c.pass);
  bool named = false;
  for (const auto& row : c.report.at("metrics"))
    if (row.at("metric") == "y")
      named = row.at("status") == "fail";
  EXPECT_TRUE(named);
  json missing{ { "x", 1.0 } };
  EXPECT_FALSE(compare_metrics("e", a, "e", missing, tol).pass);
  json null_value = a;
  null_value["x"] = nullptr;
  EXPECT_FALSE(compare_metrics("e", a, "e", null_value, tol).pass);
  EXPECT_THROW(compare_metrics("e", a, "f", a, tol), Error);
}

TEST(Experiments, SmootherBundleIsDeterministic)
{
  const ExperimentConfig cfg = tiny(smoother_doc());
  const fs::path a = scratch("smoother_a"), b = scratch("smoother_b");
  write_bundle(a, cfg, run_experiment(cfg), { false, 0, 1.0 });
  write_bundle(b, cfg, run_experiment(cfg), { false, 0, 2.0 });
  EXPECT_EQ(bundle_fingerprint(a), bundle_fingerprint(b));
  const std::vector<std::string> files = bundle_files(a);
  for (const char* f : { "manifest.json", "config.json", "results.json", "metrics.json",
                         "tables/benchmark.tsv", "tables/smoother_k_sweep.tsv" })
    EXPECT_NE(std::find(files.begin(), files.end(), f), files.end()) << f;
  const json m = bundle_metrics(a);
  EXPECT_TRUE(m.contains("smoother.gaussian.k2"));
  EXPECT_TRUE(m.contains("enkf.uniform.obs3"));
  EXPECT_TRUE(m.contains("noisy.gaussian"));
  const Tolerances tol = Tolerances::from_json(json::parse(R"({"default": {"abs": 0}})"));
  EXPECT_TRUE(compare_runs(a, b, tol).pass);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiments, DelayForecastCurves)
{
  const ExperimentConfig cfg = tiny(curve_doc());
  const RunOutput out = run_experiment(cfg);
  const json& r = out.results;
  EXPECT_EQ(r.at("leads"), json({ 0, 4, 8 }));
  ASSERT_EQ(r.at("curves").size(), 4u);
  for (const auto& c : r.at("curves"))
    for (const auto& v : c.at("rmse"))
      EXPECT_TRUE(v.is_number() && v.get<double>() >= 0.0);
  const auto tables = emit_tables(r);
  EXPECT_EQ(tables[0].columns.size(), 6u);
  EXPECT_EQ(tables[0].rows.size(), 3u);
  const json m = metrics_from_results(r);
  EXPECT_TRUE(m.contains("rmse.nystrom_m4.lead8"));
  EXPECT_TRUE(m.contains("rmse.smoothing_m2.lead0"));
}

TEST(Experiments, ConditionalExpectationAgainstOracle)
{
  const json doc = parse_json_text(R"({
    "schema_version": 1, "id": "tiny-ce", "anchor": "unit test",
    "kind": "conditional_expectation", "seed": 3,
    "system": { "kind": "lorenz96", "n": 5, "forcing": 8.0, "obs_dt": 0.015625 },
    "kernel": { "knn": 32 }, "initial": "gaussian", "observed": [0],
    "leads": { "max": 4, "step": 2 }, "N": [200, 400], "N_out": 10, "n_mc": 50,
    "estimators": { "nystrom": { "L": 10 }, "smoothing": {} } })",
                                   "inline");
  const RunOutput out = run_experiment(parse_config(doc));
  EXPECT_EQ(out.results.at("curves").size(), 4u);
}

TEST(Experiments, SmoothThenPredictCurves)
{
  const json doc = parse_json_text(R"({
    "schema_version": 1, "id": "tiny-stp", "anchor": "unit test",
    "kind": "smooth_then_predict", "seed": 4,
    "system": { "kind": "lorenz96", "n": 5, "forcing": 8.0, "obs_dt": 0.015625 },
    "kernel": { "knn": 32 }, "spinup": 10, "m": [2, 4],
    "leads": { "max": 8, "step": 4 }, "N": 300, "N_out": 30,
    "smoother": { "m_s": 4, "k": 2, "L": 15 },
    "noise": { "kind": "gaussian", "variance": 1.0 } })",
                                   "inline");
  const RunOutput out = run_experiment(parse_config(doc));
  const json m = metrics_from_results(out.results);
  EXPECT_TRUE(m.contains("rmse.denoised_m4.lead8"));
  EXPECT_TRUE(m.contains("rmse.clean_m2.lead0"));
}
