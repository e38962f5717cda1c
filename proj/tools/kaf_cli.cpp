#include "kaf/harness/bundle.hpp"
#include "kaf/harness/config.hpp"
#include "kaf/harness/experiments.hpp"
#include "kaf/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

enum ExitCode
{
  exit_ok = 0,
  exit_invalid_config = 2,
  exit_numerical = 3,
  exit_acceptance = 4
};

int exit_code_for(const kaf::Error& e)
{
  return e.kind() == kaf::ErrorKind::invalid_input ? exit_invalid_config : exit_numerical;
}

void report_error(const std::string& stage, const kaf::Error& e)
{
  const kaf::harness::json err{ { "error", { { "stage", stage },
                                             { "kind", kaf::to_string(e.kind()) },
                                             { "message", e.what() } } } };
  std::cerr << err.dump() << "\n";
}

std::string default_out_dir()
{
  if (const char* env = std::getenv("KAF_OUT_DIR"); env && *env)
    return env;
  return "runs";
}

} // namespace

int main(int argc, char** argv)
{
  namespace h = kaf::harness;
  CLI::App app{ "Kernel analog forecasting experiment runner" };
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 0;
  bool fast = false;
  bool quiet = false;
  app.add_option("--seed", seed, "Override the configuration seed");
  app.add_option("--out-dir", out_dir,
                 "Output directory for bundles (default: $KAF_OUT_DIR or ./runs)");
  app.add_option("--threads", threads, "Worker threads (default: all cores)")
    ->check(CLI::NonNegativeNumber);
  app.add_flag("--fast", fast, "Apply the configuration's reduced CI tier");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment and write its result bundle");
  run->add_option("config", config_path, "Experiment configuration (JSON)")->required();

  std::string bundle_path;
  auto* tables = app.add_subcommand("tables", "Regenerate the tables of a result bundle");
  tables->add_option("bundle", bundle_path, "Result bundle directory")->required();

  std::string a_path, b_path, tol_path;
  auto* compare = app.add_subcommand("compare", "Compare the metrics of two result bundles");
  compare->add_option("a", a_path, "Reference bundle")->required();
  compare->add_option("b", b_path, "Bundle under test")->required();
  compare->add_option("tolerances", tol_path, "Tolerance file (JSON)")->required();

  std::string check_path;
  auto* check = app.add_subcommand("validate", "Validate a configuration without running it");
  check->add_option("config", check_path, "Experiment configuration (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_invalid_config;
  }
  kaf::set_threads(threads);
  if (out_dir.empty())
    out_dir = default_out_dir();

  if (*check) {
    try {
      const h::ExperimentConfig cfg = h::load_config(check_path, { fast, seed });
      std::cout << cfg.id << " ok (" << cfg.kind << ", hash " << h::config_hash(cfg) << ")\n";
      return exit_ok;
    } catch (const kaf::Error& e) {
      report_error("config", e);
      return exit_invalid_config;
    }
  }

  if (*run) {
    h::ExperimentConfig cfg;
    try {
      cfg = h::load_config(config_path, { fast, seed });
    } catch (const kaf::Error& e) {
      report_error("config", e);
      return exit_invalid_config;
    } catch (const std::exception& e) {
      report_error("config", kaf::Error(kaf::ErrorKind::invalid_input, e.what()));
      return exit_invalid_config;
    }
    const auto start = std::chrono::steady_clock::now();
    h::Logger log;
    if (!quiet)
      log = [&](const std::string& msg) {
        const double t =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cerr << "[" << cfg.id << " " << static_cast<long>(t) << "s] " << msg << "\n";
      };
    try {
      const h::RunOutput out = h::run_experiment(cfg, log);
      const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const h::fs::path dir = h::fs::path(out_dir) / cfg.id;
      h::write_bundle(dir, cfg, out, { fast, threads, wall });
      std::cout << dir.string() << "\n";
      return exit_ok;
    } catch (const kaf::Error& e) {
      report_error("run", e);
      return exit_code_for(e);
    } catch (const std::exception& e) {
      report_error("run", kaf::Error(kaf::ErrorKind::numerical, e.what()));
      return exit_numerical;
    }
  }

  if (*tables) {
    try {
      const h::fs::path dir(bundle_path);
      const h::json results =
        h::parse_json_text(h::read_text(dir / "results.json"), (dir / "results.json").string());
      h::write_tables(dir / "tables", h::emit_tables(results));
      std::cout << (dir / "tables").string() << "\n";
      return exit_ok;
    } catch (const kaf::Error& e) {
      report_error("tables", e);
      return exit_code_for(e);
    }
  }

  if (*compare) {
    try {
      const h::Tolerances tol = h::Tolerances::from_json(h::read_json_file(tol_path));
      const h::Comparison c = h::compare_runs(a_path, b_path, tol);
      std::cout << c.report.dump(2) << "\n";
      return c.pass ? exit_ok : exit_acceptance;
    } catch (const kaf::Error& e) {
      report_error("compare", e);
      return exit_code_for(e);
    }
  }
  return exit_ok;
}
