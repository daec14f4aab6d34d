// spinlab command-line workbench.
//   spinlab run <config.json> [--validate-only] [--output-dir DIR]
//   spinlab plotdata <record.json>... --figure <name> [--output-dir DIR]
//   spinlab selftest
// Global: --seed N, --threads N (fallback: SPINLAB_THREADS).
// Exit codes: 0 ok, 2 validation error, 3 numeric failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinlab/parallel.hpp"
#include "spinlab/selftest.hpp"
#include "spinlab/workbench.hpp"

namespace {

namespace wb = spinlab::workbench;

int cmd_run(const std::string& path, const wb::RunOptions& opts) {
  wb::json cfg;
  try {
    cfg = wb::json::parse(spinlab::io::read_file(path));
  } catch (const wb::json::exception& e) {
    throw spinlab::ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  const wb::json rec = wb::run_experiment(cfg, opts);
  for (const auto& w : rec.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << "\n";
  if (opts.validate_only) {
    std::cout << "config ok: " << rec.at("config").at("kind").get<std::string>() << "\n";
    return 0;
  }
  const std::string dir = rec.at("config").at("output_dir").get<std::string>();
  for (const auto& o : rec.at("outputs")) std::cout << dir << "/" << o.at("file").get<std::string>() << "\n";
  std::cout << dir << "/record.json\n";
  return 0;
}

int cmd_selftest() {
  int failed = 0;
  for (const auto& c : spinlab::identity_checks()) {
    std::printf("%s  %-60s err=%.3g tol=%.3g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.error, c.tolerance);
    failed += c.pass ? 0 : 1;
  }
  std::printf("%s: %d failed\n", failed ? "selftest FAILED" : "selftest passed", failed);
  return failed ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spinlab: quantum spin-dynamics workbench"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--threads", threads, "Worker threads (default: SPINLAB_THREADS, else all cores)");

  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  bool validate_only = false;
  std::optional<std::string> run_out;
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_flag("--validate-only", validate_only, "Check the config and exit");
  run->add_option("--output-dir", run_out, "Override the config output_dir");

  auto* plot = app.add_subcommand("plotdata", "Write gnuplot data and a scene JSON for a figure");
  std::vector<std::string> records;
  std::string figure;
  std::optional<std::string> plot_out;
  plot->add_option("records", records, "Run record(s) (record.json)")->required();
  plot->add_option("--figure", figure, "Figure name")->required();
  plot->add_option("--output-dir", plot_out, "Directory for the plot files (default: next to the first record)");

  auto* self = app.add_subcommand("selftest", "Run the exact-identity checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (threads) {
      if (*threads < 1) throw spinlab::ValidationError("--threads must be >= 1");
      spinlab::set_thread_count(*threads);
    } else {
      spinlab::set_thread_count(spinlab::threads_from_env());
    }
    if (*run) {
      wb::RunOptions opts;
      opts.seed_override = seed;
      opts.validate_only = validate_only;
      opts.output_dir_override = run_out;
      return cmd_run(config_path, opts);
    }
    if (*plot) {
      std::cout << wb::emit_plotdata(records, figure, plot_out) << "\n";
      return 0;
    }
    if (*self) return cmd_selftest();
  } catch (const spinlab::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const spinlab::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
