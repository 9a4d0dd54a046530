// msp: experiment driver.
//   msp theory --config FILE [--out CSV] [--seed N]
//   msp run --config FILE [--out CSV] [--workers N] [--seed N]
//   msp list-experiments
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "msp/config.hpp"
#include "msp/errors.hpp"
#include "msp/experiments.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

struct Common {
  std::string config_path;
  std::string out;
  int workers = -1;
  std::optional<std::uint64_t> seed;
};

msp::config::ExperimentConfig load(const Common& c) {
  msp::config::ExperimentConfig cfg = msp::config::load(c.config_path);
  if (!c.out.empty()) cfg.out = c.out;
  if (c.workers >= 0) cfg.workers = c.workers;
  if (c.seed) cfg.seed = *c.seed;
  msp::config::validate(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_workers) {
  cmd->add_option("--config", c.config_path, "experiment config file")->required();
  cmd->add_option("--out", c.out, "CSV output path (overrides the config)");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  if (with_workers) cmd->add_option("--workers", c.workers, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-step vs single-step predictors for linear systems"};
  app.require_subcommand(1);

  Common theory_opts, run_opts;
  CLI::App* theory_cmd = app.add_subcommand("theory", "closed-form rates or biases for the configured system");
  add_common(theory_cmd, theory_opts, false);
  CLI::App* run_cmd = app.add_subcommand("run", "run the configured experiment and write CSV records");
  add_common(run_cmd, run_opts, true);
  CLI::App* list_cmd = app.add_subcommand("list-experiments", "list the experiment kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (list_cmd->parsed()) {
      for (const auto& info : msp::experiments::list_experiments())
        std::cout << info.name << "\t" << info.description << "\n";
      return 0;
    }
    const bool is_run = run_cmd->parsed();
    const msp::config::ExperimentConfig cfg = load(is_run ? run_opts : theory_opts);
    const auto records = is_run ? msp::experiments::run(cfg) : msp::experiments::theory_report(cfg);
    msp::experiments::write_csv_file(cfg.out, records);
    msp::experiments::print_summary(std::cout, msp::experiments::summarize(records));
    std::cout << "wrote " << records.size() << " records to " << cfg.out << "\n";
    return 0;
  } catch (const msp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    // Solver, singularity, divergence and domain failures.
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  }
}
