#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msp/linalg.hpp"
#include "msp/lti_core.hpp"
#include "msp/nonlinear.hpp"
#include "msp/predictors.hpp"

namespace msp::config {

enum class ExperimentKind {
  WellspecConvergence,
  MisspecConvergence,
  BiasVsHorizon,
  LqrWellspec,
  SpectralRadiusMisspec,
  Nonlinear,
};

std::string_view kind_name(ExperimentKind kind);
ExperimentKind parse_kind(std::string_view name);
const std::vector<ExperimentKind>& all_kinds();

/// Everything a run depends on. Matrix fields override the preset when set.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::WellspecConvergence;
  std::string system = "wellspec";
  double a = 0.5;
  std::optional<Matrix> A, B, Bw, C, Dv;

  int horizon = 5;
  std::vector<int> horizons{5};
  std::vector<std::int64_t> dataset_sizes{100, 250, 500, 1000, 2000, 3000};
  int replicas = 300;
  std::uint64_t seed = 1;

  double adam_step_size = 1e-2;
  int adam_max_iters = 10000;
  double adam_grad_tol = 1e-8;

  double clip = 1e3;

  double mu = 0.9;
  double lambda = 0.9;
  double sigma_w = 0.1;
  std::optional<double> sigma_v;  // preset value unless given
  int eval_factor = 10;

  std::int64_t mc_samples = 1'000'000;
  int mc_max_lag = 200;

  std::string out = "results.csv";
  int workers = 0;

  bool operator==(const ExperimentConfig& other) const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated keys,
/// malformed values and inconsistent settings raise ConfigError.
ExperimentConfig parse(std::string_view text);
ExperimentConfig load(const std::string& path);

/// Canonical text form; parse(serialize(c)) == c.
std::string serialize(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

/// Matrices use rows separated by ';' and entries by ','; "none" is an empty block.
Matrix parse_matrix(std::string_view text, Eigen::Index rows_if_empty = 0);
std::string format_matrix(const Matrix& m);

/// LTI system named by cfg.system (wellspec, misspec, misspec_control, example1, custom)
/// with any matrix overrides applied.
lti::LtiSystem build_system(const ExperimentConfig& cfg);

/// Koopman benchmark for koopman_wellspec / koopman_misspec (C may be overridden).
nonlinear::KoopmanSystem build_koopman(const ExperimentConfig& cfg);

bool is_koopman(const ExperimentConfig& cfg);

predictors::AdamOptions adam_options(const ExperimentConfig& cfg);

}  // namespace msp::config
