#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "msp/config.hpp"

namespace msp::experiments {

/// One CSV row. For horizon sweeps (bias_vs_horizon, nonlinear) the N column
/// holds the horizon H.
struct Record {
  std::string kind;
  std::string cls;
  std::int64_t N = 0;
  int replica = 0;
  std::uint64_t seed = 0;
  std::string quantity;
  double value = 0.0;
  std::optional<double> theory_ref;
};

/// Runs the configured experiment. The result depends only on the config
/// (not on the worker count) and is sorted by (class, N, replica).
std::vector<Record> run(const config::ExperimentConfig& cfg);

/// Closed-form quantities for the configured system at cfg.horizon: rates
/// (plus the Monte Carlo estimate) when fully observed, biases and the
/// single-step predictor's spectral radius otherwise, and an ordering flag.
std::vector<Record> theory_report(const config::ExperimentConfig& cfg);

inline constexpr const char* kCsvHeader = "kind,class,N,replica,seed,quantity,value,theory_ref";

void write_csv(std::ostream& out, const std::vector<Record>& records);
std::string to_csv(const std::vector<Record>& records);
void write_csv_file(const std::string& path, const std::vector<Record>& records);

struct SummaryRow {
  std::string cls;
  std::int64_t N = 0;
  std::string quantity;
  double mean = 0.0;
  double std_error = 0.0;
  int count = 0;
  int failures = 0;
  std::optional<double> theory_ref;
};

/// Mean and standard error over replicas per (class, N, quantity); failed
/// replicas are counted, not averaged.
std::vector<SummaryRow> summarize(const std::vector<Record>& records);
void print_summary(std::ostream& out, const std::vector<SummaryRow>& rows);

struct ExperimentInfo {
  std::string name;
  std::string description;
};
std::vector<ExperimentInfo> list_experiments();

}  // namespace msp::experiments
