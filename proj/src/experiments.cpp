#include "msp/experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "msp/control.hpp"
#include "msp/errors.hpp"
#include "msp/nonlinear.hpp"
#include "msp/parallel.hpp"
#include "msp/predictors.hpp"
#include "msp/random.hpp"
#include "msp/theory.hpp"

namespace msp::experiments {

namespace {

using config::ExperimentConfig;
using config::ExperimentKind;
using predictors::PredictorClass;

constexpr PredictorClass kClasses[] = {PredictorClass::SingleStep, PredictorClass::MultiStep,
                                       PredictorClass::Intermediate};

std::uint64_t kind_tag(ExperimentKind kind) { return std::uint64_t(kind) + 1; }

std::string cls(PredictorClass c) { return std::string(predictors::label(c)); }

struct Sink {
  std::string kind;
  std::vector<Record> rows;

  void add(std::string c, std::int64_t n, int replica, std::uint64_t seed, std::string quantity, double value,
           std::optional<double> ref = std::nullopt) {
    rows.push_back(Record{kind, std::move(c), n, replica, seed, std::move(quantity), value, ref});
  }
  void add_failure(std::int64_t n, int replica, std::uint64_t seed) {
    for (PredictorClass c : kClasses) add(cls(c), n, replica, seed, "failed", 1.0);
  }
};

void sort_records(std::vector<Record>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const Record& a, const Record& b) {
    return std::tie(a.cls, a.N, a.replica) < std::tie(b.cls, b.N, b.replica);
  });
}

// Fitted predictors of one dataset, all expressed as H-step maps.
struct FittedTriple {
  predictors::Predictor ss, ms, intermediate;

  const predictors::Predictor& get(PredictorClass c) const {
    return c == PredictorClass::SingleStep ? ss : c == PredictorClass::MultiStep ? ms : intermediate;
  }
};

FittedTriple fit_all(const predictors::Dataset& data, int H, const predictors::AdamOptions& adam) {
  const predictors::FitReport ss = predictors::fit_single_step(data);
  const predictors::FitReport ms = predictors::fit_multi_step(data, H);
  const predictors::FitReport im =
      predictors::fit_intermediate(data, H, adam, predictors::SingleStepParams{ss.predictor.Gy(), ss.predictor.Gu()});
  return FittedTriple{predictors::rollout_composition(ss.predictor.Gy(), ss.predictor.Gu(), H), ms.predictor,
                      im.predictor};
}

struct Task {
  std::int64_t N;
  int replica;
  std::uint64_t seed;
};

std::vector<Task> make_tasks(const ExperimentConfig& cfg) {
  std::vector<Task> tasks;
  for (std::int64_t n : cfg.dataset_sizes)
    for (int r = 0; r < cfg.replicas; ++r)
      tasks.push_back(Task{n, r, derive_seed(cfg.seed, {kind_tag(cfg.kind), std::uint64_t(n), std::uint64_t(r)})});
  return tasks;
}

// Population loss per class for each (N, replica); nullopt marks a failed replica.
using LossTriple = std::optional<std::array<double, 3>>;

template <typename LossFn>
std::vector<LossTriple> convergence_losses(const ExperimentConfig& cfg, const lti::LtiSystem& system,
                                           const std::vector<Task>& tasks, LossFn&& loss) {
  const predictors::AdamOptions adam = config::adam_options(cfg);
  return parallel_map<LossTriple>(
      tasks.size(),
      [&](std::size_t i) -> LossTriple {
        try {
          const predictors::Dataset data = predictors::Dataset::from(lti::simulate(system, tasks[i].N, tasks[i].seed));
          const FittedTriple fits = fit_all(data, cfg.horizon, adam);
          std::array<double, 3> out{};
          for (std::size_t c = 0; c < 3; ++c) out[c] = loss(fits.get(kClasses[c]).G());
          return out;
        } catch (const std::exception&) {
          return std::nullopt;
        }
      },
      cfg.workers);
}

void wellspec_convergence(const ExperimentConfig& cfg, Sink& sink) {
  const lti::LtiSystem system = config::build_system(cfg);
  const int H = cfg.horizon;
  const predictors::WellSpecEvaluator eval(system, H);
  const double rates[3] = {theory::ss_rate(system, H), theory::ms_rate(system, H),
                           theory::intermediate_rate_closed_form(system, H)};
  const std::vector<Task> tasks = make_tasks(cfg);
  const auto losses = convergence_losses(cfg, system, tasks, [&](const Matrix& G) { return eval.loss(G); });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    if (!losses[i]) {
      sink.add_failure(t.N, t.replica, t.seed);
      continue;
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const double L = (*losses[i])[c];
      sink.add(cls(kClasses[c]), t.N, t.replica, t.seed, "loss", L, eval.irreducible());
      sink.add(cls(kClasses[c]), t.N, t.replica, t.seed, "scaled_excess_loss",
               double(t.N) * (L - eval.irreducible()), rates[c]);
    }
  }
}

void misspec_convergence(const ExperimentConfig& cfg, Sink& sink) {
  const lti::LtiSystem system = config::build_system(cfg);
  const int H = cfg.horizon;
  const lti::InnovationsForm innov = lti::kalman_innovations(system);
  const predictors::MisSpecEvaluator eval(innov, system, H);
  const theory::BiasReport bias = theory::bias_report(system, H);
  const double refs[3] = {bias.ss_bias, bias.ms_bias, bias.intermediate_bias};
  const std::vector<Task> tasks = make_tasks(cfg);
  const auto losses = convergence_losses(cfg, system, tasks, [&](const Matrix& G) { return eval.loss(G); });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    if (!losses[i]) {
      sink.add_failure(t.N, t.replica, t.seed);
      continue;
    }
    for (std::size_t c = 0; c < 3; ++c) sink.add(cls(kClasses[c]), t.N, t.replica, t.seed, "loss", (*losses[i])[c], refs[c]);
  }
}

void bias_vs_horizon(const ExperimentConfig& cfg, Sink& sink) {
  const lti::LtiSystem system = config::build_system(cfg);
  for (int H : cfg.horizons) {
    const theory::BiasReport b = theory::bias_report(system, H);
    sink.add("ss", H, 0, 0, "bias", b.ss_bias);
    sink.add("ms", H, 0, 0, "bias", b.ms_bias);
    sink.add("intermediate", H, 0, 0, "bias", b.intermediate_bias);
  }
}

void control_sweep(const ExperimentConfig& cfg, Sink& sink, bool with_reference) {
  const lti::LtiSystem system = config::build_system(cfg);
  const int H = cfg.horizon;
  std::optional<double> exact;
  if (with_reference) {
    const lti::WellSpecRollout r = lti::build_rollout_wellspec(system, H);
    const control::MpcGain g = control::mpc_gain(r.G_star, H, system.dy(), system.du());
    const control::ControlReport rep = control::closed_loop_eval(system, g, cfg.clip);
    exact = rep.clipped_cost;
    sink.add("exact", 0, 0, 0, "clipped_cost", rep.clipped_cost);
    sink.add("exact", 0, 0, 0, "spectral_radius", rep.closed_loop_spectral_radius);
  }
  control::SweepOptions opt;
  opt.adam = config::adam_options(cfg);
  opt.clip = cfg.clip;
  opt.workers = cfg.workers;
  opt.kind_tag = kind_tag(cfg.kind);
  std::vector<Eigen::Index> sizes(cfg.dataset_sizes.begin(), cfg.dataset_sizes.end());
  const auto cells = control::stabilization_sweep(system, H, sizes, cfg.replicas, cfg.seed, opt);
  for (const control::SweepCell& cell : cells) {
    if (cell.failed) {
      sink.add_failure(cell.N, cell.replica, cell.seed);
      continue;
    }
    const control::ControlReport* reps[3] = {&cell.ss, &cell.ms, &cell.intermediate};
    for (std::size_t c = 0; c < 3; ++c) {
      const std::string name = cls(kClasses[c]);
      sink.add(name, cell.N, cell.replica, cell.seed, "spectral_radius", reps[c]->closed_loop_spectral_radius);
      sink.add(name, cell.N, cell.replica, cell.seed, "clipped_cost", reps[c]->clipped_cost);
      if (exact) sink.add(name, cell.N, cell.replica, cell.seed, "cost_gap", std::abs(reps[c]->clipped_cost - *exact));
    }
  }
}

void nonlinear_kind(const ExperimentConfig& cfg, Sink& sink) {
  const nonlinear::KoopmanSystem sys = config::build_koopman(cfg);
  nonlinear::ComparisonOptions opt;
  opt.adam = config::adam_options(cfg);
  opt.eval_factor = cfg.eval_factor;
  opt.workers = cfg.workers;
  opt.kind_tag = kind_tag(cfg.kind);
  const auto cells =
      nonlinear::nonlinear_comparison(sys, cfg.horizons, cfg.dataset_sizes.front(), cfg.replicas, cfg.seed, opt);
  for (const nonlinear::ComparisonCell& cell : cells) {
    if (cell.failed) {
      sink.add_failure(cell.horizon, cell.replica, cell.seed);
      continue;
    }
    sink.add("ss", cell.horizon, cell.replica, cell.seed, "eval_loss", cell.ss);
    sink.add("ms", cell.horizon, cell.replica, cell.seed, "eval_loss", cell.ms);
    sink.add("intermediate", cell.horizon, cell.replica, cell.seed, "eval_loss", cell.intermediate);
  }
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Record> run(const ExperimentConfig& cfg) {
  config::validate(cfg);
  Sink sink{std::string(config::kind_name(cfg.kind)), {}};
  switch (cfg.kind) {
    case ExperimentKind::WellspecConvergence: wellspec_convergence(cfg, sink); break;
    case ExperimentKind::MisspecConvergence: misspec_convergence(cfg, sink); break;
    case ExperimentKind::BiasVsHorizon: bias_vs_horizon(cfg, sink); break;
    case ExperimentKind::LqrWellspec: control_sweep(cfg, sink, true); break;
    case ExperimentKind::SpectralRadiusMisspec: control_sweep(cfg, sink, false); break;
    case ExperimentKind::Nonlinear: nonlinear_kind(cfg, sink); break;
  }
  sort_records(sink.rows);
  return std::move(sink.rows);
}

std::vector<Record> theory_report(const ExperimentConfig& cfg) {
  config::validate(cfg);
  if (config::is_koopman(cfg)) throw ConfigError("theory: no closed-form quantities for the Koopman benchmark");
  const lti::LtiSystem system = config::build_system(cfg);
  const int H = cfg.horizon;
  Sink sink{"theory", {}};
  if (system.is_fully_observed()) {
    const theory::RateReport r = theory::rate_report(system, H);
    theory::MonteCarloConfig mc;
    mc.T = cfg.mc_samples;
    mc.max_lag = cfg.mc_max_lag;
    mc.seed = cfg.seed;
    const theory::RateEstimate est = theory::intermediate_rate(system, H, mc);
    sink.add("ss", H, 0, 0, "rate", r.ss_rate);
    sink.add("ms", H, 0, 0, "rate", r.ms_rate);
    sink.add("intermediate", H, 0, 0, "rate", r.intermediate_rate);
    sink.add("intermediate", H, 0, 0, "rate_stderr", r.intermediate_rate_stderr);
    sink.add("intermediate", H, 0, mc.seed, "rate_mc", est.value, r.intermediate_rate);
    sink.add("intermediate", H, 0, mc.seed, "rate_mc_stderr", est.std_error);
    sink.add("all", H, 0, 0, "ordered", r.ordered ? 1.0 : 0.0);
  } else {
    if (system.du() > 0) throw ConfigError("theory: biases are defined for systems without inputs");
    const theory::BiasReport b = theory::bias_report(system, H);
    sink.add("ss", H, 0, 0, "bias", b.ss_bias);
    sink.add("ms", H, 0, 0, "bias", b.ms_bias);
    sink.add("intermediate", H, 0, 0, "bias", b.intermediate_bias);
    sink.add("intermediate", H, 0, 0, "grad_norm", b.intermediate_grad_norm);
    sink.add("all", H, 0, 0, "predictor_spectral_radius", b.spectral_radius);
    sink.add("all", H, 0, 0, "ordered", b.ordered ? 1.0 : 0.0);
  }
  sort_records(sink.rows);
  return std::move(sink.rows);
}

void write_csv(std::ostream& out, const std::vector<Record>& records) {
  out << kCsvHeader << "\n";
  for (const Record& r : records) {
    out << r.kind << "," << r.cls << "," << r.N << "," << r.replica << "," << r.seed << "," << r.quantity << ","
        << fmt(r.value) << "," << (r.theory_ref ? fmt(*r.theory_ref) : "") << "\n";
  }
}

std::string to_csv(const std::vector<Record>& records) {
  std::ostringstream ss;
  write_csv(ss, records);
  return ss.str();
}

void write_csv_file(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(out, records);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<SummaryRow> summarize(const std::vector<Record>& records) {
  struct Acc {
    double sum = 0.0, sq = 0.0;
    int count = 0;
    std::optional<double> ref;
  };
  std::map<std::tuple<std::string, std::int64_t, std::string>, Acc> groups;
  std::map<std::pair<std::string, std::int64_t>, int> failures;
  for (const Record& r : records) {
    if (r.quantity == "failed") {
      ++failures[{r.cls, r.N}];
      continue;
    }
    Acc& a = groups[{r.cls, r.N, r.quantity}];
    a.sum += r.value;
    a.sq += r.value * r.value;
    ++a.count;
    if (r.theory_ref) a.ref = r.theory_ref;
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, a] : groups) {
    SummaryRow row;
    std::tie(row.cls, row.N, row.quantity) = key;
    row.count = a.count;
    row.mean = a.sum / a.count;
    if (a.count > 1) {
      const double var = std::max(0.0, (a.sq - a.count * row.mean * row.mean) / (a.count - 1));
      row.std_error = std::sqrt(var / a.count);
    }
    const auto f = failures.find({row.cls, row.N});
    row.failures = f == failures.end() ? 0 : f->second;
    row.theory_ref = a.ref;
    rows.push_back(row);
  }
  return rows;
}

void print_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  char line[256];
  std::snprintf(line, sizeof line, "%-13s %8s %-20s %14s %12s %6s %6s %14s\n", "class", "N", "quantity", "mean",
                "stderr", "count", "failed", "theory");
  out << line;
  for (const SummaryRow& r : rows) {
    std::snprintf(line, sizeof line, "%-13s %8lld %-20s %14.6g %12.4g %6d %6d %14s\n", r.cls.c_str(),
                  static_cast<long long>(r.N), r.quantity.c_str(), r.mean, r.std_error, r.count, r.failures,
                  r.theory_ref ? fmt(*r.theory_ref).substr(0, 14).c_str() : "-");
    out << line;
  }
}

std::vector<ExperimentInfo> list_experiments() {
  return {
      {"wellspec_convergence", "fully observed system: N * excess loss of each predictor against its rate"},
      {"misspec_convergence", "partially observed system: population loss of each predictor against its bias"},
      {"bias_vs_horizon", "closed-form biases of the three predictors over a range of horizons (N column = H)"},
      {"lqr_wellspec", "MPC gains from each predictor: clipped LQR cost and its gap to the exact-model gain"},
      {"spectral_radius_misspec", "MPC gains on a partially observed system: closed-loop spectral radius"},
      {"nonlinear", "Koopman benchmark: held-out H-step error of each predictor (N column = H)"},
  };
}

}  // namespace msp::experiments
