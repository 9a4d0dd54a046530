#include "msp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "msp/errors.hpp"

namespace msp::config {

namespace {

struct KindEntry {
  ExperimentKind kind;
  std::string_view name;
};

constexpr KindEntry kKinds[] = {
    {ExperimentKind::WellspecConvergence, "wellspec_convergence"},
    {ExperimentKind::MisspecConvergence, "misspec_convergence"},
    {ExperimentKind::BiasVsHorizon, "bias_vs_horizon"},
    {ExperimentKind::LqrWellspec, "lqr_wellspec"},
    {ExperimentKind::SpectralRadiusMisspec, "spectral_radius_misspec"},
    {ExperimentKind::Nonlinear, "nonlinear"},
};

const std::set<std::string> kLtiSystems{"wellspec", "misspec", "misspec_control", "example1", "custom"};
const std::set<std::string> kKoopmanSystems{"koopman_wellspec", "koopman_misspec"};

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    fail("config: invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view text, std::string_view key) {
  std::vector<T> out;
  for (std::string_view item : split(text, ',')) out.push_back(parse_number<T>(item, key));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

bool same_matrix(const std::optional<Matrix>& a, const std::optional<Matrix>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  if (a->size() == 0 && b->size() == 0) return true;  // "none" carries no height
  return a->rows() == b->rows() && a->cols() == b->cols() && *a == *b;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table{
      {"kind", [](ExperimentConfig& c, std::string_view v) { c.kind = parse_kind(v); }},
      {"system", [](ExperimentConfig& c, std::string_view v) { c.system = std::string(v); }},
      {"a", [](ExperimentConfig& c, std::string_view v) { c.a = parse_number<double>(v, "a"); }},
      {"A", [](ExperimentConfig& c, std::string_view v) { c.A = parse_matrix(v); }},
      {"B", [](ExperimentConfig& c, std::string_view v) { c.B = parse_matrix(v); }},
      {"Bw", [](ExperimentConfig& c, std::string_view v) { c.Bw = parse_matrix(v); }},
      {"C", [](ExperimentConfig& c, std::string_view v) { c.C = parse_matrix(v); }},
      {"Dv", [](ExperimentConfig& c, std::string_view v) { c.Dv = parse_matrix(v); }},
      {"horizon", [](ExperimentConfig& c, std::string_view v) { c.horizon = parse_number<int>(v, "horizon"); }},
      {"horizons", [](ExperimentConfig& c, std::string_view v) { c.horizons = parse_list<int>(v, "horizons"); }},
      {"dataset_sizes",
       [](ExperimentConfig& c, std::string_view v) { c.dataset_sizes = parse_list<std::int64_t>(v, "dataset_sizes"); }},
      {"replicas", [](ExperimentConfig& c, std::string_view v) { c.replicas = parse_number<int>(v, "replicas"); }},
      {"seed", [](ExperimentConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>(v, "seed"); }},
      {"adam_step_size",
       [](ExperimentConfig& c, std::string_view v) { c.adam_step_size = parse_number<double>(v, "adam_step_size"); }},
      {"adam_max_iters",
       [](ExperimentConfig& c, std::string_view v) { c.adam_max_iters = parse_number<int>(v, "adam_max_iters"); }},
      {"adam_grad_tol",
       [](ExperimentConfig& c, std::string_view v) { c.adam_grad_tol = parse_number<double>(v, "adam_grad_tol"); }},
      {"clip", [](ExperimentConfig& c, std::string_view v) { c.clip = parse_number<double>(v, "clip"); }},
      {"mu", [](ExperimentConfig& c, std::string_view v) { c.mu = parse_number<double>(v, "mu"); }},
      {"lambda", [](ExperimentConfig& c, std::string_view v) { c.lambda = parse_number<double>(v, "lambda"); }},
      {"sigma_w", [](ExperimentConfig& c, std::string_view v) { c.sigma_w = parse_number<double>(v, "sigma_w"); }},
      {"sigma_v", [](ExperimentConfig& c, std::string_view v) { c.sigma_v = parse_number<double>(v, "sigma_v"); }},
      {"eval_factor",
       [](ExperimentConfig& c, std::string_view v) { c.eval_factor = parse_number<int>(v, "eval_factor"); }},
      {"mc_samples",
       [](ExperimentConfig& c, std::string_view v) { c.mc_samples = parse_number<std::int64_t>(v, "mc_samples"); }},
      {"mc_max_lag",
       [](ExperimentConfig& c, std::string_view v) { c.mc_max_lag = parse_number<int>(v, "mc_max_lag"); }},
      {"out", [](ExperimentConfig& c, std::string_view v) { c.out = std::string(v); }},
      {"workers", [](ExperimentConfig& c, std::string_view v) { c.workers = parse_number<int>(v, "workers"); }},
  };
  return table;
}

Matrix wellspec_A(double a) {
  Matrix A(2, 2);
  A << a, 1.0, 0.0, 0.75;
  return A;
}

}  // namespace

std::string_view kind_name(ExperimentKind kind) {
  for (const auto& e : kKinds)
    if (e.kind == kind) return e.name;
  return "?";
}

ExperimentKind parse_kind(std::string_view name) {
  for (const auto& e : kKinds)
    if (e.name == name) return e.kind;
  fail("config: unknown experiment kind '" + std::string(name) + "'");
}

const std::vector<ExperimentKind>& all_kinds() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> out;
    for (const auto& e : kKinds) out.push_back(e.kind);
    return out;
  }();
  return kinds;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return kind == o.kind && system == o.system && a == o.a && same_matrix(A, o.A) && same_matrix(B, o.B) &&
         same_matrix(Bw, o.Bw) && same_matrix(C, o.C) && same_matrix(Dv, o.Dv) && horizon == o.horizon &&
         horizons == o.horizons && dataset_sizes == o.dataset_sizes && replicas == o.replicas && seed == o.seed &&
         adam_step_size == o.adam_step_size && adam_max_iters == o.adam_max_iters &&
         adam_grad_tol == o.adam_grad_tol && clip == o.clip && mu == o.mu && lambda == o.lambda &&
         sigma_w == o.sigma_w && sigma_v == o.sigma_v && eval_factor == o.eval_factor &&
         mc_samples == o.mc_samples && mc_max_lag == o.mc_max_lag && out == o.out && workers == o.workers;
}

Matrix parse_matrix(std::string_view text, Eigen::Index rows_if_empty) {
  text = trim(text);
  if (text == "none") return Matrix(rows_if_empty, 0);
  const auto rows = split(text, ';');
  std::vector<std::vector<double>> values;
  for (std::string_view row : rows) values.push_back(parse_list<double>(row, "matrix"));
  const std::size_t cols = values.front().size();
  for (const auto& r : values)
    if (r.size() != cols) fail("config: matrix rows have different lengths in '" + std::string(text) + "'");
  Matrix m(Eigen::Index(values.size()), Eigen::Index(cols));
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) m(Eigen::Index(i), Eigen::Index(j)) = values[i][j];
  return m;
}

std::string format_matrix(const Matrix& m) {
  if (m.size() == 0) return "none";
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ";";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ",";
      out += fmt_double(m(i, j));
    }
  }
  return out;
}

ExperimentConfig parse(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("config: line " + std::to_string(line_no) + " is not 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) fail("config: unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) fail("config: key '" + std::string(key) + "' given twice");
    try {
      it->second(cfg, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail("config: bad value for '" + std::string(key) + "': " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "kind = " << kind_name(c.kind) << "\n";
  o << "system = " << c.system << "\n";
  o << "a = " << fmt_double(c.a) << "\n";
  if (c.A) o << "A = " << format_matrix(*c.A) << "\n";
  if (c.B) o << "B = " << format_matrix(*c.B) << "\n";
  if (c.Bw) o << "Bw = " << format_matrix(*c.Bw) << "\n";
  if (c.C) o << "C = " << format_matrix(*c.C) << "\n";
  if (c.Dv) o << "Dv = " << format_matrix(*c.Dv) << "\n";
  o << "horizon = " << c.horizon << "\n";
  o << "horizons = " << join(c.horizons) << "\n";
  o << "dataset_sizes = " << join(c.dataset_sizes) << "\n";
  o << "replicas = " << c.replicas << "\n";
  o << "seed = " << c.seed << "\n";
  o << "adam_step_size = " << fmt_double(c.adam_step_size) << "\n";
  o << "adam_max_iters = " << c.adam_max_iters << "\n";
  o << "adam_grad_tol = " << fmt_double(c.adam_grad_tol) << "\n";
  o << "clip = " << fmt_double(c.clip) << "\n";
  o << "mu = " << fmt_double(c.mu) << "\n";
  o << "lambda = " << fmt_double(c.lambda) << "\n";
  o << "sigma_w = " << fmt_double(c.sigma_w) << "\n";
  if (c.sigma_v) o << "sigma_v = " << fmt_double(*c.sigma_v) << "\n";
  o << "eval_factor = " << c.eval_factor << "\n";
  o << "mc_samples = " << c.mc_samples << "\n";
  o << "mc_max_lag = " << c.mc_max_lag << "\n";
  o << "out = " << c.out << "\n";
  o << "workers = " << c.workers << "\n";
  return o.str();
}

bool is_koopman(const ExperimentConfig& cfg) { return kKoopmanSystems.count(cfg.system) > 0; }

lti::LtiSystem build_system(const ExperimentConfig& cfg) {
  if (!kLtiSystems.count(cfg.system)) fail("config: '" + cfg.system + "' is not a linear system preset");
  Matrix A, B, Bw, C, Dv;
  if (cfg.system == "wellspec") {
    A = wellspec_A(cfg.a);
    B = Matrix(2, 1);
    B << 0.0, 1.0;
    Bw = Matrix::Identity(2, 2);
    C = Matrix::Identity(2, 2);
    Dv = Matrix(2, 0);
  } else if (cfg.system == "misspec" || cfg.system == "misspec_control") {
    A = wellspec_A(cfg.a);
    if (cfg.system == "misspec") {
      B = Matrix(2, 0);
    } else {
      // With C = [1, 0] the input must reach the first state directly (C B != 0),
      // otherwise the single-step gain is identically zero.
      B = Matrix(2, 1);
      B << -0.05, 0.5;
    }
    Bw = Matrix::Identity(2, 2);
    C = Matrix(1, 2);
    C << 1.0, 0.0;
    Dv = Matrix::Identity(1, 1);
  } else if (cfg.system == "example1") {
    A = Matrix(2, 2);
    A << 0.9, 1.0, 0.0, 0.9;
    B = Matrix(2, 0);
    Bw = Matrix::Identity(2, 2);
    C = Matrix(1, 2);
    C << 1.0, 0.0;
    Dv = Matrix::Identity(1, 1);
  } else {
    if (!cfg.A || !cfg.Bw || !cfg.C) fail("config: custom systems need A, Bw and C");
  }
  if (cfg.A) A = *cfg.A;
  if (cfg.Bw) Bw = *cfg.Bw;
  if (cfg.C) C = *cfg.C;
  if (cfg.B) B = *cfg.B;
  if (cfg.Dv) Dv = *cfg.Dv;
  // Empty blocks ("none" or unset) become zero-width maps of the right height.
  if (B.size() == 0) B = Matrix(A.rows(), 0);
  if (Dv.size() == 0) Dv = Matrix(C.rows(), 0);
  try {
    return lti::LtiSystem(A, B, Bw, C, Dv);
  } catch (const std::invalid_argument& e) {
    fail(std::string("config: ") + e.what());
  } catch (const std::domain_error& e) {
    fail(std::string("config: ") + e.what());
  }
}

nonlinear::KoopmanSystem build_koopman(const ExperimentConfig& cfg) {
  if (!is_koopman(cfg)) fail("config: '" + cfg.system + "' is not a Koopman preset");
  nonlinear::KoopmanSystem sys;
  sys.mu = cfg.mu;
  sys.lambda = cfg.lambda;
  sys.sigma_w = cfg.sigma_w;
  if (cfg.system == "koopman_wellspec") {
    sys.C = Matrix::Identity(4, 4);
    sys.sigma_v = 0.0;
  } else {
    sys.C = Matrix(1, 4);
    sys.C << 0.0, 1.0, 0.0, 0.0;
    sys.sigma_v = 0.4;
  }
  if (cfg.C) sys.C = *cfg.C;
  if (cfg.sigma_v) sys.sigma_v = *cfg.sigma_v;
  try {
    sys.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("config: ") + e.what());
  }
  return sys;
}

predictors::AdamOptions adam_options(const ExperimentConfig& cfg) {
  predictors::AdamOptions opt;
  opt.step_size = cfg.adam_step_size;
  opt.max_iters = cfg.adam_max_iters;
  opt.grad_tol = cfg.adam_grad_tol;
  return opt;
}

void validate(const ExperimentConfig& c) {
  if (c.replicas < 1) fail("config: replicas must be >= 1");
  if (c.dataset_sizes.empty()) fail("config: dataset_sizes is empty");
  for (std::size_t i = 0; i < c.dataset_sizes.size(); ++i) {
    if (c.dataset_sizes[i] < 2) fail("config: dataset sizes must be >= 2");
    if (i && c.dataset_sizes[i] <= c.dataset_sizes[i - 1]) fail("config: dataset_sizes must be strictly increasing");
  }
  if (c.horizon < 1) fail("config: horizon must be >= 1");
  if (c.horizons.empty()) fail("config: horizons is empty");
  for (int h : c.horizons)
    if (h < 1) fail("config: horizons must be >= 1");
  if (!(c.adam_step_size > 0.0) || c.adam_max_iters < 0 || !(c.adam_grad_tol >= 0.0))
    fail("config: invalid optimizer settings");
  if (!(c.clip > 0.0)) fail("config: clip must be > 0");
  if (c.eval_factor < 1) fail("config: eval_factor must be >= 1");
  if (c.mc_samples < 2 || c.mc_max_lag < 0) fail("config: invalid Monte Carlo settings");
  if (c.workers < 0) fail("config: workers must be >= 0");
  if (c.out.empty()) fail("config: out is empty");

  const bool koopman = is_koopman(c);
  if (!koopman && !kLtiSystems.count(c.system)) fail("config: unknown system '" + c.system + "'");
  if ((c.kind == ExperimentKind::Nonlinear) != koopman)
    fail("config: the nonlinear kind goes with the koopman_* systems and only with them");
  if (koopman) {
    build_koopman(c);
    if (c.dataset_sizes.size() != 1) fail("config: the nonlinear kind takes exactly one dataset size");
    const int hmax = *std::max_element(c.horizons.begin(), c.horizons.end());
    if (c.dataset_sizes.front() < hmax + 2) fail("config: dataset too short for the largest horizon");
    return;
  }
  const lti::LtiSystem sys = build_system(c);
  const bool needs_full = c.kind == ExperimentKind::WellspecConvergence || c.kind == ExperimentKind::LqrWellspec;
  if (needs_full && !sys.is_fully_observed()) fail("config: this experiment needs a fully observed system");
  if (!needs_full && sys.is_fully_observed()) fail("config: this experiment needs a partially observed system");
  const bool needs_inputs = c.kind == ExperimentKind::LqrWellspec || c.kind == ExperimentKind::SpectralRadiusMisspec;
  if (needs_inputs && sys.du() < 1) fail("config: control experiments need inputs (B with at least one column)");
  const bool no_inputs = c.kind == ExperimentKind::MisspecConvergence || c.kind == ExperimentKind::BiasVsHorizon;
  if (no_inputs && sys.du() > 0) fail("config: misspecified theory requires B = 0 (no inputs)");
  if (c.kind != ExperimentKind::BiasVsHorizon && c.dataset_sizes.front() < c.horizon + 2)
    fail("config: dataset too short for the horizon");
}

}  // namespace msp::config
