#include "msp/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "msp/errors.hpp"
#include "msp/predictors.hpp"
#include "msp/random.hpp"
#include "rate_geometry.hpp"

namespace msp::theory {

namespace {

void require_fully_observed(const lti::LtiSystem& system, int horizon) {
  if (!system.is_fully_observed()) throw std::invalid_argument("theory: system is not fully observed");
  if (horizon < 1) throw std::invalid_argument("theory: H must be >= 1");
}

double rate_from_m(const lti::LtiSystem& system, const Matrix& M, double input_weight) {
  const int H = int(M.rows());
  const lti::WellSpecRollout r = lti::build_rollout_wellspec(system, H);
  const Matrix inner = kron(M + input_weight * Matrix::Identity(H, H), Matrix::Identity(system.dw(), system.dw()));
  return (r.Gamma_w * inner * r.Gamma_w.transpose()).trace();
}

}  // namespace

Matrix m_ms(const lti::LtiSystem& system, int horizon) {
  require_fully_observed(system, horizon);
  Matrix M(horizon, horizon);
  Matrix P = Matrix::Identity(system.dx(), system.dx());
  for (int d = 0; d < horizon; ++d) {
    const double tr = P.trace();
    for (int i = 0; i + d < horizon; ++i) M(i, i + d) = M(i + d, i) = tr;
    P = P * system.A();
  }
  return M;
}

Matrix m_ss(const lti::LtiSystem& system, int horizon) {
  require_fully_observed(system, horizon);
  const Eigen::Index n = system.dx();
  const Matrix& A = system.A();
  const Matrix BwBwT = system.Bw() * system.Bw().transpose();
  const Eigen::LDLT<Matrix> Sx(detail::excited_state_cov(system));

  // partial[k] = Sigma_x^{-1} sum_{l=0}^{k-1} A^l B_w B_w^T A^lT
  std::vector<Matrix> partial(horizon);
  std::vector<Matrix> Apow(horizon);
  partial[0] = Matrix::Zero(n, n);
  Apow[0] = Matrix::Identity(n, n);
  Matrix acc = Matrix::Zero(n, n);
  for (int k = 1; k < horizon; ++k) {
    acc += Apow[k - 1] * BwBwT * Apow[k - 1].transpose();
    partial[k] = Sx.solve(acc);
    Apow[k] = A * Apow[k - 1];
  }
  Matrix M(horizon, horizon);
  for (int i = 1; i <= horizon; ++i) {
    for (int j = 1; j <= horizon; ++j) {
      const int lo = std::min(i, j);
      const Matrix left = Matrix::Identity(n, n) - partial[lo - 1];
      M(i - 1, j - 1) = (left * Apow[std::abs(j - i)].transpose()).trace();
    }
  }
  return M;
}

double ms_rate(const lti::LtiSystem& system, int horizon) {
  return rate_from_m(system, m_ms(system, horizon), double(horizon * system.du()));
}

double ss_rate(const lti::LtiSystem& system, int horizon) {
  return rate_from_m(system, m_ss(system, horizon), double(system.du()));
}

double ss_rate_sandwich(const lti::LtiSystem& system, int horizon) {
  const detail::RateGeometry g = detail::rate_geometry(system, horizon);
  const Matrix Sxu = block_diag(g.Sigma_x, Matrix::Identity(g.nu, g.nu));
  const Matrix cov = kron(Sxu.inverse(), system.Bw() * system.Bw().transpose());
  return (cov * detail::curvature(g)).trace();
}

RateReport rate_report(const lti::LtiSystem& system, int horizon) {
  RateReport r;
  r.ss_rate = ss_rate(system, horizon);
  r.ms_rate = ms_rate(system, horizon);
  r.intermediate_rate = intermediate_rate_closed_form(system, horizon);
  r.intermediate_rate_stderr = 0.0;
  // Relative slack covers rounding when the three coincide (H = 1).
  const double slack = 3.0 * r.intermediate_rate_stderr + 1e-9 * r.ms_rate;
  r.ordered = r.ss_rate <= r.intermediate_rate + slack && r.intermediate_rate <= r.ms_rate + slack;
  return r;
}

Matrix single_step_limit(const lti::InnovationsForm& innov, const lti::LtiSystem& system) {
  const Matrix Sigma_x = innov.Sigma_xhat + innov.S;
  const Matrix cross = system.C() * system.A() * Sigma_x * system.C().transpose();
  return innov.Sigma_y.ldlt().solve(cross.transpose()).transpose();
}

double predictor_spectral_radius(const lti::InnovationsForm& innov, const lti::LtiSystem& system) {
  return spectral_radius(single_step_limit(innov, system));
}

double ms_bias(const lti::InnovationsForm& innov, const lti::LtiSystem& system, int horizon) {
  const lti::MisSpecRollout r = lti::build_rollout_misspec(innov, system, horizon);
  const Matrix& Sx = innov.Sigma_xhat;
  const Matrix SxCt = Sx * system.C().transpose();
  const Matrix cond = Sx - SxCt * innov.Sigma_y.ldlt().solve(SxCt.transpose());
  return (r.Phi * cond * r.Phi.transpose()).trace() + r.Gamma_e.squaredNorm();
}

double ss_bias(const lti::InnovationsForm& innov, const lti::LtiSystem& system, int horizon) {
  const Matrix Gy = single_step_limit(innov, system);
  const Matrix G = predictors::rollout_matrix(Gy, Matrix(Gy.rows(), 0), horizon);
  return predictors::MisSpecEvaluator(innov, system, horizon).loss(G);
}

namespace {

// Population loss of rolled-out G_y in the moment form used by the fits:
// L(G) = L(0) - 2 <G, T> + <G Sigma_y, G>, T = Phi Sigma_xhat C^T + G* Sigma_y.
predictors::MultiStepObjective population_objective(const lti::InnovationsForm& innov,
                                                    const lti::LtiSystem& system, int horizon) {
  const predictors::MisSpecEvaluator eval(innov, system, horizon);
  const lti::MisSpecRollout& r = eval.rollout();
  const Matrix T = r.Phi * innov.Sigma_xhat * system.C().transpose() + r.G_star * innov.Sigma_y;
  const double at_zero = eval.loss(Matrix::Zero(r.G_star.rows(), r.G_star.cols()));
  return predictors::MultiStepObjective::from_moments(innov.Sigma_y, T, at_zero, horizon, system.dy(), 0);
}

struct DescentResult {
  Matrix Gy;
  double loss = 0.0;
  double grad = 0.0;
  bool diverged = false;
};

DescentResult descend(const predictors::MultiStepObjective& obj, Matrix Gy, const BiasOptions& opt) {
  const Matrix Gu(Gy.rows(), 0);
  Matrix dGy, dGu;
  DescentResult out;
  double loss = obj.value_and_gradient(Gy, Gu, dGy, dGu);
  const double limit = opt.divergence_factor * std::max(loss, std::numeric_limits<double>::min());
  double step = 1e-2;
  for (int it = 0; it < opt.max_iters; ++it) {
    const double g2 = dGy.squaredNorm();
    if (dGy.cwiseAbs().maxCoeff() <= opt.grad_tol) break;
    // Backtracking (Armijo) with step growth after each accepted move.
    bool accepted = false;
    Matrix trial, dtrial;
    double trial_loss = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      trial = Gy - step * dGy;
      trial_loss = obj.value_and_gradient(trial, Gu, dtrial, dGu);
      if (std::isfinite(trial_loss) && trial_loss <= loss - 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable
    Gy = std::move(trial);
    dGy = std::move(dtrial);
    loss = trial_loss;
    step *= 2.0;
    if (!std::isfinite(loss) || loss > limit) {
      out.diverged = true;
      break;
    }
  }
  out.Gy = std::move(Gy);
  out.loss = loss;
  out.grad = dGy.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace

IntermediateBias intermediate_bias(const lti::InnovationsForm& innov, const lti::LtiSystem& system,
                                   int horizon, const BiasOptions& options) {
  if (system.du() > 0) throw std::invalid_argument("intermediate_bias: inputs are not supported");
  const predictors::MultiStepObjective obj = population_objective(innov, system, horizon);
  const Eigen::Index ny = system.dy();

  std::vector<Matrix> starts{single_step_limit(innov, system), Matrix::Zero(ny, ny)};
  NormalStream rng(options.seed);
  for (int s = 0; s < options.extra_starts; ++s) {
    Matrix m(ny, ny);
    rng.fill(m);
    starts.push_back(options.start_scale * m);
  }

  IntermediateBias best;
  best.value = std::numeric_limits<double>::infinity();
  for (const Matrix& start : starts) {
    const DescentResult r = descend(obj, start, options);
    ++best.starts;
    if (r.diverged) {
      ++best.diverged;
      continue;
    }
    if (r.loss < best.value) {
      best.value = r.loss;
      best.Gy = r.Gy;
      best.grad_norm = r.grad;
    }
  }
  if (best.diverged == best.starts) throw SolverError("intermediate_bias: every start diverged");
  return best;
}

BiasReport bias_report(const lti::LtiSystem& system, int horizon, const BiasOptions& options) {
  const lti::InnovationsForm innov = lti::kalman_innovations(system);
  BiasReport r;
  r.ss_bias = ss_bias(innov, system, horizon);
  r.ms_bias = ms_bias(innov, system, horizon);
  const IntermediateBias ib = intermediate_bias(innov, system, horizon, options);
  r.intermediate_bias = ib.value;
  r.intermediate_grad_norm = ib.grad_norm;
  r.intermediate_starts = ib.starts;
  r.spectral_radius = predictor_spectral_radius(innov, system);
  const double tol = 1e-8 * r.ss_bias;
  r.ordered = r.ms_bias <= r.intermediate_bias + tol && r.intermediate_bias <= r.ss_bias + tol;
  return r;
}

}  // namespace msp::theory
