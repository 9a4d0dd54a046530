#pragma once

#include <cstdint>

#include "msp/linalg.hpp"
#include "msp/lti_core.hpp"

namespace msp::theory {

// ---- Fully observed: asymptotic rates lim N * E[excess loss] ----

/// M_MS(i,j) = trace(A^{|i-j|}).
Matrix m_ms(const lti::LtiSystem& system, int horizon);

/// M_SS(i,j) = trace((I - Sigma_x^{-1} sum_{l=0}^{min(i,j)-2} A^l B_w B_w^T A^lT) A^{|j-i|}T).
Matrix m_ss(const lti::LtiSystem& system, int horizon);

double ms_rate(const lti::LtiSystem& system, int horizon);
double ss_rate(const lti::LtiSystem& system, int horizon);

/// ss_rate through the estimator covariance Sigma_{x,u}^{-1} (x) B_w B_w^T and the
/// rollout curvature W; an independent route to the same number.
double ss_rate_sandwich(const lti::LtiSystem& system, int horizon);

/// W = L^T (F Sigma_z F^T (x) Gamma^T Gamma) L: the excess-loss curvature in
/// vec([G_y - A, G_u - B]) coordinates (column-major vec).
Matrix rate_curvature(const lti::LtiSystem& system, int horizon);

/// Exact Hessian J and long-run gradient covariance Sigma of the per-window
/// loss at (A, B). Autocovariances vanish beyond lag H-1.
struct Sandwich {
  Matrix J;
  Matrix Sigma;
  Matrix W;
};
Sandwich intermediate_sandwich(const lti::LtiSystem& system, int horizon);

/// trace(J^{-1} Sigma J^{-1} W) from the exact J and Sigma.
double intermediate_rate_closed_form(const lti::LtiSystem& system, int horizon);

struct MonteCarloConfig {
  std::int64_t T = 1'000'000;  // samples after burn-in
  std::int64_t burn_in = 1'000;
  int max_lag = 200;
  int batches = 20;  // batch means for the standard error
  std::uint64_t seed = 0x5eed;
};

struct RateEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int max_lag_used = 0;
  Matrix J;
  Matrix Sigma;
};

/// Same quantity with J and Sigma estimated by averaging exact per-window
/// gradients and Hessians along one long stationary trajectory.
RateEstimate intermediate_rate(const lti::LtiSystem& system, int horizon, const MonteCarloConfig& mc = {});

struct RateReport {
  double ss_rate = 0.0;
  double ms_rate = 0.0;
  double intermediate_rate = 0.0;
  double intermediate_rate_stderr = 0.0;
  bool ordered = false;  // ss <= intermediate <= ms within 3 stderr
};

RateReport rate_report(const lti::LtiSystem& system, int horizon);

// ---- Partially observed (no inputs): irreducible biases ----

/// Least-squares limit of the single-step fit, C A Sigma_x C^T Sigma_y^{-1}
/// with Sigma_x = Sigma_xhat + S the stationary state covariance.
Matrix single_step_limit(const lti::InnovationsForm& innov, const lti::LtiSystem& system);

double predictor_spectral_radius(const lti::InnovationsForm& innov, const lti::LtiSystem& system);

double ms_bias(const lti::InnovationsForm& innov, const lti::LtiSystem& system, int horizon);
double ss_bias(const lti::InnovationsForm& innov, const lti::LtiSystem& system, int horizon);

struct BiasOptions {
  int extra_starts = 4;
  double start_scale = 0.1;  // std of random starting entries
  int max_iters = 100000;
  double grad_tol = 1e-10;
  double divergence_factor = 1e6;
  std::uint64_t seed = 0xb1a5;
};

struct IntermediateBias {
  double value = 0.0;
  Matrix Gy;
  double grad_norm = 0.0;
  int starts = 0;
  int diverged = 0;
};

/// Minimizes the population loss over G_y with block k = G_y^k by multi-start
/// gradient descent with backtracking.
IntermediateBias intermediate_bias(const lti::InnovationsForm& innov, const lti::LtiSystem& system,
                                   int horizon, const BiasOptions& options = {});

struct BiasReport {
  double ss_bias = 0.0;
  double ms_bias = 0.0;
  double intermediate_bias = 0.0;
  double intermediate_grad_norm = 0.0;
  int intermediate_starts = 0;
  double spectral_radius = 0.0;
  bool ordered = false;  // ms <= intermediate + tol <= ss + tol, tol = 1e-8 ss
};

BiasReport bias_report(const lti::LtiSystem& system, int horizon, const BiasOptions& options = {});

}  // namespace msp::theory
