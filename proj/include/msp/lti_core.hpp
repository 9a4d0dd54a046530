#pragma once

#include <cstdint>

#include "msp/linalg.hpp"

namespace msp::lti {

/// Discrete-time LTI system
///   x_{t+1} = A x_t + B u_t + B_w w_t,   y_t = C x_t + D_v v_t
/// with w, v, u i.i.d. standard normal. B and D_v may have zero columns.
/// Construction rejects inconsistent shapes and rho(A) >= 1.
class LtiSystem {
 public:
  LtiSystem(Matrix A, Matrix B, Matrix Bw, Matrix C, Matrix Dv);

  /// Fully observed system: C = I, no sensor noise.
  static LtiSystem fully_observed(Matrix A, Matrix B, Matrix Bw);

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& Bw() const { return Bw_; }
  const Matrix& C() const { return C_; }
  const Matrix& Dv() const { return Dv_; }

  Eigen::Index dx() const { return A_.rows(); }
  Eigen::Index du() const { return B_.cols(); }
  Eigen::Index dw() const { return Bw_.cols(); }
  Eigen::Index dy() const { return C_.rows(); }
  Eigen::Index dv() const { return Dv_.cols(); }

  /// True iff C is exactly the identity and D_v has zero width.
  bool is_fully_observed() const { return fully_observed_; }

  /// Same system with the process-noise map zeroed (noise-free rollouts in tests).
  LtiSystem without_process_noise() const;

 private:
  Matrix A_, B_, Bw_, C_, Dv_;
  bool fully_observed_ = false;
};

/// States x_0..x_N (columns 0..N), observations y_1..y_N and inputs u_1..u_N
/// (column t-1 holds time t).
struct Trajectory {
  Matrix states;
  Matrix observations;
  Matrix inputs;
  std::uint64_t seed = 0;

  Eigen::Index length() const { return observations.cols(); }
};

/// Rolls the system forward from x_0 = 0. Per step the draw order is
/// u_t, w_t, v_t (t = 0 draws only u_0, w_0).
Trajectory simulate(const LtiSystem& system, Eigen::Index n, std::uint64_t seed);

/// Solves P = A P A^T + Q by squaring (doubling) iteration.
/// Throws std::domain_error if rho(A) >= 1 and SolverError on non-convergence.
Matrix solve_dlyap(const Matrix& A, const Matrix& Q);

/// Stationary state covariance: solve_dlyap(A, B B^T + B_w B_w^T).
Matrix stationary_state_cov(const LtiSystem& system);

/// Sigma_z = blockdiag(Sigma_x, I_{H d_u}) for z_t = [x_t; u_{t:t+H-1}].
Matrix stationary_regressor_cov(const LtiSystem& system, int horizon);

struct InnovationsForm {
  Matrix K;           // d_x x d_y Kalman (predictor) gain
  Matrix S;           // stabilizing Riccati solution
  Matrix De;          // symmetric root of C S C^T + D_v D_v^T
  Matrix Sigma_xhat;  // stationary covariance of the predictor state
  Matrix Sigma_y;     // stationary observation covariance
  int riccati_iterations = 0;
};

/// Kalman innovations form via the fixed-point Riccati iteration
/// S <- A S A^T + B_w B_w^T - A S C^T (C S C^T + R)^{-1} C S A^T, R = D_v D_v^T.
InnovationsForm kalman_innovations(const LtiSystem& system);

/// Frobenius residual of the Riccati fixed point at S.
double riccati_residual(const LtiSystem& system, const Matrix& S);

/// Fully observed rollout: x_{t+1:t+H} = G_star z_t + Gamma_w w_{t:t+H-1}.
struct WellSpecRollout {
  Matrix G_star;   // H d_x x (d_x + H d_u)
  Matrix Gamma_w;  // H d_x x H d_w
  int horizon = 0;
};

WellSpecRollout build_rollout_wellspec(const LtiSystem& system, int horizon);

/// Innovations rollout: y_{t+1:t+H} = Phi xhat_t + G_star y_t + Gamma_e e_{t+1:t+H}.
struct MisSpecRollout {
  Matrix Phi;      // H d_y x d_x
  Matrix G_star;   // H d_y x d_y
  Matrix Gamma_e;  // H d_y x H d_y
  int horizon = 0;
};

/// Requires d_u = 0.
MisSpecRollout build_rollout_misspec(const InnovationsForm& innov, const LtiSystem& system,
                                     int horizon);

}  // namespace msp::lti
