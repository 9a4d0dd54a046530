#include <limits>
#include "msp/lti_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "msp/errors.hpp"
#include "msp/random.hpp"

namespace msp::lti {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("LtiSystem: " + what);
}

}  // namespace

LtiSystem::LtiSystem(Matrix A, Matrix B, Matrix Bw, Matrix C, Matrix Dv)
    : A_(std::move(A)), B_(std::move(B)), Bw_(std::move(Bw)), C_(std::move(C)), Dv_(std::move(Dv)) {
  require(A_.rows() == A_.cols() && A_.rows() > 0, "A must be square and non-empty");
  require(B_.rows() == dx(), "B must have d_x rows");
  require(Bw_.rows() == dx(), "B_w must have d_x rows");
  require(C_.cols() == dx() && C_.rows() > 0, "C must be d_y x d_x");
  require(Dv_.rows() == dy(), "D_v must have d_y rows");
  if (spectral_radius(A_) >= 1.0) throw std::domain_error("LtiSystem: rho(A) >= 1");
  fully_observed_ = C_.rows() == C_.cols() && C_ == Matrix::Identity(dx(), dx()) && Dv_.cols() == 0;
}

LtiSystem LtiSystem::fully_observed(Matrix A, Matrix B, Matrix Bw) {
  const Eigen::Index n = A.rows();
  return LtiSystem(std::move(A), std::move(B), std::move(Bw), Matrix::Identity(n, n), Matrix(n, 0));
}

LtiSystem LtiSystem::without_process_noise() const {
  return LtiSystem(A_, B_, Matrix::Zero(dx(), dw()), C_, Dv_);
}

Trajectory simulate(const LtiSystem& system, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("simulate: N must be >= 1");
  NormalStream rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.states = Matrix::Zero(system.dx(), n + 1);
  traj.observations.resize(system.dy(), n);
  traj.inputs.resize(system.du(), n);

  Vector x = Vector::Zero(system.dx());
  Vector u = rng.draw(system.du());
  Vector w = rng.draw(system.dw());
  x = system.A() * x + system.B() * u + system.Bw() * w;
  for (Eigen::Index t = 1; t <= n; ++t) {
    traj.states.col(t) = x;
    u = rng.draw(system.du());
    w = rng.draw(system.dw());
    const Vector v = rng.draw(system.dv());
    traj.observations.col(t - 1) = system.C() * x + system.Dv() * v;
    traj.inputs.col(t - 1) = u;
    x = system.A() * x + system.B() * u + system.Bw() * w;
  }
  return traj;
}

Matrix solve_dlyap(const Matrix& A, const Matrix& Q) {
  if (A.rows() != A.cols() || Q.rows() != A.rows() || Q.cols() != A.cols())
    throw std::invalid_argument("solve_dlyap: dimension mismatch");
  if (spectral_radius(A) >= 1.0) throw std::domain_error("solve_dlyap: rho(A) >= 1");

  // P_{k+1} = P_k + A_k P_k A_k^T, A_{k+1} = A_k^2 sums 2^k terms of the series.
  Matrix P = symmetrize(Q);
  Matrix Ak = A;
  constexpr int kMaxDoublings = 64;
  bool converged = false;
  for (int k = 0; k < kMaxDoublings; ++k) {
    const Matrix inc = Ak * P * Ak.transpose();
    P = symmetrize(P + inc);
    Ak = Ak * Ak;
    if (inc.norm() <= 1e-17 * std::max(1.0, P.norm())) {
      converged = true;
      break;
    }
  }
  const double residual = (P - A * P * A.transpose() - Q).norm();
  if (!converged || !std::isfinite(residual) || residual > 1e-10 * std::max(1.0, Q.norm()))
    throw SolverError("solve_dlyap: did not converge (residual " + std::to_string(residual) + ")");
  return P;
}

Matrix stationary_state_cov(const LtiSystem& system) {
  return solve_dlyap(system.A(), system.B() * system.B().transpose() +
                                     system.Bw() * system.Bw().transpose());
}

Matrix stationary_regressor_cov(const LtiSystem& system, int horizon) {
  if (!system.is_fully_observed())
    throw std::invalid_argument("stationary_regressor_cov: system is not fully observed");
  if (horizon < 1) throw std::invalid_argument("stationary_regressor_cov: H must be >= 1");
  return block_diag(stationary_state_cov(system), Matrix::Identity(horizon * system.du(), horizon * system.du()));
}

double riccati_residual(const LtiSystem& system, const Matrix& S) {
  const Matrix& A = system.A();
  const Matrix& C = system.C();
  const Matrix R = system.Dv() * system.Dv().transpose();
  const Matrix ASCt = A * S * C.transpose();
  const Matrix next = A * S * A.transpose() + system.Bw() * system.Bw().transpose() -
                      ASCt * (C * S * C.transpose() + R).ldlt().solve(ASCt.transpose());
  return (next - S).norm();
}

InnovationsForm kalman_innovations(const LtiSystem& system) {
  const Matrix& A = system.A();
  const Matrix& C = system.C();
  const Matrix Q = system.Bw() * system.Bw().transpose();
  const Matrix R = system.Dv() * system.Dv().transpose();
  if (R.size() == 0 || R.llt().info() != Eigen::Success)
    throw std::invalid_argument("kalman_innovations: D_v D_v^T must be positive definite");

  constexpr int kMaxIterations = 100000;
  Matrix S = Q;
  int iterations = 0;
  bool converged = false;
  double prev_step = std::numeric_limits<double>::infinity();
  for (; iterations < kMaxIterations; ++iterations) {
    const Matrix ASCt = A * S * C.transpose();
    const Eigen::LDLT<Matrix> innov_cov(C * S * C.transpose() + R);
    if (innov_cov.info() != Eigen::Success) throw SolverError("kalman_innovations: singular innovation covariance");
    const Matrix next = symmetrize(A * S * A.transpose() + Q - ASCt * innov_cov.solve(ASCt.transpose()));
    const double step = (next - S).norm();
    S = next;
    // Keep going past the tolerance until the step stops shrinking, so the
    // residual ends at roundoff level rather than at tolerance times ||S||.
    const double scale = std::max(1.0, S.norm());
    const bool floor = step <= 1e-12 * scale && step >= prev_step;
    prev_step = step;
    if (step <= 1e-15 * scale || floor) {
      converged = true;
      ++iterations;
      break;
    }
  }
  if (!converged) throw SolverError("kalman_innovations: Riccati iteration did not converge");

  InnovationsForm out;
  out.S = S;
  out.riccati_iterations = iterations;
  const Matrix innov_cov = symmetrize(C * S * C.transpose() + R);
  out.K = innov_cov.ldlt().solve((A * S * C.transpose()).transpose()).transpose();
  out.De = psd_sqrt(innov_cov);
  if (spectral_radius(A - out.K * C) >= 1.0) throw SolverError("kalman_innovations: solution is not stabilizing");
  const Matrix drive = out.K * out.De * out.De.transpose() * out.K.transpose() +
                       system.B() * system.B().transpose();
  out.Sigma_xhat = solve_dlyap(A, symmetrize(drive));
  out.Sigma_y = symmetrize(C * out.Sigma_xhat * C.transpose() + out.De * out.De.transpose());
  return out;
}

WellSpecRollout build_rollout_wellspec(const LtiSystem& system, int horizon) {
  if (!system.is_fully_observed())
    throw std::invalid_argument("build_rollout_wellspec: system is not fully observed");
  if (horizon < 1) throw std::invalid_argument("build_rollout_wellspec: H must be >= 1");
  const Eigen::Index nx = system.dx(), nu = system.du(), nw = system.dw();
  WellSpecRollout out;
  out.horizon = horizon;
  out.G_star = Matrix::Zero(horizon * nx, nx + horizon * nu);
  out.Gamma_w = Matrix::Zero(horizon * nx, horizon * nw);

  // powers[k] = A^k
  std::vector<Matrix> powers(horizon + 1);
  powers[0] = Matrix::Identity(nx, nx);
  for (int k = 1; k <= horizon; ++k) powers[k] = system.A() * powers[k - 1];

  for (int k = 1; k <= horizon; ++k) {
    const Eigen::Index row = (k - 1) * nx;
    out.G_star.block(row, 0, nx, nx) = powers[k];
    for (int j = 0; j < k; ++j) {
      out.G_star.block(row, nx + j * nu, nx, nu) = powers[k - 1 - j] * system.B();
      out.Gamma_w.block(row, j * nw, nx, nw) = powers[k - 1 - j] * system.Bw();
    }
  }
  return out;
}

MisSpecRollout build_rollout_misspec(const InnovationsForm& innov, const LtiSystem& system,
                                     int horizon) {
  if (system.du() > 0) throw std::invalid_argument("build_rollout_misspec: inputs are not supported (d_u > 0)");
  if (horizon < 1) throw std::invalid_argument("build_rollout_misspec: H must be >= 1");
  const Eigen::Index nx = system.dx(), ny = system.dy();
  const Matrix& A = system.A();
  const Matrix& C = system.C();
  MisSpecRollout out;
  out.horizon = horizon;
  out.Phi.resize(horizon * ny, nx);
  out.G_star.resize(horizon * ny, ny);
  out.Gamma_e = Matrix::Zero(horizon * ny, horizon * ny);

  // CAk[k] = C A^k
  std::vector<Matrix> CAk(horizon);
  CAk[0] = C;
  for (int k = 1; k < horizon; ++k) CAk[k] = CAk[k - 1] * A;

  const Matrix closed = A - innov.K * C;
  for (int k = 1; k <= horizon; ++k) {
    out.Phi.middleRows((k - 1) * ny, ny) = CAk[k - 1] * closed;
    out.G_star.middleRows((k - 1) * ny, ny) = CAk[k - 1] * innov.K;
  }
  for (int i = 0; i < horizon; ++i) {
    out.Gamma_e.block(i * ny, i * ny, ny, ny) = innov.De;
    for (int j = 0; j < i; ++j)
      out.Gamma_e.block(i * ny, j * ny, ny, ny) = CAk[i - j - 1] * innov.K * innov.De;
  }
  return out;
}

}  // namespace msp::lti
