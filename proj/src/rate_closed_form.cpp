#include <limits>
#include <stdexcept>
#include <string>

#include "msp/errors.hpp"
#include "msp/theory.hpp"
#include "rate_geometry.hpp"

namespace msp::theory {

namespace detail {

Matrix excited_state_cov(const lti::LtiSystem& system) {
  Matrix S = lti::stationary_state_cov(system);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12))
    throw SingularityError("rate: stationary state covariance is singular (condition " + std::to_string(cond) + ")",
                           cond);
  return S;
}

RateGeometry rate_geometry(const lti::LtiSystem& system, int horizon) {
  if (!system.is_fully_observed()) throw std::invalid_argument("rate: system is not fully observed");
  if (horizon < 1) throw std::invalid_argument("rate: H must be >= 1");
  RateGeometry g;
  g.horizon = horizon;
  g.nx = system.dx();
  g.nu = system.du();
  g.nw = system.dw();
  g.np = g.nx + g.nu;
  g.m = g.nx + horizon * g.nu;
  const Matrix& A = system.A();

  g.Apow.resize(horizon + 1);
  g.Apow[0] = Matrix::Identity(g.nx, g.nx);
  for (int k = 1; k <= horizon; ++k) g.Apow[k] = A * g.Apow[k - 1];

  g.F = Matrix::Zero(horizon * g.np, g.m);
  Matrix P = Matrix::Zero(g.nx, g.m);
  P.leftCols(g.nx).setIdentity();
  for (int j = 1; j <= horizon; ++j) {
    const Eigen::Index row = (j - 1) * g.np;
    g.F.block(row, 0, g.nx, g.m) = P;
    g.F.block(row + g.nx, g.nx + (j - 1) * g.nu, g.nu, g.nu).setIdentity();
    Matrix next = A * P;
    next.block(0, g.nx + (j - 1) * g.nu, g.nx, g.nu) += system.B();
    P = std::move(next);
  }

  g.Gamma = Matrix::Zero(horizon * g.nx, horizon * g.nx);
  for (int i = 0; i < horizon; ++i)
    for (int j = 0; j <= i; ++j) g.Gamma.block(i * g.nx, j * g.nx, g.nx, g.nx) = g.Apow[i - j];
  g.Gamma_w = g.Gamma * kron(Matrix::Identity(horizon, horizon), system.Bw());

  g.Sigma_x = excited_state_cov(system);
  g.Sigma_z = block_diag(g.Sigma_x, Matrix::Identity(horizon * g.nu, horizon * g.nu));
  return g;
}

Matrix curvature(const RateGeometry& g) {
  const Matrix FSF = g.F * g.Sigma_z * g.F.transpose();
  const Matrix GtG = g.Gamma.transpose() * g.Gamma;
  const Eigen::Index D = g.np * g.nx;
  Matrix W = Matrix::Zero(D, D);
  for (int i = 0; i < g.horizon; ++i)
    for (int j = 0; j < g.horizon; ++j)
      W += kron(FSF.block(i * g.np, j * g.np, g.np, g.np), GtG.block(i * g.nx, j * g.nx, g.nx, g.nx));
  return symmetrize(W);
}

}  // namespace detail

Matrix rate_curvature(const lti::LtiSystem& system, int horizon) {
  return detail::curvature(detail::rate_geometry(system, horizon));
}

namespace {

// Linear maps from xi = [x_t; u_t..u_{t+tau+H-1}; w_t..w_{t+tau+H-1}] to
// a_t = F z_t, b_t = Gamma^T Gamma_w w_{t:t+H-1} and their lag-tau versions.
struct LagMaps {
  Matrix a0, b0, a1, b1;
  Matrix cov;  // blockdiag(Sigma_x, I, I)
};

LagMaps lag_maps(const detail::RateGeometry& g, const lti::LtiSystem& system, int tau) {
  const int H = g.horizon;
  const Eigen::Index span = tau + H;
  const Eigen::Index u0 = g.nx, w0 = g.nx + span * g.nu;
  const Eigen::Index n = w0 + span * g.nw;

  auto z_map = [&](int shift) {
    Matrix Z = Matrix::Zero(g.m, n);
    // x_{t+shift} = A^shift x_t + sum_i A^{shift-1-i} (B u_{t+i} + B_w w_{t+i})
    Z.block(0, 0, g.nx, g.nx) = g.Apow[shift];
    for (int i = 0; i < shift; ++i) {
      Z.block(0, u0 + i * g.nu, g.nx, g.nu) = g.Apow[shift - 1 - i] * system.B();
      Z.block(0, w0 + i * g.nw, g.nx, g.nw) = g.Apow[shift - 1 - i] * system.Bw();
    }
    for (int k = 0; k < H; ++k) Z.block(g.nx + k * g.nu, u0 + (shift + k) * g.nu, g.nu, g.nu).setIdentity();
    return Z;
  };
  auto omega_map = [&](int shift) {
    Matrix O = Matrix::Zero(H * g.nw, n);
    for (int k = 0; k < H; ++k) O.block(k * g.nw, w0 + (shift + k) * g.nw, g.nw, g.nw).setIdentity();
    return O;
  };

  const Matrix bmap = g.Gamma.transpose() * g.Gamma_w;
  LagMaps out;
  out.a0 = g.F * z_map(0);
  out.a1 = g.F * z_map(tau);
  out.b0 = bmap * omega_map(0);
  out.b1 = bmap * omega_map(tau);
  out.cov = Matrix::Identity(n, n);
  out.cov.topLeftCorner(g.nx, g.nx) = g.Sigma_x;
  return out;
}

// E[g_t g_{t+tau}^T] with g = -2 sum_j a_j (x) b_j (Isserlis; E[a_t b_t^T] = 0).
Matrix gradient_autocov(const detail::RateGeometry& g, const lti::LtiSystem& system, int tau) {
  const LagMaps L = lag_maps(g, system, tau);
  const Matrix Caa = L.a0 * L.cov * L.a1.transpose();
  const Matrix Cbb = L.b0 * L.cov * L.b1.transpose();
  const Matrix Cab = L.a0 * L.cov * L.b1.transpose();
  const Matrix Cba = L.b0 * L.cov * L.a1.transpose();
  const Eigen::Index np = g.np, nx = g.nx, D = np * nx;
  Matrix C = Matrix::Zero(D, D);
  for (int j = 0; j < g.horizon; ++j) {
    for (int l = 0; l < g.horizon; ++l) {
      C += kron(Caa.block(j * np, l * np, np, np), Cbb.block(j * nx, l * nx, nx, nx));
      for (Eigen::Index p = 0; p < np; ++p)
        for (Eigen::Index q = 0; q < nx; ++q)
          for (Eigen::Index r = 0; r < np; ++r)
            for (Eigen::Index s = 0; s < nx; ++s)
              C(p * nx + q, r * nx + s) += Cab(j * np + p, l * nx + s) * Cba(j * nx + q, l * np + r);
    }
  }
  return 4.0 * C;
}

}  // namespace

Sandwich intermediate_sandwich(const lti::LtiSystem& system, int horizon) {
  const detail::RateGeometry g = detail::rate_geometry(system, horizon);
  Sandwich out;
  out.W = detail::curvature(g);
  out.J = 2.0 * out.W;
  out.Sigma = gradient_autocov(g, system, 0);
  for (int tau = 1; tau < horizon; ++tau) {
    const Matrix C = gradient_autocov(g, system, tau);
    out.Sigma += C + C.transpose();
  }
  out.Sigma = symmetrize(out.Sigma);
  return out;
}

double intermediate_rate_closed_form(const lti::LtiSystem& system, int horizon) {
  const Sandwich s = intermediate_sandwich(system, horizon);
  const Eigen::LDLT<Matrix> J(s.J);
  if (J.info() != Eigen::Success) throw std::runtime_error("intermediate rate: singular curvature");
  return (J.solve(s.Sigma) * J.solve(s.W)).trace();
}

}  // namespace msp::theory
