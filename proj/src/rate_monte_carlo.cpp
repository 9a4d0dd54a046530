#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "msp/errors.hpp"
#include "msp/random.hpp"
#include "msp/theory.hpp"
#include "rate_geometry.hpp"

namespace msp::theory {

namespace {

struct BatchStats {
  Matrix grads;    // D x n per-window gradients
  Matrix hessian;  // mean per-window Hessian
};

// Exact gradient and Hessian of m_t(G_y, G_u) = sum_k ||x_{t+k} - yhat_k||^2 at
// (A, B), by first- and second-order forward tangents of
// yhat_k = G_y yhat_{k-1} + G_u u_{t+k-1}, yhat_0 = x_t.
BatchStats window_derivatives(const lti::LtiSystem& sys, const Matrix& X, const Matrix& U, int H,
                              Eigen::Index first, Eigen::Index count) {
  const Matrix& A = sys.A();
  const Matrix& B = sys.B();
  const Eigen::Index nx = sys.dx(), nu = sys.du(), np = nx + nu, D = nx * np;
  BatchStats out;
  out.grads.resize(D, count);
  out.hessian = Matrix::Zero(D, D);

  Vector yhat(nx), r(nx);
  Matrix tang(nx, D), tang_next(nx, D);
  Matrix sec(nx, D * D), sec_next(nx, D * D);
  Vector grad(D);
  Matrix hess(D, D);
  for (Eigen::Index w = 0; w < count; ++w) {
    const Eigen::Index t = first + w;
    yhat = X.col(t);
    tang.setZero();
    sec.setZero();
    grad.setZero();
    hess.setZero();
    for (int k = 1; k <= H; ++k) {
      const auto u = U.col(t + k - 1);
      tang_next.noalias() = A * tang;
      sec_next.noalias() = A * sec;
      // Parameter p = c * nx + q is entry (q, c) of [G_y, G_u].
      for (Eigen::Index c = 0; c < np; ++c) {
        const double v = c < nx ? yhat(c) : u(c - nx);
        for (Eigen::Index q = 0; q < nx; ++q) {
          const Eigen::Index p = c * nx + q;
          tang_next(q, p) += v;
          if (c < nx) {
            for (Eigen::Index p2 = 0; p2 < D; ++p2) {
              sec_next(q, p * D + p2) += tang(c, p2);
              sec_next(q, p2 * D + p) += tang(c, p2);
            }
          }
        }
      }
      yhat = A * yhat + B * u;
      std::swap(tang, tang_next);
      std::swap(sec, sec_next);
      r = X.col(t + k) - yhat;
      grad.noalias() -= 2.0 * tang.transpose() * r;
      hess.noalias() += 2.0 * tang.transpose() * tang;
      const Vector rs = sec.transpose() * r;
      hess -= 2.0 * Eigen::Map<const Matrix>(rs.data(), D, D);
    }
    out.grads.col(w) = grad;
    out.hessian += hess;
  }
  out.hessian = symmetrize(out.hessian / double(count));
  return out;
}

// Rectangular lag window: C_0 + sum_{tau=1}^{L} (C_tau + C_tau^T), C_tau = (1/n) sum g_t g_{t+tau}^T.
// Uncentered because the gradient has mean exactly zero at the truth.
Matrix long_run_cov(const Matrix& g, int max_lag) {
  const Eigen::Index n = g.cols();
  Matrix S = g * g.transpose();
  for (int tau = 1; tau <= max_lag && tau < n; ++tau) {
    const Matrix C = g.leftCols(n - tau) * g.rightCols(n - tau).transpose();
    S += C + C.transpose();
  }
  return symmetrize(S / double(n));
}

bool is_psd(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  return es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, hi);
}

double sandwich_value(const Matrix& J, const Matrix& Sigma, const Matrix& W) {
  const Eigen::LDLT<Matrix> f(J);
  return (f.solve(Sigma) * f.solve(W)).trace();
}

}  // namespace

RateEstimate intermediate_rate(const lti::LtiSystem& system, int horizon, const MonteCarloConfig& mc) {
  const detail::RateGeometry geo = detail::rate_geometry(system, horizon);
  if (mc.T < 2 || mc.burn_in < 0 || mc.max_lag < 0 || mc.batches < 2)
    throw std::invalid_argument("intermediate_rate: invalid Monte Carlo configuration");
  const Eigen::Index per_batch = mc.T / mc.batches;
  if (per_batch <= 2 * mc.max_lag)
    throw std::invalid_argument("intermediate_rate: batches too short for the lag window");
  const Matrix W = detail::curvature(geo);

  // One stationary trajectory; window t uses x_t, u_{t:t+H-1}, x_{t+1:t+H}.
  const Eigen::Index used = per_batch * mc.batches;
  const Eigen::Index len = used + horizon;
  Matrix X(geo.nx, len + 1), U(geo.nu, len);
  {
    NormalStream rng(mc.seed);
    Vector x = Vector::Zero(geo.nx);
    Vector u(geo.nu), w(geo.nw);
    for (std::int64_t s = 0; s < mc.burn_in; ++s) {
      u = rng.draw(geo.nu);
      w = rng.draw(geo.nw);
      x = system.A() * x + system.B() * u + system.Bw() * w;
    }
    X.col(0) = x;
    for (Eigen::Index s = 0; s < len; ++s) {
      u = rng.draw(geo.nu);
      w = rng.draw(geo.nw);
      U.col(s) = u;
      x = system.A() * x + system.B() * u + system.Bw() * w;
      X.col(s + 1) = x;
    }
  }

  std::vector<BatchStats> batches(std::size_t(mc.batches));
#pragma omp parallel for schedule(static)
  for (int b = 0; b < mc.batches; ++b)
    batches[std::size_t(b)] = window_derivatives(system, X, U, horizon, Eigen::Index(b) * per_batch, per_batch);

  RateEstimate out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int lag = attempt == 0 ? mc.max_lag : 2 * mc.max_lag;
    if (lag >= per_batch) break;
    std::vector<Matrix> sig(batches.size());
#pragma omp parallel for schedule(static)
    for (int b = 0; b < mc.batches; ++b) sig[std::size_t(b)] = long_run_cov(batches[std::size_t(b)].grads, lag);

    const Eigen::Index D = W.rows();
    Matrix J = Matrix::Zero(D, D), Sigma = Matrix::Zero(D, D);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      J += batches[b].hessian;
      Sigma += sig[b];
    }
    J /= double(mc.batches);
    Sigma /= double(mc.batches);
    if (!is_psd(Sigma)) continue;

    out.value = sandwich_value(J, Sigma, W);
    double mean = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const double v = sandwich_value(batches[b].hessian, sig[b], W);
      mean += v;
      sq += v * v;
    }
    mean /= double(mc.batches);
    const double var = std::max(0.0, (sq / double(mc.batches) - mean * mean)) * double(mc.batches) / double(mc.batches - 1);
    out.std_error = std::sqrt(var / double(mc.batches));
    out.max_lag_used = lag;
    out.J = std::move(J);
    out.Sigma = std::move(Sigma);
    return out;
  }
  throw SolverError("intermediate_rate: estimated gradient covariance is not positive semidefinite");
}

}  // namespace msp::theory
