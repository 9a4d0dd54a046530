#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "msp/errors.hpp"
#include "msp/predictors.hpp"
#include "window_data.hpp"

namespace msp::predictors {

MultiStepObjective::MultiStepObjective(const Dataset& data, int horizon)
    : horizon_(horizon), dy_(data.dy()), du_(data.du()) {
  const detail::Windows w = detail::build_windows(data, horizon);
  windows_ = w.Z.cols();
  const double inv = 1.0 / double(windows_);
  Szz_ = inv * (w.Z * w.Z.transpose());
  SYz_ = inv * (w.Y * w.Z.transpose());
  sYY_ = inv * w.Y.squaredNorm();
}

MultiStepObjective MultiStepObjective::from_moments(Matrix Szz, Matrix SYz, double sYY, int horizon,
                                                    Eigen::Index dy, Eigen::Index du) {
  const Eigen::Index m = dy + horizon * du;
  if (horizon < 1 || Szz.rows() != m || Szz.cols() != m || SYz.rows() != horizon * dy || SYz.cols() != m)
    throw std::invalid_argument("MultiStepObjective: moment shapes do not match the horizon");
  MultiStepObjective out;
  out.horizon_ = horizon;
  out.dy_ = dy;
  out.du_ = du;
  out.Szz_ = std::move(Szz);
  out.SYz_ = std::move(SYz);
  out.sYY_ = sYY;
  return out;
}

double MultiStepObjective::loss(const Matrix& G) const {
  if (G.rows() != SYz_.rows() || G.cols() != SYz_.cols())
    throw std::invalid_argument("MultiStepObjective: predictor shape mismatch");
  // Clamped at zero: cancellation can leave a tiny negative value at an exact fit.
  return std::max(0.0, sYY_ - 2.0 * G.cwiseProduct(SYz_).sum() + (G * Szz_).cwiseProduct(G).sum());
}

double MultiStepObjective::value_and_gradient(const Matrix& Gy, const Matrix& Gu, Matrix& dGy,
                                              Matrix& dGu) const {
  if (Gy.rows() != dy_ || Gy.cols() != dy_ || Gu.rows() != dy_ || Gu.cols() != du_)
    throw std::invalid_argument("MultiStepObjective: generator shape mismatch");
  const Eigen::Index m = dy_ + horizon_ * du_;
  const Matrix G = rollout_matrix(Gy, Gu, horizon_);
  const Matrix GS = G * Szz_;
  const double value = std::max(0.0, sYY_ - 2.0 * G.cwiseProduct(SYz_).sum() + GS.cwiseProduct(G).sum());
  const Matrix dG = 2.0 * (GS - SYz_);

  // Reverse pass through P_k = Gy P_{k-1} + Gu E_k, with P_k the k-th block row of G.
  dGy = Matrix::Zero(dy_, dy_);
  dGu = Matrix::Zero(dy_, du_);
  Matrix lambda = Matrix::Zero(dy_, m);
  for (int k = horizon_; k >= 1; --k) {
    lambda = dG.middleRows((k - 1) * dy_, dy_) + Gy.transpose() * lambda;
    if (k > 1) {
      dGy += lambda * G.middleRows((k - 2) * dy_, dy_).transpose();
    } else {
      dGy += lambda.leftCols(dy_);  // P_0 = [I, 0]
    }
    dGu += lambda.middleCols(dy_ + (k - 1) * du_, du_);
  }
  return value;
}

namespace {

double inf_norm(const Matrix& a, const Matrix& b) {
  double out = 0.0;
  if (a.size() > 0) out = a.cwiseAbs().maxCoeff();
  if (b.size() > 0) out = std::max(out, b.cwiseAbs().maxCoeff());
  return out;
}

}  // namespace

FitReport fit_intermediate(const Dataset& data, int horizon, const AdamOptions& options,
                           std::optional<SingleStepParams> init, LsPolicy policy) {
  if (horizon < 1) throw std::invalid_argument("fit_intermediate: H must be >= 1");
  if (data.length() < horizon + 1) throw std::invalid_argument("fit_intermediate: need N >= H+1");
  if (options.max_iters < 0 || !(options.step_size > 0.0))
    throw std::invalid_argument("fit_intermediate: invalid optimizer options");
  if (!init) {
    const FitReport ss = fit_single_step(data, policy);
    init = SingleStepParams{ss.predictor.Gy(), ss.predictor.Gu()};
  }
  const Eigen::Index ny = data.dy(), nu = data.du();
  if (init->Gy.rows() != ny || init->Gy.cols() != ny || init->Gu.rows() != ny || init->Gu.cols() != nu)
    throw std::invalid_argument("fit_intermediate: initial generator has the wrong shape");

  const MultiStepObjective objective(data, horizon);
  Matrix Gy = init->Gy, Gu = init->Gu;
  Matrix dGy, dGu;
  Matrix mGy = Matrix::Zero(ny, ny), vGy = Matrix::Zero(ny, ny);
  Matrix mGu = Matrix::Zero(ny, nu), vGu = Matrix::Zero(ny, nu);

  double loss = objective.value_and_gradient(Gy, Gu, dGy, dGu);
  const double initial = loss;
  double grad = inf_norm(dGy, dGu);
  Matrix bestGy = Gy, bestGu = Gu;
  double best_loss = loss, best_grad = grad;
  bool converged = grad <= options.grad_tol;
  int it = 0;
  double b1t = 1.0, b2t = 1.0;
  const double limit = options.divergence_factor * std::max(initial, std::numeric_limits<double>::min());

  while (!converged && it < options.max_iters) {
    ++it;
    b1t *= options.beta1;
    b2t *= options.beta2;
    const double c1 = 1.0 / (1.0 - b1t), c2 = 1.0 / (1.0 - b2t);
    auto step = [&](Matrix& p, Matrix& mom, Matrix& var, const Matrix& g) {
      mom = options.beta1 * mom + (1.0 - options.beta1) * g;
      var = options.beta2 * var + (1.0 - options.beta2) * g.cwiseAbs2();
      p.array() -= options.step_size * (c1 * mom.array()) / ((c2 * var.array()).sqrt() + options.epsilon);
    };
    step(Gy, mGy, vGy, dGy);
    step(Gu, mGu, vGu, dGu);

    loss = objective.value_and_gradient(Gy, Gu, dGy, dGu);
    if (!std::isfinite(loss) || loss > limit)
      throw DivergenceError("fit_intermediate: loss " + std::to_string(loss) + " exceeded " +
                            std::to_string(options.divergence_factor) + "x its initial value");
    grad = inf_norm(dGy, dGu);
    if (loss < best_loss) {
      best_loss = loss;
      best_grad = grad;
      bestGy = Gy;
      bestGu = Gu;
    }
    converged = grad <= options.grad_tol;
  }
  FitReport report{Predictor::rolled_out(std::move(bestGy), std::move(bestGu), horizon,
                                         PredictorClass::Intermediate)};
  report.samples = objective.windows();
  report.iterations = it;
  report.grad_norm = best_grad;
  report.initial_loss = initial;
  report.final_loss = best_loss;
  report.converged = converged;
  return report;
}

}  // namespace msp::predictors
