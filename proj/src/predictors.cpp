#include "msp/predictors.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "msp/errors.hpp"
#include "window_data.hpp"

namespace msp::predictors {

std::string_view label(PredictorClass c) {
  switch (c) {
    case PredictorClass::SingleStep: return "ss";
    case PredictorClass::MultiStep: return "ms";
    case PredictorClass::Intermediate: return "intermediate";
  }
  return "?";
}

Dataset Dataset::from(const lti::Trajectory& traj) {
  return Dataset{traj.observations, traj.inputs, traj.seed};
}

Predictor Predictor::multi_step(Matrix G, int horizon, Eigen::Index dy, Eigen::Index du) {
  if (horizon < 1) throw std::invalid_argument("Predictor: H must be >= 1");
  if (G.rows() != horizon * dy || G.cols() != dy + horizon * du)
    throw std::invalid_argument("Predictor: G has the wrong shape");
  Predictor p;
  p.G_ = std::move(G);
  p.horizon_ = horizon;
  p.kind_ = PredictorClass::MultiStep;
  p.dy_ = dy;
  p.du_ = du;
  return p;
}

Predictor Predictor::rolled_out(Matrix Gy, Matrix Gu, int horizon, PredictorClass kind) {
  if (kind == PredictorClass::MultiStep) throw std::invalid_argument("Predictor: multi-step predictors have no generator");
  Predictor p;
  p.G_ = rollout_matrix(Gy, Gu, horizon);
  p.dy_ = Gy.rows();
  p.du_ = Gu.cols();
  p.Gy_ = std::move(Gy);
  p.Gu_ = std::move(Gu);
  p.horizon_ = horizon;
  p.kind_ = kind;
  return p;
}

const Matrix& Predictor::Gy() const {
  if (!has_generator()) throw std::logic_error("Predictor: multi-step predictor has no Gy");
  return Gy_;
}

const Matrix& Predictor::Gu() const {
  if (!has_generator()) throw std::logic_error("Predictor: multi-step predictor has no Gu");
  return Gu_;
}

Matrix rollout_matrix(const Matrix& Gy, const Matrix& Gu, int horizon) {
  if (horizon < 1) throw std::invalid_argument("rollout_matrix: H must be >= 1");
  if (Gy.rows() != Gy.cols() || Gu.rows() != Gy.rows())
    throw std::invalid_argument("rollout_matrix: Gy must be square and Gu must have d_y rows");
  const Eigen::Index ny = Gy.rows(), nu = Gu.cols();
  const Eigen::Index m = ny + horizon * nu;
  Matrix G(horizon * ny, m);
  // Row block k = Gy * (row block k-1) + Gu placed at input slot k-1.
  Matrix row = Matrix::Zero(ny, m);
  row.leftCols(ny).setIdentity();
  for (int k = 1; k <= horizon; ++k) {
    Matrix next = Gy * row;
    next.block(0, ny + (k - 1) * nu, ny, nu) += Gu;
    row = std::move(next);
    G.middleRows((k - 1) * ny, ny) = row;
  }
  return G;
}

Predictor rollout_composition(const Matrix& Gy, const Matrix& Gu, int horizon) {
  return Predictor::rolled_out(Gy, Gu, horizon, PredictorClass::SingleStep);
}

namespace detail {

Windows build_windows(const Dataset& data, int horizon) {
  if (horizon < 1) throw std::invalid_argument("build_windows: H must be >= 1");
  const Eigen::Index n = data.length() - horizon;
  if (n < 1) throw std::invalid_argument("build_windows: need at least H+1 samples");
  const Eigen::Index ny = data.dy(), nu = data.du();
  Windows w;
  w.Z.resize(ny + horizon * nu, n);
  w.Y.resize(horizon * ny, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    w.Z.col(t).head(ny) = data.y.col(t);
    for (int j = 0; j < horizon; ++j) {
      w.Z.col(t).segment(ny + j * nu, nu) = data.u.col(t + j);
      w.Y.col(t).segment(j * ny, ny) = data.y.col(t + j + 1);
    }
  }
  return w;
}

LsSolution solve_least_squares(const Matrix& Z, const Matrix& Y, LsPolicy policy) {
  // Minimizes ||Y - coef * Z||_F over coef; columns are samples.
  const Eigen::Index m = Z.rows(), n = Z.cols();
  LsSolution out;
  const Matrix gram = Z * Z.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  const bool underdetermined = n < m;
  const bool singular = !(out.condition < kMaxGramCondition);
  if (singular && !underdetermined && policy == LsPolicy::Strict)
    throw SingularityError("least squares: regressor Gram matrix is singular (condition " +
                               std::to_string(out.condition) + ")",
                           out.condition);
  const Matrix Zt = Z.transpose();
  const Matrix Yt = Y.transpose();
  if (singular || underdetermined) {
    out.rank_deficient = true;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Zt);
    out.coef = cod.solve(Yt).transpose();
  } else {
    out.coef = Zt.householderQr().solve(Yt).transpose();
  }
  return out;
}

}  // namespace detail

FitReport fit_single_step(const Dataset& data, LsPolicy policy) {
  if (data.length() < 2) throw std::invalid_argument("fit_single_step: need N >= 2");
  const detail::Windows w = detail::build_windows(data, 1);
  const detail::LsSolution ls = detail::solve_least_squares(w.Z, w.Y, policy);
  const Eigen::Index ny = data.dy(), nu = data.du();
  FitReport report{Predictor::rolled_out(ls.coef.leftCols(ny), ls.coef.rightCols(nu), 1,
                                         PredictorClass::SingleStep)};
  report.samples = w.Z.cols();
  report.gram_condition = ls.condition;
  report.rank_deficient = ls.rank_deficient;
  report.final_loss = report.initial_loss = (w.Y - ls.coef * w.Z).squaredNorm() / double(w.Z.cols());
  return report;
}

FitReport fit_multi_step(const Dataset& data, int horizon, LsPolicy policy) {
  if (data.length() < horizon + 1) throw std::invalid_argument("fit_multi_step: need N >= H+1");
  const detail::Windows w = detail::build_windows(data, horizon);
  const detail::LsSolution ls = detail::solve_least_squares(w.Z, w.Y, policy);
  FitReport report{Predictor::multi_step(ls.coef, horizon, data.dy(), data.du())};
  report.samples = w.Z.cols();
  report.gram_condition = ls.condition;
  report.rank_deficient = ls.rank_deficient;
  report.final_loss = report.initial_loss = (w.Y - ls.coef * w.Z).squaredNorm() / double(w.Z.cols());
  return report;
}

double empirical_loss(const Predictor& pred, const Dataset& data) {
  if (pred.dy() != data.dy() || pred.du() != data.du())
    throw std::invalid_argument("empirical_loss: predictor and data dimensions differ");
  const detail::Windows w = detail::build_windows(data, pred.horizon());
  return (w.Y - pred.G() * w.Z).squaredNorm() / double(w.Z.cols());
}

WellSpecEvaluator::WellSpecEvaluator(const lti::LtiSystem& system, int horizon)
    : rollout_(lti::build_rollout_wellspec(system, horizon)),
      Sigma_z_(lti::stationary_regressor_cov(system, horizon)),
      irreducible_(rollout_.Gamma_w.squaredNorm()) {}

double WellSpecEvaluator::loss(const Matrix& G) const {
  if (G.rows() != rollout_.G_star.rows() || G.cols() != rollout_.G_star.cols())
    throw std::invalid_argument("WellSpecEvaluator: predictor shape mismatch");
  return weighted_frobenius_sq(G - rollout_.G_star, Sigma_z_) + irreducible_;
}

MisSpecEvaluator::MisSpecEvaluator(const lti::InnovationsForm& innov, const lti::LtiSystem& system,
                                   int horizon)
    : rollout_(lti::build_rollout_misspec(innov, system, horizon)),
      C_(system.C()),
      Sigma_xhat_(innov.Sigma_xhat),
      DeDeT_(innov.De * innov.De.transpose()),
      irreducible_(rollout_.Gamma_e.squaredNorm()) {}

double MisSpecEvaluator::loss(const Matrix& G) const {
  if (G.rows() != rollout_.G_star.rows() || G.cols() != rollout_.G_star.cols())
    throw std::invalid_argument("MisSpecEvaluator: predictor shape mismatch");
  const Matrix gap = rollout_.G_star - G;
  return weighted_frobenius_sq(rollout_.Phi + gap * C_, Sigma_xhat_) +
         weighted_frobenius_sq(gap, DeDeT_) + irreducible_;
}

double population_loss_wellspec(const Predictor& pred, const lti::LtiSystem& system, int horizon) {
  if (pred.horizon() != horizon) throw std::invalid_argument("population_loss_wellspec: horizon mismatch");
  return WellSpecEvaluator(system, horizon).loss(pred.G());
}

double population_loss_misspec(const Predictor& pred, const lti::InnovationsForm& innov,
                               const lti::LtiSystem& system, int horizon) {
  if (pred.horizon() != horizon) throw std::invalid_argument("population_loss_misspec: horizon mismatch");
  if (pred.du() != 0) throw std::invalid_argument("population_loss_misspec: predictor has inputs");
  return MisSpecEvaluator(innov, system, horizon).loss(pred.G());
}

}  // namespace msp::predictors
