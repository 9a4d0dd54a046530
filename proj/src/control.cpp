#include "msp/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "msp/parallel.hpp"
#include "msp/random.hpp"

namespace msp::control {

MpcGain mpc_gain(const Matrix& G, int horizon, Eigen::Index dy, Eigen::Index du,
                 predictors::PredictorClass source) {
  if (horizon < 1 || du < 1) throw std::invalid_argument("mpc_gain: need H >= 1 and at least one input");
  if (G.rows() != horizon * dy || G.cols() != dy + horizon * du)
    throw std::invalid_argument("mpc_gain: predictor has the wrong shape");
  const Matrix Gy0 = G.leftCols(dy);
  const Matrix GU = G.rightCols(horizon * du);
  Matrix reg = GU.transpose() * GU;
  reg.diagonal().array() += 1.0;
  MpcGain out;
  out.K_H = -reg.llt().solve(GU.transpose() * Gy0);
  out.K = out.K_H.topRows(du);
  out.source = source;
  out.horizon = horizon;
  return out;
}

MpcGain mpc_gain(const predictors::Predictor& pred) {
  return mpc_gain(pred.G(), pred.horizon(), pred.dy(), pred.du(), pred.kind());
}

double clipped_cost(double J, double M) {
  if (std::isnan(J)) throw std::invalid_argument("clipped_cost: J is NaN");
  if (std::isinf(J) && J > 0) return M;
  // -log(e^-J + e^-M) = min(J, M) - log1p(exp(-|J - M|))
  return std::min(J, M) - std::log1p(std::exp(-std::abs(J - M)));
}

ControlReport closed_loop_eval(const lti::LtiSystem& system, const MpcGain& gain, double clip) {
  if (gain.K.rows() != system.du() || gain.K.cols() != system.dy())
    throw std::invalid_argument("closed_loop_eval: gain does not match the system");
  ControlReport r;
  r.clip = clip;
  const Matrix BK = system.B() * gain.K;
  const Matrix Acl = system.A() + BK * system.C();
  r.closed_loop_spectral_radius = spectral_radius(Acl);
  if (!(r.closed_loop_spectral_radius < 1.0)) {
    r.stable = false;
    r.avg_stage_cost = std::numeric_limits<double>::infinity();
    r.clipped_cost = clip;
    return r;
  }
  const Matrix R = system.Dv() * system.Dv().transpose();
  const Matrix Q = system.Bw() * system.Bw().transpose() + BK * R * BK.transpose();
  const Matrix Sigma = lti::solve_dlyap(Acl, symmetrize(Q));
  const Matrix Sigma_y = system.C() * Sigma * system.C().transpose() + R;
  Matrix weight = gain.K.transpose() * gain.K;
  weight.diagonal().array() += 1.0;
  r.stable = true;
  r.avg_stage_cost = (weight * Sigma_y).trace();
  r.clipped_cost = clipped_cost(r.avg_stage_cost, clip);
  return r;
}

std::vector<SweepCell> stabilization_sweep(const lti::LtiSystem& system, int horizon,
                                           const std::vector<Eigen::Index>& dataset_sizes, int replicas,
                                           std::uint64_t seed, const SweepOptions& options) {
  if (replicas < 1) throw std::invalid_argument("stabilization_sweep: replicas must be >= 1");
  if (system.du() < 1) throw std::invalid_argument("stabilization_sweep: system has no inputs");
  const std::size_t per_n = std::size_t(replicas);
  const std::size_t tasks = dataset_sizes.size() * per_n;

  auto run_cell = [&](std::size_t task) {
    SweepCell cell;
    cell.N = dataset_sizes[task / per_n];
    cell.replica = int(task % per_n);
    cell.seed = derive_seed(seed, {options.kind_tag, std::uint64_t(cell.N), std::uint64_t(cell.replica)});
    try {
      const predictors::Dataset data = predictors::Dataset::from(lti::simulate(system, cell.N, cell.seed));
      const predictors::FitReport ss = predictors::fit_single_step(data);
      const predictors::FitReport ms = predictors::fit_multi_step(data, horizon);
      const predictors::FitReport im = predictors::fit_intermediate(
          data, horizon, options.adam, predictors::SingleStepParams{ss.predictor.Gy(), ss.predictor.Gu()});
      const predictors::Predictor ss_h =
          predictors::rollout_composition(ss.predictor.Gy(), ss.predictor.Gu(), horizon);
      cell.ss = closed_loop_eval(system, mpc_gain(ss_h), options.clip);
      cell.ms = closed_loop_eval(system, mpc_gain(ms.predictor), options.clip);
      cell.intermediate = closed_loop_eval(system, mpc_gain(im.predictor), options.clip);
    } catch (const std::exception&) {
      cell.failed = true;
    }
    return cell;
  };
  return parallel_map<SweepCell>(tasks, run_cell, options.workers);
}

}  // namespace msp::control
