#include "msp/nonlinear.hpp"

#include <cmath>
#include <stdexcept>

#include "msp/parallel.hpp"
#include "msp/random.hpp"

namespace msp::nonlinear {

void KoopmanSystem::validate() const {
  if (!(std::abs(mu) < 1.0) || !(std::abs(lambda) < 1.0))
    throw std::invalid_argument("KoopmanSystem: |mu| and |lambda| must be < 1");
  if (!(sigma_w >= 0.0) || !(sigma_v >= 0.0)) throw std::invalid_argument("KoopmanSystem: noise scales must be >= 0");
  if (C.cols() != 4 || C.rows() < 1) throw std::invalid_argument("KoopmanSystem: C must be d_y x 4");
}

KoopmanTrajectory simulate_koopman(const KoopmanSystem& sys, Eigen::Index n, std::uint64_t seed) {
  sys.validate();
  if (n < 1) throw std::invalid_argument("simulate_koopman: N must be >= 1");
  NormalStream rng(seed);
  KoopmanTrajectory out;
  out.lifted.resize(4, n);
  out.observations.resize(sys.dy(), n);
  double p = 0.0, q = 0.0;
  auto advance = [&] {
    const double wp = sys.sigma_w * rng.next();
    const double wq = sys.sigma_w * rng.next();
    const double p_next = sys.mu * p + wp;
    q = sys.lambda * (q - p * p) + wq;
    p = p_next;
  };
  advance();
  for (Eigen::Index t = 0; t < n; ++t) {
    out.lifted.col(t) << p, q, p * p, 1.0;
    const Vector v = rng.draw(sys.dy());
    out.observations.col(t) = sys.C * out.lifted.col(t) + sys.sigma_v * v;
    advance();
  }
  return out;
}

Matrix lifted_transition(const KoopmanSystem& sys, double wp, double wq) {
  Matrix M(4, 4);
  M << sys.mu, 0.0, 0.0, wp,
       0.0, sys.lambda, -sys.lambda, wq,
       2.0 * sys.mu * wp, 0.0, sys.mu * sys.mu, wp * wp,
       0.0, 0.0, 0.0, 1.0;
  return M;
}

std::vector<ComparisonCell> nonlinear_comparison(const KoopmanSystem& sys, const std::vector<int>& horizons,
                                                 Eigen::Index n, int replicas, std::uint64_t seed,
                                                 const ComparisonOptions& options) {
  sys.validate();
  if (replicas < 1) throw std::invalid_argument("nonlinear_comparison: replicas must be >= 1");
  if (options.eval_factor < 1) throw std::invalid_argument("nonlinear_comparison: eval_factor must be >= 1");
  for (int H : horizons)
    if (H < 1) throw std::invalid_argument("nonlinear_comparison: horizons must be >= 1");

  using predictors::LsPolicy;
  const std::size_t per_h = std::size_t(replicas);
  auto run_cell = [&](std::size_t task) {
    ComparisonCell cell;
    cell.horizon = horizons[task / per_h];
    cell.replica = int(task % per_h);
    // Datasets depend on the replica only, so every horizon sees the same data.
    cell.seed = derive_seed(seed, {options.kind_tag, std::uint64_t(n), std::uint64_t(cell.replica)});
    try {
      const std::uint64_t eval_seed = derive_seed(cell.seed, {1});
      const predictors::Dataset train{simulate_koopman(sys, n, cell.seed).observations, Matrix(0, n), cell.seed};
      const Eigen::Index n_eval = options.eval_factor * n;
      const predictors::Dataset eval{simulate_koopman(sys, n_eval, eval_seed).observations, Matrix(0, n_eval),
                                     eval_seed};
      const int H = cell.horizon;
      const predictors::FitReport ss = predictors::fit_single_step(train, LsPolicy::MinimumNorm);
      const predictors::FitReport ms = predictors::fit_multi_step(train, H, LsPolicy::MinimumNorm);
      const predictors::FitReport im = predictors::fit_intermediate(
          train, H, options.adam, predictors::SingleStepParams{ss.predictor.Gy(), ss.predictor.Gu()},
          LsPolicy::MinimumNorm);
      cell.ss = predictors::empirical_loss(predictors::rollout_composition(ss.predictor.Gy(), ss.predictor.Gu(), H), eval);
      cell.ms = predictors::empirical_loss(ms.predictor, eval);
      cell.intermediate = predictors::empirical_loss(im.predictor, eval);
    } catch (const std::exception&) {
      cell.failed = true;
    }
    return cell;
  };
  return parallel_map<ComparisonCell>(horizons.size() * per_h, run_cell, options.workers);
}

}  // namespace msp::nonlinear
