#pragma once

#include <cstdint>
#include <vector>

#include "msp/linalg.hpp"
#include "msp/predictors.hpp"

namespace msp::nonlinear {

/// p_{t+1} = mu p_t + w^p_t, q_{t+1} = lambda (q_t - p_t^2) + w^q_t, observed through
/// y_t = C [p_t, q_t, p_t^2, 1]^T + sigma_v v_t.
struct KoopmanSystem {
  double mu = 0.9;
  double lambda = 0.9;
  double sigma_w = 0.1;
  Matrix C = Matrix::Identity(4, 4);
  double sigma_v = 0.0;

  void validate() const;
  Eigen::Index dy() const { return C.rows(); }
};

struct KoopmanTrajectory {
  Matrix lifted;        // 4 x N, column t-1 = (p_t, q_t, p_t^2, 1)
  Matrix observations;  // d_y x N
};

/// Starts from (p, q) = (0, 0) at t = 0. Draw order per step: w^p, w^q, then v_t.
KoopmanTrajectory simulate_koopman(const KoopmanSystem& sys, Eigen::Index n, std::uint64_t seed);

/// The lifted transition with the realized noises inside the matrix:
/// x~_{t+1} = lifted_transition(w^p_t, w^q_t) x~_t.
Matrix lifted_transition(const KoopmanSystem& sys, double wp, double wq);

struct ComparisonOptions {
  predictors::AdamOptions adam{};
  int eval_factor = 10;  // evaluation rollout length = eval_factor * N
  int workers = 0;
  std::uint64_t kind_tag = 0;
};

struct ComparisonCell {
  int horizon = 0;
  int replica = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  double ss = 0.0, ms = 0.0, intermediate = 0.0;  // mean H-step error on the evaluation rollout
};

/// Per replica: one training rollout of length N and an independent evaluation
/// rollout, shared across horizons; all three predictors (no inputs) are fit for
/// each H. Least squares takes the minimum-norm solution on singular regressors.
/// Cells come back ordered by (H, replica).
std::vector<ComparisonCell> nonlinear_comparison(const KoopmanSystem& sys, const std::vector<int>& horizons,
                                                 Eigen::Index n, int replicas, std::uint64_t seed,
                                                 const ComparisonOptions& options = {});

}  // namespace msp::nonlinear
