#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "msp/linalg.hpp"
#include "msp/lti_core.hpp"

namespace msp::predictors {

enum class PredictorClass { SingleStep, MultiStep, Intermediate };

/// Short label used in CSV output: "ss", "ms", "intermediate".
std::string_view label(PredictorClass c);

/// One training rollout {(y_t, u_t)}_{t=1..N}; column t-1 holds time t.
struct Dataset {
  Matrix y;
  Matrix u;
  std::uint64_t seed = 0;

  static Dataset from(const lti::Trajectory& traj);

  Eigen::Index length() const { return y.cols(); }
  Eigen::Index dy() const { return y.rows(); }
  Eigen::Index du() const { return u.rows(); }
};

/// H-step linear predictor y_{t+1:t+H} ~= G [y_t; u_{t:t+H-1}].
/// Rolled-out predictors (single-step and intermediate) keep their generating
/// pair and G is always rebuilt from it.
class Predictor {
 public:
  static Predictor multi_step(Matrix G, int horizon, Eigen::Index dy, Eigen::Index du);
  static Predictor rolled_out(Matrix Gy, Matrix Gu, int horizon, PredictorClass kind);

  const Matrix& G() const { return G_; }
  int horizon() const { return horizon_; }
  PredictorClass kind() const { return kind_; }
  Eigen::Index dy() const { return dy_; }
  Eigen::Index du() const { return du_; }

  bool has_generator() const { return kind_ != PredictorClass::MultiStep; }
  const Matrix& Gy() const;
  const Matrix& Gu() const;

 private:
  Predictor() = default;
  Matrix G_, Gy_, Gu_;
  int horizon_ = 0;
  PredictorClass kind_ = PredictorClass::MultiStep;
  Eigen::Index dy_ = 0, du_ = 0;
};

/// Block row k = [Gy^k, Gy^{k-1} Gu, ..., Gu, 0, ..., 0].
Matrix rollout_matrix(const Matrix& Gy, const Matrix& Gu, int horizon);

/// Single-step predictor (Gy, Gu) composed into an H-step map.
Predictor rollout_composition(const Matrix& Gy, const Matrix& Gu, int horizon);

struct FitReport {
  Predictor predictor;
  Eigen::Index samples = 0;         // regression windows used
  int iterations = 0;               // optimizer iterations (0 for least squares)
  double grad_norm = 0.0;           // inf-norm of the loss gradient at the returned point
  double initial_loss = 0.0;
  double final_loss = 0.0;          // mean empirical multi-step loss
  bool converged = true;            // gradient tolerance reached
  double gram_condition = 0.0;      // condition number of the regressor Gram matrix
  bool rank_deficient = false;
};

/// How least squares treats a numerically singular Gram matrix.
/// Underdetermined problems (fewer windows than regressors) always take the
/// minimum-norm solution.
enum class LsPolicy {
  Strict,       // throw SingularityError when cond >= 1e12
  MinimumNorm,  // return the minimum-Frobenius-norm minimizer
};

inline constexpr double kMaxGramCondition = 1e12;

FitReport fit_single_step(const Dataset& data, LsPolicy policy = LsPolicy::Strict);
FitReport fit_multi_step(const Dataset& data, int horizon, LsPolicy policy = LsPolicy::Strict);

struct AdamOptions {
  double step_size = 1e-2;
  int max_iters = 50000;
  double grad_tol = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double divergence_factor = 1e6;
};

struct SingleStepParams {
  Matrix Gy;
  Matrix Gu;
};

/// Adam on the mean H-step loss restricted to rolled-out predictors.
/// Defaults to the single-step least-squares fit as the starting point and
/// returns the best iterate seen.
FitReport fit_intermediate(const Dataset& data, int horizon, const AdamOptions& options = {},
                           std::optional<SingleStepParams> init = std::nullopt,
                           LsPolicy policy = LsPolicy::Strict);

/// Mean over windows t = 1..N-H of ||y_{t+1:t+H} - G z_t||^2.
double empirical_loss(const Predictor& pred, const Dataset& data);

/// Window sufficient statistics for the multi-step objective; the loss of any
/// G is s_YY - 2<G, S_Yz> + <G S_zz, G>.
class MultiStepObjective {
 public:
  MultiStepObjective(const Dataset& data, int horizon);

  /// Same objective built from second moments directly (population losses).
  static MultiStepObjective from_moments(Matrix Szz, Matrix SYz, double sYY, int horizon,
                                         Eigen::Index dy, Eigen::Index du);

  int horizon() const { return horizon_; }
  Eigen::Index windows() const { return windows_; }

  double loss(const Matrix& G) const;

  /// Loss of the rolled-out (Gy, Gu) and its gradient, by reverse-mode
  /// differentiation through the rollout recursion.
  double value_and_gradient(const Matrix& Gy, const Matrix& Gu, Matrix& dGy, Matrix& dGu) const;

 private:
  MultiStepObjective() = default;

  int horizon_ = 0;
  Eigen::Index dy_ = 0, du_ = 0, windows_ = 0;
  Matrix Szz_, SYz_;
  double sYY_ = 0.0;
};

/// Closed-form population loss in the fully observed setting:
/// ||(G - G*) Sigma_z^{1/2}||_F^2 + ||Gamma_w||_F^2.
class WellSpecEvaluator {
 public:
  WellSpecEvaluator(const lti::LtiSystem& system, int horizon);

  double loss(const Matrix& G) const;
  double irreducible() const { return irreducible_; }
  const lti::WellSpecRollout& rollout() const { return rollout_; }
  const Matrix& regressor_cov() const { return Sigma_z_; }

 private:
  lti::WellSpecRollout rollout_;
  Matrix Sigma_z_;
  double irreducible_;
};

/// Closed-form population loss in the partially observed setting (no inputs).
class MisSpecEvaluator {
 public:
  MisSpecEvaluator(const lti::InnovationsForm& innov, const lti::LtiSystem& system, int horizon);

  double loss(const Matrix& G) const;
  double irreducible() const { return irreducible_; }
  const lti::MisSpecRollout& rollout() const { return rollout_; }

 private:
  lti::MisSpecRollout rollout_;
  Matrix C_, Sigma_xhat_, DeDeT_;
  double irreducible_;
};

double population_loss_wellspec(const Predictor& pred, const lti::LtiSystem& system, int horizon);
double population_loss_misspec(const Predictor& pred, const lti::InnovationsForm& innov,
                               const lti::LtiSystem& system, int horizon);

}  // namespace msp::predictors
