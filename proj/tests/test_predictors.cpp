#include <gtest/gtest.h>

#include <cmath>

#include "msp/errors.hpp"
#include "msp/lti_core.hpp"
#include "msp/predictors.hpp"
#include "msp/theory.hpp"
#include "support/generators.hpp"

namespace msp::predictors {
namespace {

using testing::Gen;

Dataset noise_free_scalar(Eigen::Index n, std::uint64_t seed) {
  Gen gen(seed);
  Dataset d;
  d.y.resize(1, n);
  d.u = gen.normal(1, n);
  d.y(0, 0) = 1.0;
  for (Eigen::Index t = 1; t < n; ++t) d.y(0, t) = 0.5 * d.y(0, t - 1) + d.u(0, t - 1);
  return d;
}

Dataset noise_free_full(const lti::LtiSystem& sys, Eigen::Index n, std::uint64_t seed) {
  return Dataset::from(lti::simulate(sys.without_process_noise(), n, seed));
}

TEST(Rollout, Examples) {
  const Matrix Gy = Matrix::Constant(1, 1, 0.5), Gu = Matrix::Constant(1, 1, 1.0);
  Matrix one(1, 2);
  one << 0.5, 1.0;
  EXPECT_EQ((rollout_matrix(Gy, Gu, 1) - one).norm(), 0.0);

  const Matrix G3 = rollout_matrix(Gy, Gu, 3);
  EXPECT_EQ(G3.rows(), 3);
  EXPECT_EQ(G3.cols(), 4);
  EXPECT_DOUBLE_EQ(G3(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(G3(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(G3(2, 0), 0.125);
  EXPECT_DOUBLE_EQ(G3(2, 1), 0.25);
  EXPECT_DOUBLE_EQ(G3(2, 3), 1.0);
  EXPECT_EQ(G3(0, 2), 0.0);

  // Nilpotent collapse: only the k-th input block of row k survives.
  Gen gen(4);
  const Matrix Gu2 = gen.normal(2, 3);
  const Matrix G = rollout_matrix(Matrix::Zero(2, 2), Gu2, 4);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j) {
      const Matrix block = G.block(2 * k, 2 + 3 * j, 2, 3);
      if (j == k) EXPECT_EQ((block - Gu2).norm(), 0.0);
      else EXPECT_EQ(block.norm(), 0.0);
    }
  EXPECT_EQ(G.leftCols(2).norm(), 0.0);
}

TEST(Rollout, GeneratorRebuildsStoredMatrix) {
  Gen gen(5);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Index dy = gen.integer(1, 3), du = gen.integer(0, 2);
    const int H = gen.integer(1, 6);
    const auto p = Predictor::rolled_out(gen.normal(dy, dy), gen.normal(dy, du), H, PredictorClass::Intermediate);
    EXPECT_TRUE(p.G() == rollout_matrix(p.Gy(), p.Gu(), H));
    EXPECT_TRUE(rollout_composition(p.Gy(), p.Gu(), H).G() == p.G());
  }
  const auto ms = Predictor::multi_step(Matrix::Zero(2, 3), 2, 1, 1);
  EXPECT_FALSE(ms.has_generator());
  EXPECT_THROW(ms.Gy(), std::logic_error);
  EXPECT_THROW(Predictor::multi_step(Matrix::Zero(2, 4), 2, 1, 1), std::invalid_argument);
}

TEST(FitSingleStep, OneSampleMinimumNorm) {
  Dataset d;
  d.y.resize(1, 2);
  d.y << 2.0, 1.0;
  d.u = Matrix::Zero(1, 2);
  const auto fit = fit_single_step(d);
  EXPECT_NEAR(fit.predictor.Gy()(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(fit.predictor.Gu()(0, 0), 0.0, 1e-14);
  EXPECT_EQ(fit.samples, 1);
}

TEST(FitSingleStep, ExactRecovery) {
  const auto fit = fit_single_step(noise_free_scalar(50, 1));
  EXPECT_NEAR(fit.predictor.Gy()(0, 0), 0.5, 1e-10);
  EXPECT_NEAR(fit.predictor.Gu()(0, 0), 1.0, 1e-10);
  EXPECT_LT(fit.final_loss, 1e-20);
}

TEST(FitSingleStep, RejectsSingularRegressors) {
  Dataset d;
  d.y = Matrix::Ones(1, 20);
  d.u = Matrix::Ones(1, 20);
  try {
    fit_single_step(d);
    FAIL() << "expected SingularityError";
  } catch (const SingularityError& e) {
    EXPECT_GE(e.condition(), kMaxGramCondition);
  }
  const auto fit = fit_single_step(d, LsPolicy::MinimumNorm);
  EXPECT_TRUE(fit.rank_deficient);
  EXPECT_NEAR(fit.predictor.Gy()(0, 0), 0.5, 1e-10);
  EXPECT_NEAR(fit.predictor.Gu()(0, 0), 0.5, 1e-10);
}

TEST(FitSingleStep, LargeSampleConsistency) {
  const auto sys = testing::wellspec_system(0.9);
  const auto fit = fit_single_step(Dataset::from(lti::simulate(sys, 100'000, 21)));
  Matrix est(2, 3), truth(2, 3);
  est << fit.predictor.Gy(), fit.predictor.Gu();
  truth << sys.A(), sys.B();
  EXPECT_LE((est - truth).norm(), 0.05);
}

TEST(FitMultiStep, CollapsesAtHorizonOne) {
  const auto data = Dataset::from(lti::simulate(testing::wellspec_system(0.75), 300, 8));
  const auto ss = fit_single_step(data);
  const auto ms = fit_multi_step(data, 1);
  EXPECT_LT((ss.predictor.G() - ms.predictor.G()).norm(), 1e-12);
  const auto im = fit_intermediate(data, 1);
  EXPECT_LT((im.predictor.G() - ss.predictor.G()).norm(), 1e-6);
}

TEST(FitMultiStep, RecoversRolloutMatrix) {
  Gen gen(9);
  for (int c = 0; c < 5; ++c) {
    const auto sys = gen.full_system(gen.integer(1, 3), gen.integer(1, 2));
    const int H = gen.integer(1, 5);
    const auto fit = fit_multi_step(noise_free_full(sys, 200, 30 + c), H);
    EXPECT_LT((fit.predictor.G() - lti::build_rollout_wellspec(sys, H).G_star).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(FitMultiStep, RequiresEnoughData) {
  Dataset d;
  d.y = Matrix::Ones(1, 3);
  d.u = Matrix(0, 3);
  EXPECT_THROW(fit_multi_step(d, 3), std::invalid_argument);
}

TEST(FitIntermediate, StationaryAtTruthOnNoiseFreeData) {
  const auto sys = testing::wellspec_system(0.5);
  const auto data = noise_free_full(sys, 200, 3);
  const auto fit = fit_intermediate(data, 5, {}, SingleStepParams{sys.A(), sys.B()});
  EXPECT_LT(fit.grad_norm, 1e-8);
  EXPECT_LT((fit.predictor.Gy() - sys.A()).norm(), 1e-12);
  EXPECT_LT((fit.predictor.Gu() - sys.B()).norm(), 1e-12);
}

TEST(FitIntermediate, NestedLosses) {
  Gen gen(10);
  for (int c = 0; c < 6; ++c) {
    const lti::LtiSystem sys = c % 2 == 0 ? testing::wellspec_system(gen.uniform(0.3, 0.9))
                                          : testing::misspec_system(gen.uniform(0.3, 0.9));
    const int H = gen.integer(2, 8);
    const auto data = Dataset::from(lti::simulate(sys, 400, 100 + c));
    AdamOptions opts;
    opts.max_iters = 2000;
    const auto ss = fit_single_step(data);
    const auto ms = fit_multi_step(data, H);
    const auto im = fit_intermediate(data, H, opts);
    const double l_ss = empirical_loss(rollout_composition(ss.predictor.Gy(), ss.predictor.Gu(), H), data);
    const double l_ms = empirical_loss(ms.predictor, data);
    const double l_im = empirical_loss(im.predictor, data);
    EXPECT_LE(l_ms, l_im * (1 + 1e-12)) << "case " << c;
    EXPECT_LE(l_im, l_ss * (1 + 1e-12)) << "case " << c;
    EXPECT_NEAR(im.initial_loss, l_ss, 1e-9 * l_ss);
    EXPECT_LE(im.final_loss, im.initial_loss);
    EXPECT_LE(im.iterations, opts.max_iters);
    EXPECT_TRUE(std::isfinite(im.final_loss));
  }
}

TEST(EmpiricalLoss, Definitions) {
  const auto sys = testing::wellspec_system(0.5);
  const auto data = noise_free_full(sys, 100, 4);
  const int H = 3;
  EXPECT_LT(empirical_loss(Predictor::multi_step(lti::build_rollout_wellspec(sys, H).G_star, H, 2, 1), data), 1e-24);

  const auto noisy = Dataset::from(lti::simulate(sys, 100, 5));
  double direct = 0.0;
  for (Eigen::Index t = 0; t + H < 100; ++t)
    for (int k = 1; k <= H; ++k) direct += noisy.y.col(t + k).squaredNorm();
  direct /= double(100 - H);
  const double zero = empirical_loss(Predictor::multi_step(Matrix::Zero(2 * H, 2 + H), H, 2, 1), noisy);
  EXPECT_NEAR(zero, direct, 1e-12 * direct);
}

TEST(Objective, MatchesEmpiricalLoss) {
  Gen gen(12);
  const auto data = Dataset::from(lti::simulate(testing::wellspec_system(0.75), 150, 6));
  const int H = 4;
  const MultiStepObjective obj(data, H);
  for (int i = 0; i < 5; ++i) {
    const auto p = Predictor::rolled_out(gen.stable(2, 0.1, 0.9), gen.normal(2, 1), H, PredictorClass::Intermediate);
    const double direct = empirical_loss(p, data);
    EXPECT_NEAR(obj.loss(p.G()), direct, 1e-10 * direct);
    Matrix dGy, dGu;
    EXPECT_NEAR(obj.value_and_gradient(p.Gy(), p.Gu(), dGy, dGu), direct, 1e-10 * direct);
  }
}

TEST(Objective, GradientMatchesCentralDifferences) {
  Gen gen(13);
  for (int point = 0; point < 20; ++point) {
    const auto sys = point % 2 == 0 ? gen.full_system(2, 1) : gen.observed_system(3, 2);
    const int H = gen.integer(1, 6);
    const auto data = Dataset::from(lti::simulate(sys, 80, 200 + point));
    const MultiStepObjective obj(data, H);
    const Matrix Gy = gen.stable(data.dy(), 0.2, 0.9);
    const Matrix Gu = gen.normal(data.dy(), data.du());
    Matrix dGy, dGu;
    obj.value_and_gradient(Gy, Gu, dGy, dGu);

    const double h = 1e-6;
    Matrix fd_y(Gy.rows(), Gy.cols()), fd_u(Gu.rows(), Gu.cols());
    for (Eigen::Index i = 0; i < Gy.size(); ++i) {
      Matrix p = Gy, m = Gy;
      p(i) += h;
      m(i) -= h;
      fd_y(i) = (obj.loss(rollout_matrix(p, Gu, H)) - obj.loss(rollout_matrix(m, Gu, H))) / (2 * h);
    }
    for (Eigen::Index i = 0; i < Gu.size(); ++i) {
      Matrix p = Gu, m = Gu;
      p(i) += h;
      m(i) -= h;
      fd_u(i) = (obj.loss(rollout_matrix(Gy, p, H)) - obj.loss(rollout_matrix(Gy, m, H))) / (2 * h);
    }
    const double scale = std::max(1.0, std::sqrt(dGy.squaredNorm() + dGu.squaredNorm()));
    const double err = std::sqrt((dGy - fd_y).squaredNorm() + (dGu - fd_u).squaredNorm());
    EXPECT_LE(err / scale, 1e-4) << "point " << point;
  }
}

TEST(PopulationLoss, WellspecExamples) {
  const auto scalar = testing::scalar_system(0.5);
  const auto r = lti::build_rollout_wellspec(scalar, 2);
  EXPECT_DOUBLE_EQ(population_loss_wellspec(Predictor::multi_step(r.G_star, 2, 1, 0), scalar, 2), 2.25);

  Gen gen(14);
  const auto sys = testing::wellspec_system(0.9);
  const WellSpecEvaluator eval(sys, 3);
  for (int i = 0; i < 10; ++i) EXPECT_GE(eval.loss(gen.normal(6, 5)), eval.irreducible());
}

TEST(PopulationLoss, MisspecExamples) {
  lti::LtiSystem memoryless(Matrix::Zero(2, 2), Matrix(2, 0), Matrix::Identity(2, 2), Matrix::Identity(1, 2),
                            Matrix::Identity(1, 1));
  const auto innov0 = lti::kalman_innovations(memoryless);
  const int H = 4;
  EXPECT_NEAR(population_loss_misspec(Predictor::multi_step(Matrix::Zero(H, 1), H, 1, 0), innov0, memoryless, H),
              H * innov0.De.squaredNorm(), 1e-12);

  Gen gen(15);
  const auto sys = testing::misspec_system(0.75);
  const auto innov = lti::kalman_innovations(sys);
  const MisSpecEvaluator eval(innov, sys, H);
  EXPECT_NEAR(eval.irreducible(), eval.rollout().Gamma_e.squaredNorm(), 1e-12);
  for (int i = 0; i < 10; ++i) EXPECT_GE(eval.loss(gen.normal(H, 1)), eval.irreducible());
}

TEST(PopulationLoss, AgreesWithLongRolloutAverage) {
  const int H = 5;
  {
    const auto sys = testing::misspec_system(0.75);
    const auto innov = lti::kalman_innovations(sys);
    const Matrix G1 = theory::single_step_limit(innov, sys);
    const auto pred = rollout_composition(G1, Matrix(1, 0), H);
    const auto traj = lti::simulate(sys, 1'000'000 + 1000, 31);
    Dataset d;
    d.y = traj.observations.rightCols(1'000'000);
    d.u = Matrix(0, 1'000'000);
    const double pop = population_loss_misspec(pred, innov, sys, H);
    EXPECT_NEAR(empirical_loss(pred, d), pop, 0.01 * pop);
  }
  {
    const auto sys = testing::wellspec_system(0.75);
    Gen gen(16);
    Matrix G = lti::build_rollout_wellspec(sys, H).G_star + 0.1 * gen.normal(2 * H, 2 + H);
    const auto pred = Predictor::multi_step(G, H, 2, 1);
    const auto traj = lti::simulate(sys, 1'000'000 + 1000, 32);
    Dataset d;
    d.y = traj.observations.rightCols(1'000'000);
    d.u = traj.inputs.rightCols(1'000'000);
    const double pop = population_loss_wellspec(pred, sys, H);
    EXPECT_NEAR(empirical_loss(pred, d), pop, 0.01 * pop);
  }
}

}  // namespace
}  // namespace msp::predictors
