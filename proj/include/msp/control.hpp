#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "msp/linalg.hpp"
#include "msp/lti_core.hpp"
#include "msp/predictors.hpp"

namespace msp::control {

struct MpcGain {
  Matrix K_H;  // H d_u x d_y plan gain
  Matrix K;    // d_u x d_y, first block row of K_H
  predictors::PredictorClass source = predictors::PredictorClass::MultiStep;
  int horizon = 0;
};

/// Minimizer of ||G_y0 y + G_U U||^2 + ||U||^2 over the input plan U:
/// K_H = -(G_U^T G_U + I)^{-1} G_U^T G_y0.
MpcGain mpc_gain(const Matrix& G, int horizon, Eigen::Index dy, Eigen::Index du,
                 predictors::PredictorClass source = predictors::PredictorClass::MultiStep);
MpcGain mpc_gain(const predictors::Predictor& pred);

inline constexpr double kDefaultClip = 1e3;

struct ControlReport {
  double closed_loop_spectral_radius = 0.0;
  double avg_stage_cost = std::numeric_limits<double>::infinity();
  double clipped_cost = kDefaultClip;
  double clip = kDefaultClip;
  bool stable = false;
};

/// -log(exp(-J) + exp(-M)) without overflow; J = +inf gives M.
double clipped_cost(double J, double M);

/// Output feedback u_t = K y_t: closed loop A + B K C driven by B_w w_t + B K D_v v_t.
/// The stage cost y^T y + u^T u is averaged per step (stationary expectation).
ControlReport closed_loop_eval(const lti::LtiSystem& system, const MpcGain& gain, double clip = kDefaultClip);

struct SweepOptions {
  predictors::AdamOptions adam{};  // intermediate fits start from the single-step fit
  double clip = kDefaultClip;
  int workers = 0;
  std::uint64_t kind_tag = 0;  // mixed into per-replica seeds
};

/// One (N, replica) cell: the three fitted predictors' gains evaluated in closed loop.
struct SweepCell {
  Eigen::Index N = 0;
  int replica = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  ControlReport ss, ms, intermediate;
};

/// For each N and replica: simulate with i.i.d. exploration inputs, fit all three
/// predictor classes, synthesize gains and evaluate them. Failures are recorded
/// per cell. Cells come back ordered by (N, replica).
std::vector<SweepCell> stabilization_sweep(const lti::LtiSystem& system, int horizon,
                                           const std::vector<Eigen::Index>& dataset_sizes, int replicas,
                                           std::uint64_t seed, const SweepOptions& options = {});

}  // namespace msp::control
