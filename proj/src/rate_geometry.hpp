#pragma once

#include <vector>

#include "msp/linalg.hpp"
#include "msp/lti_core.hpp"

namespace msp::theory::detail {

// Linearization of the H-step rollout around (A, B):
// dG z = Gamma (I_H (x) Delta) F z for Delta = [dG_y, dG_u].
struct RateGeometry {
  int horizon = 0;
  Eigen::Index nx = 0, nu = 0, nw = 0, np = 0, m = 0;
  std::vector<Matrix> Apow;  // A^0 .. A^H
  Matrix F;                  // H np x m, block row j = [P_{j-1}; E_j]
  Matrix Gamma;              // H nx x H nx, block (i,j) = A^{i-j}
  Matrix Gamma_w;            // Gamma (I_H (x) B_w)
  Matrix Sigma_x;
  Matrix Sigma_z;
};

// Stationary state covariance; SingularityError when some state direction is
// never excited (the rates are then undefined).
Matrix excited_state_cov(const lti::LtiSystem& system);

RateGeometry rate_geometry(const lti::LtiSystem& system, int horizon);

// W = sum_{ij} (F_i Sigma_z F_j^T) (x) (Gamma^T Gamma)_{ij}.
Matrix curvature(const RateGeometry& g);

}  // namespace msp::theory::detail
