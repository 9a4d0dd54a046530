#pragma once

#include "msp/predictors.hpp"

namespace msp::predictors::detail {

// Regression windows t = 1..N-H stored column-wise:
// Z.col(t) = [y_t; u_t; ...; u_{t+H-1}], Y.col(t) = [y_{t+1}; ...; y_{t+H}].
struct Windows {
  Matrix Z;
  Matrix Y;
};

Windows build_windows(const Dataset& data, int horizon);

struct LsSolution {
  Matrix coef;
  double condition = 0.0;
  bool rank_deficient = false;
};

LsSolution solve_least_squares(const Matrix& Z, const Matrix& Y, LsPolicy policy);

}  // namespace msp::predictors::detail
