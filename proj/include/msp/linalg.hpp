#pragma once

#include <Eigen/Dense>

namespace msp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Largest eigenvalue modulus of a small dense square matrix.
double spectral_radius(const Matrix& m);

// Symmetric PSD square root; eigenvalues below `floor` are clamped to zero.
Matrix psd_sqrt(const Matrix& m, double floor = 1e-14);

// m^k for k >= 0.
Matrix matrix_power(const Matrix& m, int k);

// Kronecker product.
Matrix kron(const Matrix& a, const Matrix& b);

// Block-diagonal concatenation [a 0; 0 b].
Matrix block_diag(const Matrix& a, const Matrix& b);

// trace(m * s * m^T) without forming the product.
double weighted_frobenius_sq(const Matrix& m, const Matrix& s);

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace msp
