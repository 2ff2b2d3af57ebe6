#pragma once

#include <Eigen/Dense>

namespace oedflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// log det of a symmetric positive definite matrix from its Cholesky factor.
/// Throws NumericalError when the input is not square, not symmetric, or the
/// factorization fails.
double logdet_spd(const Matrix& m);

/// Lower Cholesky factor; same failure contract as logdet_spd.
Matrix cholesky_lower(const Matrix& m);

/// Inverse of an SPD matrix via its Cholesky factor.
Matrix inverse_spd(const Matrix& m);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
class Rng;
Matrix random_orthogonal(std::size_t n, Rng& rng);

/// Orthonormal real Fourier basis: rows are DC, sqrt(2)cos/sin pairs, and
/// the Nyquist row for even n, all scaled by 1/sqrt(n).
Matrix real_fourier_basis(std::size_t n);

}  // namespace oedflow
