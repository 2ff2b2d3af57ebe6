#include "oedflow/linalg.hpp"

#include <cmath>

#include "oedflow/error.hpp"
#include "oedflow/rng.hpp"

namespace oedflow {

namespace {

Eigen::LLT<Matrix> factor(const Matrix& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0) throw NumericalError(std::string(who) + ": matrix must be square");
  if (!m.allFinite()) throw NumericalError(std::string(who) + ": non-finite entry");
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, scale))
    throw NumericalError(std::string(who) + ": matrix is not symmetric");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(who) + ": matrix is not positive definite");
  const auto diag = llt.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite())
    throw NumericalError(std::string(who) + ": matrix is not positive definite");
  return llt;
}

}  // namespace

double logdet_spd(const Matrix& m) {
  const auto llt = factor(m, "logdet_spd");
  const Matrix l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

Matrix cholesky_lower(const Matrix& m) { return factor(m, "cholesky").matrixL(); }

Matrix inverse_spd(const Matrix& m) {
  const auto llt = factor(m, "inverse_spd");
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

Matrix random_orthogonal(std::size_t n, Rng& rng) {
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix real_fourier_basis(std::size_t n) {
  Matrix f(n, n);
  const double inv = 1.0 / std::sqrt(static_cast<double>(n));
  std::size_t row = 0;
  for (std::size_t j = 0; j < n; ++j) f(row, j) = inv;
  ++row;
  for (std::size_t k = 1; 2 * k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = 2.0 * M_PI * static_cast<double>(k * j) / static_cast<double>(n);
      f(row, j) = std::sqrt(2.0) * inv * std::cos(ang);
      f(row + 1, j) = std::sqrt(2.0) * inv * std::sin(ang);
    }
    row += 2;
  }
  if (n % 2 == 0) {
    for (std::size_t j = 0; j < n; ++j) f(row, j) = (j % 2 == 0 ? inv : -inv);
    ++row;
  }
  return f;
}

}  // namespace oedflow
