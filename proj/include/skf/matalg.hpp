#pragma once

// Symmetric positive-definite matrix algebra: Denman-Beavers square roots,
// Cholesky solves and the 2x2 block covariance used by the change-rate filter.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "skf/errors.hpp"

namespace skf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kSymmetryRejectTolerance = 1e-8;

inline double symmetry_defect(const Matrix& x) {
  const double norm = x.norm();
  if (norm == 0.0) return 0.0;
  return (x - x.transpose()).norm() / norm;
}

inline void symmetrize(Matrix& x) { x = 0.5 * (x + x.transpose()).eval(); }

class SpdMatrix {
public:
  SpdMatrix() = default;

  // Positive definiteness is not checked here; operations discover it through
  // a failing Cholesky factorization.
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) {
      std::ostringstream os;
      os << "SpdMatrix must be square and non-empty, got " << m_.rows() << "x" << m_.cols();
      throw DomainError(os.str());
    }
    if (!m_.allFinite()) throw DomainError("SpdMatrix has non-finite entries");
    const double defect = symmetry_defect(m_);
    if (defect > kSymmetryRejectTolerance) {
      std::ostringstream os;
      os << "matrix is not symmetric (relative defect " << defect << ")";
      throw DomainError(os.str());
    }
    if (defect > kSymmetryTolerance) {
      symmetrize(m_);
      symmetrized_ = true;
    }
  }

  static SpdMatrix identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }
  static SpdMatrix diagonal(const Vector& d) { return SpdMatrix(Matrix(d.asDiagonal())); }

  const Matrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  // True when the constructor repaired a small symmetry defect.
  bool symmetrized() const noexcept { return symmetrized_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

private:
  Matrix m_;
  bool symmetrized_ = false;
};

// [[A, C^T], [C, B]]
struct BlockSpdMatrix {
  SpdMatrix a;
  SpdMatrix b;
  Matrix c;

  Index block_dim() const noexcept { return a.dim(); }

  Matrix assemble() const {
    const Index n = a.dim();
    const Index k = b.dim();
    if (c.rows() != k || c.cols() != n) throw PreconditionError("block coupling has wrong shape");
    Matrix full(n + k, n + k);
    full.topLeftCorner(n, n) = a.matrix();
    full.bottomRightCorner(k, k) = b.matrix();
    full.bottomLeftCorner(k, n) = c;
    full.topRightCorner(n, k) = c.transpose();
    return full;
  }

  static BlockSpdMatrix split(const Matrix& full, Index n) {
    const Index k = full.rows() - n;
    return BlockSpdMatrix{SpdMatrix(full.topLeftCorner(n, n)), SpdMatrix(full.bottomRightCorner(k, k)),
                          full.bottomLeftCorner(k, n)};
  }
};

struct RootOptions {
  double tol = 1e-11;
  int max_iter = 100;
};

struct RootResult {
  Matrix value;
  int iterations = 0;
  double residual = 0.0;
  bool input_symmetrized = false;
};

namespace detail {

struct CholeskyInverse {
  Matrix inverse;
  double log_det = 0.0;
};

inline CholeskyInverse cholesky_inverse(const Matrix& x) {
  Eigen::LLT<Matrix> llt(x);
  if (llt.info() != Eigen::Success) throw DomainError("matrix is not positive definite (Cholesky failed)");
  const Matrix& l = llt.matrixLLT();
  double log_det = 0.0;
  for (Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
  Matrix inv = llt.solve(Matrix::Identity(x.rows(), x.cols()));
  symmetrize(inv);
  return {std::move(inv), log_det};
}

enum class RootTarget { sqrt, inv_sqrt };

struct DenmanBeavers {
  Matrix sqrt;
  Matrix inv_sqrt;
  int iterations = 0;
  double residual = 0.0;
};

inline double root_residual(const Matrix& x, const DenmanBeavers& r, RootTarget target) {
  if (target == RootTarget::sqrt) return (r.sqrt * r.sqrt - x).norm() / x.norm();
  return (r.inv_sqrt * x * r.inv_sqrt - Matrix::Identity(x.rows(), x.cols())).norm();
}

// Scaled product-free Denman-Beavers iteration
//   Y <- (mu Y + Z^-1 / mu) / 2,   Z <- (mu Z + Y^-1 / mu) / 2
// with Y0 = X, Z0 = I, so Y -> X^{1/2} and Z -> X^{-1/2}. mu is the
// determinant scaling (det Y det Z)^{-1/(2n)} while far from convergence.
// Iterates are re-symmetrized every step. Stops when the target residual
// reaches tol; fails on stagnation above tol or after max_iter steps.
inline DenmanBeavers denman_beavers(const Matrix& x, const RootOptions& opts, RootTarget target) {
  const Index n = x.rows();
  DenmanBeavers r;
  r.sqrt = x;
  r.inv_sqrt = Matrix::Identity(n, n);
  bool scaling = true;
  double residual = std::numeric_limits<double>::infinity();
  double prev_residual = std::numeric_limits<double>::infinity();
  int stalls = 0;

  for (int it = 1; it <= opts.max_iter; ++it) {
    CholeskyInverse yinv = cholesky_inverse(r.sqrt);
    CholeskyInverse zinv = cholesky_inverse(r.inv_sqrt);
    double mu = 1.0;
    if (scaling) mu = std::exp(-(yinv.log_det + zinv.log_det) / (2.0 * static_cast<double>(n)));
    Matrix y_next = 0.5 * (mu * r.sqrt + zinv.inverse / mu);
    Matrix z_next = 0.5 * (mu * r.inv_sqrt + yinv.inverse / mu);
    symmetrize(y_next);
    symmetrize(z_next);
    const double step = (y_next - r.sqrt).norm() / y_next.norm();
    r.sqrt = std::move(y_next);
    r.inv_sqrt = std::move(z_next);
    r.iterations = it;
    if (step < 1e-2) scaling = false;
    if (step < 1e-4) {
      residual = root_residual(x, r, target);
      r.residual = residual;
      if (residual <= opts.tol) return r;
      // quadratic convergence is over; only rounding noise remains
      if (residual >= 0.5 * prev_residual) ++stalls;
      if (stalls >= 3) break;
      prev_residual = residual;
    }
  }
  if (!std::isfinite(residual)) residual = root_residual(x, r, target);
  std::ostringstream os;
  os << "Denman-Beavers iteration did not reach tol " << opts.tol << " after " << r.iterations
     << " iterations (residual " << residual << ")";
  throw IterationFailure(os.str(), residual, r.iterations);
}

}  // namespace detail

inline RootResult spd_sqrt(const SpdMatrix& x, const RootOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw DomainError("tol must be positive");
  auto db = detail::denman_beavers(x.matrix(), opts, detail::RootTarget::sqrt);
  return {std::move(db.sqrt), db.iterations, db.residual, x.symmetrized()};
}

inline RootResult spd_inv_sqrt(const SpdMatrix& x, const RootOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw DomainError("tol must be positive");
  auto db = detail::denman_beavers(x.matrix(), opts, detail::RootTarget::inv_sqrt);
  return {std::move(db.inv_sqrt), db.iterations, db.residual, x.symmetrized()};
}

inline Matrix spd_solve(const SpdMatrix& x, const Matrix& b) {
  if (b.rows() != x.dim()) {
    std::ostringstream os;
    os << "spd_solve: right-hand side has " << b.rows() << " rows, expected " << x.dim();
    throw PreconditionError(os.str());
  }
  Eigen::LLT<Matrix> llt(x.matrix());
  if (llt.info() != Eigen::Success) throw DomainError("spd_solve: matrix is singular or indefinite");
  return llt.solve(b);
}

// Sigma = E P E^T with E = [I, O]: the x-marginal of the stacked covariance.
inline const SpdMatrix& block_extract_marginal(const BlockSpdMatrix& p) { return p.a; }

}  // namespace skf
