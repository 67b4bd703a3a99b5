#pragma once

#include <Eigen/Dense>

namespace fastband {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Lower-triangular L with L * L^T == m. Throws NotPositiveDefinite when a
/// pivot is not strictly positive.
Matrix cholesky(const Matrix& m);

/// Largest eigenvalue of a symmetric matrix. Cyclic Jacobi for d <= 4, power
/// iteration above that (the matrix must then be positive semi-definite).
double largest_eigenvalue(const Matrix& m);

/// Column stacking: vec(m)[i + rows * j] == m(i, j).
Vector vec(const Matrix& m);

Vector kron(const Vector& a, const Vector& b);

/// r-fold Kronecker power; r == 0 gives the length-1 vector (1).
Vector kron_power(const Vector& v, int r);

/// Symmetric positive definite smoothing matrix with eagerly cached
/// factorization, determinant, inverse and largest eigenvalue.
class BandwidthMatrix
{
public:
  /// Throws NotPositiveDefinite when `entries` is not symmetric positive
  /// definite and SingularBandwidth when its determinant underflows 1e-300.
  explicit BandwidthMatrix(const Matrix& entries);

  static BandwidthMatrix identity(Index dim);
  static BandwidthMatrix diagonal(const Vector& diag);

  Index dim() const { return entries_.rows(); }
  const Matrix& entries() const { return entries_; }
  double operator()(Index i, Index j) const { return entries_(i, j); }

  const Matrix& chol() const { return chol_; }
  const Matrix& inverse() const { return inv_; }
  double det() const { return det_; }
  double log_det() const { return log_det_; }
  double lambda_max() const { return lambda_max_; }

  /// x^T H^{-1} x via the cached Cholesky factor.
  double mahalanobis_sq(const Vector& x) const;

  BandwidthMatrix scaled(double factor) const;

private:
  Matrix entries_;
  Matrix chol_;
  Matrix inv_;
  double det_ = 1.0;
  double log_det_ = 0.0;
  double lambda_max_ = 1.0;
};

enum class Constraint { Unconstrained, Diagonal };

/// Unconstrained optimizer coordinates for a bandwidth matrix: the entries of
/// its Cholesky factor, row by row over the lower triangle, with diagonal
/// entries stored as logarithms. Every theta decodes to an SPD matrix. In the
/// diagonal parametrization only the d log-diagonal entries are stored.
struct SpdParam
{
  Index dim = 0;
  Constraint constraint = Constraint::Unconstrained;
  Vector theta;

  static Index size_for(Index dim, Constraint constraint);
  static SpdParam encode(const BandwidthMatrix& h,
                         Constraint constraint = Constraint::Unconstrained);

  /// Cholesky factor described by theta (not yet multiplied out).
  Matrix factor() const;
  BandwidthMatrix decode() const;
};

} // namespace fastband
