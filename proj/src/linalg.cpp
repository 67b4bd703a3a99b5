#include "fastband/linalg.hpp"

#include "fastband/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fastband {

namespace {

void require_square(const Matrix& m, const char* what)
{
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + " requires a non-empty square matrix");
  }
}

void require_symmetric(const Matrix& m)
{
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < i; ++j) {
      if (!(std::abs(m(i, j) - m(j, i)) <= 1e-12 * scale)) {
        throw Error(ErrorKind::NotPositiveDefinite, "matrix is not symmetric");
      }
    }
  }
}

double jacobi_largest(Matrix a)
{
  const Index d = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < d; ++p)
      for (Index q = p + 1; q < d; ++q)
        off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(1.0, a.diagonal().squaredNorm()))
      break;

    for (Index p = 0; p < d; ++p) {
      for (Index q = p + 1; q < d; ++q) {
        if (a(p, q) == 0.0)
          continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < d; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < d; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  return a.diagonal().maxCoeff();
}

double power_iteration_largest(const Matrix& a)
{
  Vector v = Vector::Ones(a.rows()).normalized();
  double lambda = v.dot(a * v);
  for (int it = 0; it < 10000; ++it) {
    Vector w = a * v;
    const double norm = w.norm();
    if (norm == 0.0)
      return 0.0;
    v = w / norm;
    const double next = v.dot(a * v);
    if (std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

} // namespace

Matrix cholesky(const Matrix& m)
{
  require_square(m, "cholesky");
  require_symmetric(m);
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "Cholesky pivot is not positive");
  }
  Matrix l = llt.matrixL();
  for (Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
      throw Error(ErrorKind::NotPositiveDefinite, "Cholesky pivot is not positive");
    }
  }
  return l;
}

double largest_eigenvalue(const Matrix& m)
{
  require_square(m, "largest_eigenvalue");
  if (m.rows() <= 4)
    return jacobi_largest(m);
  return power_iteration_largest(m);
}

Vector vec(const Matrix& m)
{
  Vector out(m.size());
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      out(i + m.rows() * j) = m(i, j);
  return out;
}

Vector kron(const Vector& a, const Vector& b)
{
  Vector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i)
    out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

Vector kron_power(const Vector& v, int r)
{
  if (r < 0)
    throw Error(ErrorKind::InvalidArgument, "Kronecker power must be >= 0");
  Vector out = Vector::Ones(1);
  for (int k = 0; k < r; ++k)
    out = kron(v, out);
  return out;
}

BandwidthMatrix::BandwidthMatrix(const Matrix& entries)
{
  require_square(entries, "BandwidthMatrix");
  require_symmetric(entries);
  entries_ = 0.5 * (entries + entries.transpose());
  chol_ = cholesky(entries_);

  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  det_ = std::exp(log_det_);
  if (!(det_ >= 1e-300) || !std::isfinite(det_)) {
    throw Error(ErrorKind::SingularBandwidth,
                "bandwidth determinant outside the representable range");
  }

  const Matrix linv = chol_.triangularView<Eigen::Lower>().solve(
    Matrix::Identity(dim(), dim()));
  inv_ = linv.transpose() * linv;
  inv_ = 0.5 * (inv_ + inv_.transpose()).eval();
  lambda_max_ = largest_eigenvalue(entries_);
}

BandwidthMatrix BandwidthMatrix::identity(Index dim)
{
  return BandwidthMatrix(Matrix::Identity(dim, dim));
}

BandwidthMatrix BandwidthMatrix::diagonal(const Vector& diag)
{
  return BandwidthMatrix(Matrix(diag.asDiagonal()));
}

double BandwidthMatrix::mahalanobis_sq(const Vector& x) const
{
  return chol_.triangularView<Eigen::Lower>().solve(x).squaredNorm();
}

BandwidthMatrix BandwidthMatrix::scaled(double factor) const
{
  return BandwidthMatrix(factor * entries_);
}

Index SpdParam::size_for(Index dim, Constraint constraint)
{
  return constraint == Constraint::Diagonal ? dim : dim * (dim + 1) / 2;
}

SpdParam SpdParam::encode(const BandwidthMatrix& h, Constraint constraint)
{
  SpdParam p;
  p.dim = h.dim();
  p.constraint = constraint;
  p.theta.resize(size_for(p.dim, constraint));
  if (constraint == Constraint::Diagonal) {
    for (Index i = 0; i < p.dim; ++i)
      p.theta(i) = 0.5 * std::log(h(i, i));
    return p;
  }
  const Matrix& l = h.chol();
  Index k = 0;
  for (Index i = 0; i < p.dim; ++i) {
    for (Index j = 0; j < i; ++j)
      p.theta(k++) = l(i, j);
    p.theta(k++) = std::log(l(i, i));
  }
  return p;
}

Matrix SpdParam::factor() const
{
  if (theta.size() != size_for(dim, constraint)) {
    throw Error(ErrorKind::ShapeMismatch, "theta length does not match dimension");
  }
  Matrix l = Matrix::Zero(dim, dim);
  if (constraint == Constraint::Diagonal) {
    for (Index i = 0; i < dim; ++i)
      l(i, i) = std::exp(theta(i));
    return l;
  }
  Index k = 0;
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j < i; ++j)
      l(i, j) = theta(k++);
    l(i, i) = std::exp(theta(k++));
  }
  return l;
}

BandwidthMatrix SpdParam::decode() const
{
  const Matrix l = factor();
  Matrix h = l * l.transpose();
  // Products of a triangular factor are symmetric up to rounding only.
  h = (0.5 * (h + h.transpose())).eval();
  if (!h.allFinite()) {
    throw Error(ErrorKind::SingularBandwidth, "decoded bandwidth is not finite");
  }
  return BandwidthMatrix(h);
}

} // namespace fastband
