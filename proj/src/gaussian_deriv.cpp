#include "fastband/gaussian_deriv.hpp"

#include "fastband/error.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace fastband {

namespace {

using Exponents = std::vector<int>;
using Polynomial = std::map<Exponents, double>;

double normal_constant(Index d, double log_det)
{
  return std::exp(-0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                  0.5 * log_det);
}

void add_term(Polynomial& p, Exponents e, double c)
{
  if (c == 0.0)
    return;
  p[std::move(e)] += c;
}

/// Applies sum_ij m_ij d_i d_j to P(y) phi(y) (phi standard normal) and
/// returns the new polynomial factor:
///   d_i d_j (P phi) = (P_ij - y_i P_j - y_j P_i + y_i y_j P - delta_ij P) phi.
Polynomial apply_second_order(const Polynomial& p, const Matrix& m)
{
  const Index d = m.rows();
  const double trace = m.trace();
  Polynomial out;
  for (const auto& [alpha, c] : p) {
    add_term(out, alpha, -trace * c);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < d; ++j) {
        const double mc = m(i, j) * c;
        if (mc == 0.0)
          continue;
        Exponents e = alpha;
        if (i == j) {
          if (alpha[i] >= 2) {
            e[i] -= 2;
            add_term(out, e, mc * alpha[i] * (alpha[i] - 1));
            e[i] += 2;
          }
        } else if (alpha[i] >= 1 && alpha[j] >= 1) {
          e[i] -= 1;
          e[j] -= 1;
          add_term(out, e, mc * alpha[i] * alpha[j]);
          e[i] += 1;
          e[j] += 1;
        }
        // -y_i d_j P and -y_j d_i P
        if (alpha[j] >= 1) {
          e[j] -= 1;
          e[i] += 1;
          add_term(out, e, -mc * alpha[j]);
          e[i] -= 1;
          e[j] += 1;
        }
        if (alpha[i] >= 1) {
          e[i] -= 1;
          e[j] += 1;
          add_term(out, e, -mc * alpha[i]);
          e[j] -= 1;
          e[i] += 1;
        }
        e[i] += 1;
        e[j] += 1;
        add_term(out, e, mc);
      }
    }
  }
  std::erase_if(out, [](const auto& kv) { return kv.second == 0.0; });
  return out;
}

void require_symmetric_operand(const Matrix& m, Index d, const char* name)
{
  if (m.rows() != d || m.cols() != d)
    throw Error(ErrorKind::ShapeMismatch, std::string(name) + " must be d x d");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorKind::InvalidArgument, std::string(name) + " must be symmetric");
}

} // namespace

double normal_pdf(const Vector& x, const BandwidthMatrix& sigma)
{
  if (x.size() != sigma.dim())
    throw Error(ErrorKind::ShapeMismatch, "point and covariance dimensions differ");
  return normal_constant(sigma.dim(), sigma.log_det()) *
         std::exp(-0.5 * sigma.mahalanobis_sq(x));
}

Vector gaussian_derivative_vector(const Vector& x, const BandwidthMatrix& sigma, int r)
{
  if (r < 0)
    throw Error(ErrorKind::InvalidArgument, "derivative order must be >= 0");
  const Index d = sigma.dim();
  if (x.size() != d)
    throw Error(ErrorKind::ShapeMismatch, "point and covariance dimensions differ");
  if (std::pow(static_cast<double>(d), r) > 1 << 24)
    throw Error(ErrorKind::InvalidArgument, "derivative vector too long");

  const Matrix& prec = sigma.inverse();
  const Vector g = prec * x;

  // prev2 = h^{(m-2)}, prev = h^{(m-1)}
  Vector prev2 = Vector::Ones(1);
  if (r == 0)
    return prev2 * normal_pdf(x, sigma);
  Vector prev = -g;

  std::vector<Index> digits;
  for (int m = 2; m <= r; ++m) {
    const Index len_prev = prev.size();
    Vector cur(len_prev * d);
    digits.assign(m - 1, 0);
    for (Index jflat = 0; jflat < len_prev; ++jflat) {
      // digits of J, most significant first
      Index rest = jflat;
      for (int p = m - 2; p >= 0; --p) {
        digits[p] = rest % d;
        rest /= d;
      }
      for (Index i = 0; i < d; ++i) {
        double value = -g(i) * prev(jflat);
        for (int p = 0; p < m - 1; ++p) {
          // index of J with digit p removed
          Index reduced = 0;
          for (int q = 0; q < m - 1; ++q) {
            if (q != p)
              reduced = reduced * d + digits[q];
          }
          value -= prec(i, digits[p]) * prev2(reduced);
        }
        cur(jflat * d + i) = value;
      }
    }
    prev2 = std::move(prev);
    prev = std::move(cur);
  }
  return prev * normal_pdf(x, sigma);
}

EtaFunction::EtaFunction(const EtaSpec& spec)
{
  const Index d = spec.sigma.dim();
  if (spec.r < 0 || spec.s < 0)
    throw Error(ErrorKind::InvalidArgument, "eta orders must be >= 0");
  if (spec.r > 0)
    require_symmetric_operand(spec.a, d, "A");
  if (spec.s > 0)
    require_symmetric_operand(spec.b, d, "B");
  linv_ = spec.sigma.chol().triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  norm_const_ = normal_constant(d, spec.sigma.log_det());
  build(spec.r > 0 ? spec.a : Matrix::Identity(d, d), spec.r,
        spec.s > 0 ? spec.b : Matrix::Identity(d, d), spec.s);
}

EtaFunction::EtaFunction(const BandwidthMatrix& sigma, int r)
{
  if (r < 0)
    throw Error(ErrorKind::InvalidArgument, "eta order must be >= 0");
  const Index d = sigma.dim();
  linv_ = sigma.chol().triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  norm_const_ = normal_constant(d, sigma.log_det());
  build(Matrix::Identity(d, d), r, Matrix::Identity(d, d), 0);
}

void EtaFunction::build(const Matrix& a, int r, const Matrix& b, int s)
{
  const Index d = linv_.rows();
  degree_ = 2 * (r + s);
  Matrix wa = linv_ * a * linv_.transpose();
  Matrix wb = linv_ * b * linv_.transpose();
  wa = (0.5 * (wa + wa.transpose())).eval();
  wb = (0.5 * (wb + wb.transpose())).eval();

  Polynomial p;
  p[Exponents(d, 0)] = 1.0;
  for (int k = 0; k < r; ++k)
    p = apply_second_order(p, wa);
  for (int k = 0; k < s; ++k)
    p = apply_second_order(p, wb);

  coeffs_.clear();
  exponents_.clear();
  coeffs_.reserve(p.size());
  exponents_.reserve(p.size() * d);
  for (const auto& [alpha, c] : p) {
    coeffs_.push_back(c);
    exponents_.insert(exponents_.end(), alpha.begin(), alpha.end());
  }
}

double EtaFunction::operator()(const Vector& x) const
{
  return (*this)(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

double EtaFunction::operator()(std::span<const double> x) const
{
  const Index d = dim();
  if (static_cast<Index>(x.size()) != d)
    throw Error(ErrorKind::ShapeMismatch, "point and covariance dimensions differ");

  thread_local std::vector<double> y;
  thread_local std::vector<double> powers;
  y.assign(d, 0.0);
  double q = 0.0;
  for (Index i = 0; i < d; ++i) {
    double acc = 0.0;
    for (Index j = 0; j <= i; ++j)
      acc += linv_(i, j) * x[j];
    y[i] = acc;
    q += acc * acc;
  }
  const double density = norm_const_ * std::exp(-0.5 * q);
  if (degree_ == 0)
    return coeffs_.front() * density;

  const Index stride = degree_ + 1;
  powers.resize(d * stride);
  for (Index i = 0; i < d; ++i) {
    double v = 1.0;
    for (Index e = 0; e < stride; ++e) {
      powers[i * stride + e] = v;
      v *= y[i];
    }
  }
  double poly = 0.0;
  const int* e = exponents_.data();
  for (double c : coeffs_) {
    double term = c;
    for (Index i = 0; i < d; ++i)
      term *= powers[i * stride + e[i]];
    poly += term;
    e += d;
  }
  return poly * density;
}

double eta_rs(const Vector& x, const EtaSpec& spec)
{
  return EtaFunction(spec)(x);
}

double eta_r(const Vector& x, const BandwidthMatrix& sigma, int r)
{
  return EtaFunction(sigma, r)(x);
}

} // namespace fastband
