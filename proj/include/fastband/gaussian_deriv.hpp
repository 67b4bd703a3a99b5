#pragma once

#include "fastband/linalg.hpp"

#include <span>
#include <vector>

namespace fastband {

/// Highest functional order r accepted by eta-based functionals by default.
inline constexpr int kDefaultMaxOrder = 8;

/// Multivariate normal density with covariance sigma, evaluated at x.
double normal_pdf(const Vector& x, const BandwidthMatrix& sigma);

/// All d^r partial derivatives of order r of the normal density, stacked in
/// Kronecker order (first derivative index slowest). r == 2 gives vec of the
/// Hessian.
///
/// Uses the multivariate Hermite recurrence on g = sigma^{-1} x:
///   h_{J,i} = -g_i h_J - sum_{j in J} (sigma^{-1})_{i j} h_{J \ j}
/// so order r is built from orders r-1 and r-2.
Vector gaussian_derivative_vector(const Vector& x, const BandwidthMatrix& sigma, int r);

struct EtaSpec
{
  int r = 0;
  int s = 0;
  Matrix a;
  Matrix b;
  BandwidthMatrix sigma;
};

/// Scalar contraction
///   eta_{r,s}(x) = {(vec^T A)^{(x)r} (x) (vec^T B)^{(x)s}} D^{(x)2r+2s} phi_Sigma(x).
///
/// (vec^T A) D^{(x)2} is the second-order operator sum_ij A_ij d_i d_j, so
/// eta_{r,s} is (d^T A d)^r (d^T B d)^s applied to phi_Sigma. In whitened
/// coordinates y = L^{-1} x (Sigma = L L^T) the operators become
/// d_y^T (L^{-1} A L^{-T}) d_y and act on P(y) phi(y); the polynomial P is
/// built once at construction, after which every evaluation costs one
/// polynomial evaluation and one exponential.
class EtaFunction
{
public:
  explicit EtaFunction(const EtaSpec& spec);
  /// eta_r(.; Sigma): A = I, s = 0.
  EtaFunction(const BandwidthMatrix& sigma, int r);

  double operator()(const Vector& x) const;
  double operator()(std::span<const double> x) const;

  Index dim() const { return linv_.rows(); }
  /// Total derivative order 2r + 2s.
  int derivative_order() const { return degree_; }
  /// Number of monomials in the whitened polynomial factor.
  std::size_t terms() const { return coeffs_.size(); }

private:
  void build(const Matrix& a, int r, const Matrix& b, int s);

  Matrix linv_;
  double norm_const_ = 0.0;
  int degree_ = 0;
  std::vector<double> coeffs_;
  std::vector<int> exponents_; // terms() x dim(), row-major
};

double eta_rs(const Vector& x, const EtaSpec& spec);
double eta_r(const Vector& x, const BandwidthMatrix& sigma, int r);

} // namespace fastband
