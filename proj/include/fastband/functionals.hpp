#pragma once

#include "fastband/fft_conv.hpp"
#include "fastband/gaussian_deriv.hpp"
#include "fastband/grid.hpp"

#include <functional>
#include <optional>
#include <string_view>

namespace fastband {

/// How a pairwise double sum is evaluated.
///  - DirectExact:  O(n^2) over raw observations.
///  - DirectBinned: O(nnz^2) over non-empty grid nodes; exists as an oracle.
///  - FftM:         FFT convolution with the kernel spanning the whole grid.
///  - FftL:         FFT convolution with the kernel truncated to +-L_k.
enum class Mode { DirectExact, DirectBinned, FftM, FftL };

std::string_view to_string(Mode mode);
/// Accepts "direct-exact", "direct-binned", "fft-M", "fft-L" (also "direct").
Mode parse_mode(std::string_view text);

/// Which formula generates the LSCV kernel. TH evaluates
/// phi_{2H} - 2 phi_H directly (r == 0 only); Eta goes through
/// eta_r(.; 2H) - 2 eta_r(.; H). Auto picks TH for r == 0.
enum class KernelForm { Auto, TH, Eta };

/// Throws InvalidArgument unless 0 <= r <= max_order and r is even.
void check_functional_order(int r, int max_order = kDefaultMaxOrder);

/// T_H(u) = phi_{2H}(u) - 2 phi_H(u).
double t_h(const Vector& u, const BandwidthMatrix& h);

/// K_H(0) = (2 pi)^{-d/2} |H|^{-1/2}.
double kh_zero(const BandwidthMatrix& h);

/// Pointwise LSCV kernel eta_r(u; 2H) - 2 eta_r(u; H), or T_H(u).
class LscvKernel
{
public:
  LscvKernel(const BandwidthMatrix& h, int r, KernelForm form = KernelForm::Auto);

  double operator()(std::span<const double> u) const;
  double operator()(const Vector& u) const;

private:
  bool use_th_;
  double c2h_ = 0.0;
  double ch_ = 0.0;
  Matrix linv_;
  std::optional<EtaFunction> eta2h_;
  std::optional<EtaFunction> etah_;
};

/// Values f(delta_1 j_1, ..., delta_d j_d) for |j_k| <= L_k.
KernelGrid tabulate_kernel(const GridSpec& spec, const Shape& halfwidths,
                           const std::function<double(std::span<const double>)>& f);

KernelGrid build_kernel_grid(const BandwidthMatrix& h, const GridSpec& spec,
                             const Shape& halfwidths, int r,
                             KernelForm form = KernelForm::Auto);

/// Kernel grid of eta_r(.; sigma), the Q_r kernel.
KernelGrid build_eta_grid(const BandwidthMatrix& sigma, const GridSpec& spec,
                          const Shape& halfwidths, int r);

/// n^{-2} sum_i sum_j [eta_r(X_i - X_j; 2H) - 2 eta_r(X_i - X_j; H)].
double psi_direct_exact(const Sample& sample, const BandwidthMatrix& h, int r,
                        KernelForm form = KernelForm::Auto);

/// sum_a sum_b c_a c_b k_{a - b} over non-empty nodes, pairs outside the
/// kernel box contributing zero.
double binned_double_sum(const GridCounts& counts, const KernelGrid& kernel);

/// Binned functional n^{-2} sum_i c_i (c * k)_i. DirectBinned and FftM use the
/// full kernel range, FftL truncates with tau.
double psi_binned(const GridCounts& counts, const BandwidthMatrix& h, int r, Mode mode,
                  double tau, KernelForm form = KernelForm::Auto);

/// Q_r(Sigma) = n^{-2} sum_i sum_j eta_r(X_i - X_j; Sigma). Binned modes bin
/// the sample on `spec` first.
double q_r(const Sample& sample, const BandwidthMatrix& sigma, int r, Mode mode,
           const GridSpec& spec, double tau);

/// Binned functionals over one fixed set of grid counts, reusing the cached
/// counts transform across calls.
class BinnedFunctional
{
public:
  explicit BinnedFunctional(GridCounts counts);

  const GridCounts& counts() const { return convolver_.counts(); }
  const GridSpec& spec() const { return convolver_.counts().spec(); }

  /// Contraction n^{-2} sum c_i (c * k)_i for an arbitrary kernel grid.
  double contract(const KernelGrid& kernel, Mode mode) const;

  double psi(const BandwidthMatrix& h, int r, Mode mode, double tau,
             KernelForm form = KernelForm::Auto) const;
  double q_r(const BandwidthMatrix& sigma, int r, Mode mode, double tau) const;

  /// Halfwidths a mode would use for a kernel with this bandwidth.
  Shape halfwidths_for(const BandwidthMatrix& h, Mode mode, double tau) const;

private:
  CountsConvolver convolver_;
};

} // namespace fastband
