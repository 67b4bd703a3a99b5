#pragma once

#include "fastband/grid.hpp"
#include "fastband/linalg.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace fastband {

/// Kernel values k_j on lattice offsets j_k in [-L_k, L_k]. Stored row-major
/// over the (2L_1+1) x ... x (2L_d+1) box, offset -L first.
struct KernelGrid
{
  Shape halfwidths;
  std::vector<double> values;

  Shape shape() const;
  /// Value at a signed offset; every |offset[k]| must be <= halfwidths[k].
  double at(std::span<const Index> offset) const;
};

/// A zero-padded array ready for the transform. `origin` is the 0-based
/// position of the embedded array's first element.
struct PaddedArray
{
  Shape shape;
  Shape origin;
  std::vector<double> data;
};

/// L_k = min(M_k - 1, ceil(tau * sqrt(lambda_max(H)) / delta_k)).
Shape effective_halfwidths(const BandwidthMatrix& h, const GridSpec& spec, double tau);

/// L_k = M_k - 1: the kernel covers every difference of two grid nodes.
Shape full_halfwidths(const GridSpec& spec);

/// 2^ceil(log2(3M - 1)), the padding used when the kernel spans the grid.
Index padded_size_full(Index m);

/// 2^ceil(log2(M + 2L - 1)), the padding for a kernel truncated to +-L.
Index padded_size_truncated(Index m, Index l);

/// Padded shape used by the convolution: the full rule on axes where
/// L_k == M_k - 1, the truncated rule elsewhere.
Shape padded_shape(const Shape& sizes, const Shape& halfwidths);

/// Kernel placed in the leading block: k_{-L} at index 0, k_0 at index L.
PaddedArray zero_pad_kernel(const KernelGrid& kernel, const Shape& padded);

/// Counts embedded with their first element at index L on every axis. With
/// L = M - 1 this is the layout that puts c_{1,...,1} in row M.
PaddedArray zero_pad_counts(std::span<const double> counts, const Shape& sizes,
                            const Shape& padded, const Shape& halfwidths);
PaddedArray zero_pad_counts(const GridCounts& counts, const Shape& padded,
                            const Shape& halfwidths);

/// out[i] = sum_j c[i - j] k[j] over |j_k| <= L_k, c outside the grid being
/// zero, computed by FFT of the padded arrays. The result has the grid shape.
std::vector<double> convolve_counts_kernel(const GridCounts& counts, const KernelGrid& kernel);
std::vector<double> convolve_counts_kernel(std::span<const double> counts, const Shape& sizes,
                                           const KernelGrid& kernel);

/// Convolves one fixed set of grid counts with many kernels. The transform of
/// the padded counts is cached per padded shape, so repeated objective
/// evaluations only transform the kernel. Safe to call concurrently.
class CountsConvolver
{
public:
  explicit CountsConvolver(GridCounts counts);
  ~CountsConvolver();
  CountsConvolver(const CountsConvolver&) = delete;
  CountsConvolver& operator=(const CountsConvolver&) = delete;

  const GridCounts& counts() const { return counts_; }

  std::vector<double> convolve(const KernelGrid& kernel) const;

  /// sum_i c_i (c * k)_i
  double contract(const KernelGrid& kernel) const;

private:
  struct Spectrum;

  std::shared_ptr<const Spectrum> spectrum_for(const Shape& padded,
                                               const Shape& halfwidths) const;

  GridCounts counts_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<Shape, Shape>, std::shared_ptr<const Spectrum>> cache_;
};

} // namespace fastband
