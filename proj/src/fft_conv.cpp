#include "fastband/fft_conv.hpp"

#include "fastband/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <string>

namespace fastband {

namespace {

struct FftwFree
{
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

Index complex_volume(const Shape& padded)
{
  Index v = 1;
  for (std::size_t k = 0; k + 1 < padded.size(); ++k)
    v *= padded[k];
  return v * (padded.back() / 2 + 1);
}

Index next_power_of_two(Index x)
{
  Index p = 1;
  while (p < x)
    p <<= 1;
  return p;
}

struct PlanPair
{
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

/// FFTW plans keyed by padded shape. Planning is not thread-safe in FFTW, so
/// it happens under one lock; executing a plan on fresh arrays is.
class PlanRegistry
{
public:
  static PlanRegistry& instance()
  {
    static PlanRegistry registry;
    return registry;
  }

  PlanPair get(const Shape& padded)
  {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(padded);
    if (it != plans_.end())
      return it->second;

    std::vector<int> dims(padded.begin(), padded.end());
    RealBuffer real(fftw_alloc_real(shape_volume(padded)));
    ComplexBuffer cplx(fftw_alloc_complex(complex_volume(padded)));
    PlanPair plans;
    plans.forward = fftw_plan_dft_r2c(static_cast<int>(dims.size()), dims.data(), real.get(),
                                      cplx.get(), FFTW_ESTIMATE);
    plans.backward = fftw_plan_dft_c2r(static_cast<int>(dims.size()), dims.data(), cplx.get(),
                                       real.get(), FFTW_ESTIMATE);
    plans_.emplace(padded, plans);
    return plans;
  }

  ~PlanRegistry()
  {
    for (auto& [shape, plans] : plans_) {
      fftw_destroy_plan(plans.forward);
      fftw_destroy_plan(plans.backward);
    }
  }

private:
  std::mutex mutex_;
  std::map<Shape, PlanPair> plans_;
};

void check_kernel(const KernelGrid& kernel, const Shape& sizes)
{
  if (kernel.halfwidths.size() != sizes.size())
    throw Error(ErrorKind::ShapeMismatch, "kernel and grid dimensions differ");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (kernel.halfwidths[k] < 0 || kernel.halfwidths[k] > sizes[k] - 1)
      throw Error(ErrorKind::ShapeMismatch, "kernel halfwidth must lie in [0, M_k - 1]");
  }
  if (static_cast<Index>(kernel.values.size()) != shape_volume(kernel.shape()))
    throw Error(ErrorKind::ShapeMismatch, "kernel values do not match its halfwidths");
}

/// Copies a row-major block of shape `block` into a larger row-major array of
/// shape `outer`, with the block's first element at `origin`.
void embed(std::span<const double> block, const Shape& block_shape, const Shape& origin,
           const Shape& outer, double* dst)
{
  const Shape ostrides = row_major_strides(outer);
  const Index d = static_cast<Index>(block_shape.size());
  Shape idx(d, 0);
  const Index total = shape_volume(block_shape);
  for (Index flat = 0; flat < total; ++flat) {
    Index pos = 0;
    for (Index k = 0; k < d; ++k)
      pos += (idx[k] + origin[k]) * ostrides[k];
    dst[pos] = block[flat];
    for (Index k = d - 1; k >= 0; --k) {
      if (++idx[k] < block_shape[k])
        break;
      idx[k] = 0;
    }
  }
}

ComplexBuffer forward_transform(const PaddedArray& padded)
{
  const PlanPair plans = PlanRegistry::instance().get(padded.shape);
  RealBuffer in(fftw_alloc_real(padded.data.size()));
  std::copy(padded.data.begin(), padded.data.end(), in.get());
  ComplexBuffer out(fftw_alloc_complex(complex_volume(padded.shape)));
  fftw_execute_dft_r2c(plans.forward, in.get(), out.get());
  return out;
}

/// Inverse transform of C.K, normalized by prod(P), followed by extraction of
/// the grid-shaped window. With counts anchored at L and k_0 at L, output
/// node i sits at padded index (i + 2L) mod P.
std::vector<double> multiply_and_extract(const fftw_complex* counts_spectrum,
                                         const fftw_complex* kernel_spectrum,
                                         const Shape& padded, const Shape& sizes,
                                         const Shape& halfwidths)
{
  const Index nc = complex_volume(padded);
  ComplexBuffer prod(fftw_alloc_complex(nc));
  for (Index i = 0; i < nc; ++i) {
    const double ar = counts_spectrum[i][0], ai = counts_spectrum[i][1];
    const double br = kernel_spectrum[i][0], bi = kernel_spectrum[i][1];
    prod[i][0] = ar * br - ai * bi;
    prod[i][1] = ar * bi + ai * br;
  }
  const PlanPair plans = PlanRegistry::instance().get(padded);
  RealBuffer s(fftw_alloc_real(shape_volume(padded)));
  fftw_execute_dft_c2r(plans.backward, prod.get(), s.get());

  const double norm = 1.0 / static_cast<double>(shape_volume(padded));
  const Index d = static_cast<Index>(sizes.size());
  const Shape pstrides = row_major_strides(padded);
  std::vector<double> out(shape_volume(sizes));
  Shape idx(d, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    Index pos = 0;
    for (Index k = 0; k < d; ++k)
      pos += ((idx[k] + 2 * halfwidths[k]) % padded[k]) * pstrides[k];
    out[flat] = s[pos] * norm;
    for (Index k = d - 1; k >= 0; --k) {
      if (++idx[k] < sizes[k])
        break;
      idx[k] = 0;
    }
  }
  return out;
}

} // namespace

Shape KernelGrid::shape() const
{
  Shape s(halfwidths.size());
  for (std::size_t k = 0; k < halfwidths.size(); ++k)
    s[k] = 2 * halfwidths[k] + 1;
  return s;
}

double KernelGrid::at(std::span<const Index> offset) const
{
  Index flat = 0;
  for (std::size_t k = 0; k < halfwidths.size(); ++k) {
    const Index width = 2 * halfwidths[k] + 1;
    flat = flat * width + (offset[k] + halfwidths[k]);
  }
  return values[flat];
}

Shape effective_halfwidths(const BandwidthMatrix& h, const GridSpec& spec, double tau)
{
  if (!(tau > 0.0))
    throw Error(ErrorKind::InvalidArgument, "tau must be positive");
  if (h.dim() != spec.dim())
    throw Error(ErrorKind::ShapeMismatch, "bandwidth and grid dimensions differ");
  const double reach = tau * std::sqrt(std::abs(h.lambda_max()));
  Shape l(spec.dim());
  for (Index k = 0; k < spec.dim(); ++k) {
    const double cells = std::ceil(reach / spec.delta(k));
    const double cap = static_cast<double>(spec.size(k) - 1);
    l[k] = static_cast<Index>(std::min(cap, cells));
  }
  return l;
}

Shape full_halfwidths(const GridSpec& spec)
{
  Shape l(spec.dim());
  for (Index k = 0; k < spec.dim(); ++k)
    l[k] = spec.size(k) - 1;
  return l;
}

Index padded_size_full(Index m)
{
  if (m < 2)
    throw Error(ErrorKind::InvalidArgument, "grid size must be >= 2");
  return next_power_of_two(3 * m - 1);
}

Index padded_size_truncated(Index m, Index l)
{
  if (l < 1 || l > m - 1)
    throw Error(ErrorKind::InvalidArgument, "halfwidth must lie in [1, M - 1]");
  return next_power_of_two(m + 2 * l - 1);
}

Shape padded_shape(const Shape& sizes, const Shape& halfwidths)
{
  if (sizes.size() != halfwidths.size())
    throw Error(ErrorKind::ShapeMismatch, "sizes and halfwidths differ in dimension");
  Shape p(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const Index m = sizes[k];
    const Index l = halfwidths[k];
    if (m >= 2 && l == m - 1)
      p[k] = padded_size_full(m);
    else if (l >= 1)
      p[k] = padded_size_truncated(m, l);
    else
      p[k] = next_power_of_two(m); // L = 0: no wrap-around to avoid
  }
  return p;
}

PaddedArray zero_pad_kernel(const KernelGrid& kernel, const Shape& padded)
{
  const Shape kshape = kernel.shape();
  if (padded.size() != kshape.size())
    throw Error(ErrorKind::ShapeMismatch, "padded shape and kernel differ in dimension");
  for (std::size_t k = 0; k < kshape.size(); ++k) {
    if (padded[k] < kshape[k])
      throw Error(ErrorKind::ShapeMismatch, "padded size smaller than kernel extent");
  }
  PaddedArray out{padded, Shape(padded.size(), 0), std::vector<double>(shape_volume(padded), 0.0)};
  embed(kernel.values, kshape, out.origin, padded, out.data.data());
  return out;
}

PaddedArray zero_pad_counts(std::span<const double> counts, const Shape& sizes,
                            const Shape& padded, const Shape& halfwidths)
{
  if (padded.size() != sizes.size() || halfwidths.size() != sizes.size())
    throw Error(ErrorKind::ShapeMismatch, "padded shape, sizes and halfwidths differ");
  if (static_cast<Index>(counts.size()) != shape_volume(sizes))
    throw Error(ErrorKind::ShapeMismatch, "counts length does not match sizes");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (padded[k] < sizes[k] + halfwidths[k] || padded[k] < 2 * halfwidths[k] + 1)
      throw Error(ErrorKind::ShapeMismatch,
                  "padded size too small on axis " + std::to_string(k));
  }
  PaddedArray out{padded, halfwidths, std::vector<double>(shape_volume(padded), 0.0)};
  embed(counts, sizes, out.origin, padded, out.data.data());
  return out;
}

PaddedArray zero_pad_counts(const GridCounts& counts, const Shape& padded,
                            const Shape& halfwidths)
{
  return zero_pad_counts(counts.values(), counts.spec().sizes(), padded, halfwidths);
}

std::vector<double> convolve_counts_kernel(std::span<const double> counts, const Shape& sizes,
                                           const KernelGrid& kernel)
{
  check_kernel(kernel, sizes);
  const Shape padded = padded_shape(sizes, kernel.halfwidths);
  const ComplexBuffer cs =
    forward_transform(zero_pad_counts(counts, sizes, padded, kernel.halfwidths));
  const ComplexBuffer ks = forward_transform(zero_pad_kernel(kernel, padded));
  return multiply_and_extract(cs.get(), ks.get(), padded, sizes, kernel.halfwidths);
}

std::vector<double> convolve_counts_kernel(const GridCounts& counts, const KernelGrid& kernel)
{
  return convolve_counts_kernel(counts.values(), counts.spec().sizes(), kernel);
}

struct CountsConvolver::Spectrum
{
  ComplexBuffer data;
};

CountsConvolver::CountsConvolver(GridCounts counts)
  : counts_(std::move(counts))
{
}

CountsConvolver::~CountsConvolver() = default;

std::shared_ptr<const CountsConvolver::Spectrum>
CountsConvolver::spectrum_for(const Shape& padded, const Shape& halfwidths) const
{
  const auto key = std::make_pair(padded, halfwidths);
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end())
      return it->second;
  }
  auto spectrum = std::make_shared<Spectrum>();
  spectrum->data = forward_transform(zero_pad_counts(counts_, padded, halfwidths));

  std::lock_guard lock(mutex_);
  // fft-L changes L as H moves; keep the cache small.
  if (cache_.size() >= 16)
    cache_.clear();
  cache_.emplace(key, spectrum);
  return spectrum;
}

std::vector<double> CountsConvolver::convolve(const KernelGrid& kernel) const
{
  const Shape& sizes = counts_.spec().sizes();
  check_kernel(kernel, sizes);
  const Shape padded = padded_shape(sizes, kernel.halfwidths);
  const auto cs = spectrum_for(padded, kernel.halfwidths);
  const ComplexBuffer ks = forward_transform(zero_pad_kernel(kernel, padded));
  return multiply_and_extract(cs->data.get(), ks.get(), padded, sizes, kernel.halfwidths);
}

double CountsConvolver::contract(const KernelGrid& kernel) const
{
  const std::vector<double> conv = convolve(kernel);
  const auto& c = counts_.counts();
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    sum += c[i] * conv[i];
  return sum;
}

} // namespace fastband
