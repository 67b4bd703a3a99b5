#include "fastband/functionals.hpp"

#include "fastband/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fastband {

namespace {

/// Row-major copy of the observations for cache-friendly pair loops.
std::vector<double> row_major(const Sample& sample)
{
  const Index n = sample.size(), d = sample.dim();
  std::vector<double> out(n * d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k)
      out[i * d + k] = sample(i, k);
  return out;
}

/// n^{-2} sum_i sum_j f(X_i - X_j) using f(0) on the diagonal and symmetry
/// of f off it.
template <class F>
double symmetric_pair_mean(const Sample& sample, const F& f)
{
  const Index n = sample.size(), d = sample.dim();
  const std::vector<double> x = row_major(sample);
  std::vector<double> diff(d, 0.0);
  const double diag = static_cast<double>(n) * f(std::span<const double>(diff));
  double off = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double* xi = &x[i * d];
    double row = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double* xj = &x[j * d];
      for (Index k = 0; k < d; ++k)
        diff[k] = xi[k] - xj[k];
      row += f(std::span<const double>(diff));
    }
    off += row;
  }
  const double nn = static_cast<double>(n);
  return (diag + 2.0 * off) / (nn * nn);
}

} // namespace

std::string_view to_string(Mode mode)
{
  switch (mode) {
  case Mode::DirectExact: return "direct-exact";
  case Mode::DirectBinned: return "direct-binned";
  case Mode::FftM: return "fft-M";
  case Mode::FftL: return "fft-L";
  }
  return "unknown";
}

Mode parse_mode(std::string_view text)
{
  if (text == "direct-exact" || text == "direct")
    return Mode::DirectExact;
  if (text == "direct-binned")
    return Mode::DirectBinned;
  if (text == "fft-M" || text == "fft-m")
    return Mode::FftM;
  if (text == "fft-L" || text == "fft-l")
    return Mode::FftL;
  throw Error(ErrorKind::InvalidArgument, "unknown mode '" + std::string(text) + "'");
}

void check_functional_order(int r, int max_order)
{
  if (r < 0 || r > max_order || r % 2 != 0) {
    throw Error(ErrorKind::InvalidArgument,
                "derivative order must be even and in [0, " + std::to_string(max_order) +
                  "], got " + std::to_string(r));
  }
}

double kh_zero(const BandwidthMatrix& h)
{
  return std::exp(-0.5 * static_cast<double>(h.dim()) * std::log(2.0 * std::numbers::pi) -
                  0.5 * h.log_det());
}

double t_h(const Vector& u, const BandwidthMatrix& h)
{
  return normal_pdf(u, h.scaled(2.0)) - 2.0 * normal_pdf(u, h);
}

LscvKernel::LscvKernel(const BandwidthMatrix& h, int r, KernelForm form)
  : use_th_(form == KernelForm::TH || (form == KernelForm::Auto && r == 0))
{
  if (use_th_ && r != 0)
    throw Error(ErrorKind::InvalidArgument, "the T_H kernel form exists only for r = 0");
  if (use_th_) {
    ch_ = kh_zero(h);
    c2h_ = ch_ * std::pow(2.0, -0.5 * static_cast<double>(h.dim()));
    linv_ = h.chol().triangularView<Eigen::Lower>().solve(Matrix::Identity(h.dim(), h.dim()));
  } else {
    eta2h_.emplace(h.scaled(2.0), r);
    etah_.emplace(h, r);
  }
}

double LscvKernel::operator()(std::span<const double> u) const
{
  if (!use_th_)
    return (*eta2h_)(u) - 2.0 * (*etah_)(u);
  const Index d = linv_.rows();
  double q = 0.0;
  for (Index i = 0; i < d; ++i) {
    double acc = 0.0;
    for (Index j = 0; j <= i; ++j)
      acc += linv_(i, j) * u[j];
    q += acc * acc;
  }
  const double e = std::exp(-0.25 * q);
  return c2h_ * e - 2.0 * ch_ * e * e;
}

double LscvKernel::operator()(const Vector& u) const
{
  return (*this)(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())));
}

KernelGrid tabulate_kernel(const GridSpec& spec, const Shape& halfwidths,
                           const std::function<double(std::span<const double>)>& f)
{
  const Index d = spec.dim();
  if (static_cast<Index>(halfwidths.size()) != d)
    throw Error(ErrorKind::ShapeMismatch, "halfwidths and grid dimensions differ");
  KernelGrid grid{halfwidths, {}};
  const Shape shape = grid.shape();
  const Index total = shape_volume(shape);
  grid.values.resize(total);

  Shape offset(d);
  for (Index k = 0; k < d; ++k)
    offset[k] = -halfwidths[k];
  std::vector<double> u(d);
  for (Index flat = 0; flat < total; ++flat) {
    for (Index k = 0; k < d; ++k)
      u[k] = spec.delta(k) * static_cast<double>(offset[k]);
    grid.values[flat] = f(std::span<const double>(u));
    for (Index k = d - 1; k >= 0; --k) {
      if (++offset[k] <= halfwidths[k])
        break;
      offset[k] = -halfwidths[k];
    }
  }
  return grid;
}

KernelGrid build_kernel_grid(const BandwidthMatrix& h, const GridSpec& spec,
                             const Shape& halfwidths, int r, KernelForm form)
{
  check_functional_order(r);
  const LscvKernel kernel(h, r, form);
  return tabulate_kernel(spec, halfwidths,
                         [&](std::span<const double> u) { return kernel(u); });
}

KernelGrid build_eta_grid(const BandwidthMatrix& sigma, const GridSpec& spec,
                          const Shape& halfwidths, int r)
{
  check_functional_order(r);
  const EtaFunction eta(sigma, r);
  return tabulate_kernel(spec, halfwidths, [&](std::span<const double> u) { return eta(u); });
}

double psi_direct_exact(const Sample& sample, const BandwidthMatrix& h, int r, KernelForm form)
{
  check_functional_order(r);
  if (sample.dim() != h.dim())
    throw Error(ErrorKind::ShapeMismatch, "sample and bandwidth dimensions differ");
  const LscvKernel kernel(h, r, form);
  return symmetric_pair_mean(sample, kernel);
}

double binned_double_sum(const GridCounts& counts, const KernelGrid& kernel)
{
  const GridSpec& spec = counts.spec();
  const Index d = spec.dim();
  if (static_cast<Index>(kernel.halfwidths.size()) != d)
    throw Error(ErrorKind::ShapeMismatch, "kernel and grid dimensions differ");

  // Non-empty nodes with their multi-indices.
  std::vector<Index> idx;
  std::vector<double> weight;
  {
    Shape cur(d, 0);
    const auto& c = counts.counts();
    for (std::size_t flat = 0; flat < c.size(); ++flat) {
      if (c[flat] != 0.0) {
        idx.insert(idx.end(), cur.begin(), cur.end());
        weight.push_back(c[flat]);
      }
      for (Index k = d - 1; k >= 0; --k) {
        if (++cur[k] < spec.size(k))
          break;
        cur[k] = 0;
      }
    }
  }

  const Shape kshape = kernel.shape();
  const Shape kstrides = row_major_strides(kshape);
  const std::size_t nnz = weight.size();
  double total = 0.0;
  for (std::size_t a = 0; a < nnz; ++a) {
    const Index* ia = &idx[a * d];
    double row = 0.0;
    for (std::size_t b = 0; b < nnz; ++b) {
      const Index* ib = &idx[b * d];
      Index pos = 0;
      bool inside = true;
      for (Index k = 0; k < d; ++k) {
        const Index off = ia[k] - ib[k];
        if (off < -kernel.halfwidths[k] || off > kernel.halfwidths[k]) {
          inside = false;
          break;
        }
        pos += (off + kernel.halfwidths[k]) * kstrides[k];
      }
      if (inside)
        row += weight[b] * kernel.values[pos];
    }
    total += weight[a] * row;
  }
  return total;
}

double psi_binned(const GridCounts& counts, const BandwidthMatrix& h, int r, Mode mode,
                  double tau, KernelForm form)
{
  return BinnedFunctional(counts).psi(h, r, mode, tau, form);
}

double q_r(const Sample& sample, const BandwidthMatrix& sigma, int r, Mode mode,
           const GridSpec& spec, double tau)
{
  check_functional_order(r);
  if (sample.dim() != sigma.dim())
    throw Error(ErrorKind::ShapeMismatch, "sample and covariance dimensions differ");
  if (mode == Mode::DirectExact) {
    const EtaFunction eta(sigma, r);
    return symmetric_pair_mean(sample, eta);
  }
  return BinnedFunctional(linear_binning(sample, spec)).q_r(sigma, r, mode, tau);
}

BinnedFunctional::BinnedFunctional(GridCounts counts)
  : convolver_(std::move(counts))
{
}

Shape BinnedFunctional::halfwidths_for(const BandwidthMatrix& h, Mode mode, double tau) const
{
  if (mode == Mode::FftL)
    return effective_halfwidths(h, spec(), tau);
  return full_halfwidths(spec());
}

double BinnedFunctional::contract(const KernelGrid& kernel, Mode mode) const
{
  const double n = counts().total();
  double sum = 0.0;
  switch (mode) {
  case Mode::DirectBinned:
    sum = binned_double_sum(counts(), kernel);
    break;
  case Mode::FftM:
  case Mode::FftL:
    sum = convolver_.contract(kernel);
    break;
  case Mode::DirectExact:
    throw Error(ErrorKind::InvalidArgument, "direct-exact mode needs raw observations");
  }
  return sum / (n * n);
}

double BinnedFunctional::psi(const BandwidthMatrix& h, int r, Mode mode, double tau,
                             KernelForm form) const
{
  const Shape l = halfwidths_for(h, mode, tau);
  return contract(build_kernel_grid(h, spec(), l, r, form), mode);
}

double BinnedFunctional::q_r(const BandwidthMatrix& sigma, int r, Mode mode, double tau) const
{
  const Shape l = halfwidths_for(sigma, mode, tau);
  return contract(build_eta_grid(sigma, spec(), l, r), mode);
}

} // namespace fastband
