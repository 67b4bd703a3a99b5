#include "fastband/grid.hpp"

#include "fastband/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fastband {

Index shape_volume(const Shape& shape)
{
  Index v = 1;
  for (Index s : shape)
    v *= s;
  return v;
}

Shape row_major_strides(const Shape& shape)
{
  Shape strides(shape.size(), 1);
  for (Index k = static_cast<Index>(shape.size()) - 2; k >= 0; --k)
    strides[k] = strides[k + 1] * shape[k + 1];
  return strides;
}

Sample::Sample(Matrix rows)
  : rows_(std::move(rows))
{
  if (rows_.rows() < 1 || rows_.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "sample must have n >= 1 and d >= 1");
  }
  if (!rows_.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "sample contains non-finite values");
  }
}

GridSpec::GridSpec(Vector lo, Vector hi, Shape sizes)
  : lo_(std::move(lo))
  , hi_(std::move(hi))
  , sizes_(std::move(sizes))
{
  if (lo_.size() == 0 || lo_.size() != hi_.size() ||
      static_cast<std::size_t>(lo_.size()) != sizes_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "grid bounds and sizes disagree in dimension");
  }
  deltas_.resize(lo_.size());
  for (Index k = 0; k < lo_.size(); ++k) {
    if (sizes_[k] < 2)
      throw Error(ErrorKind::InvalidArgument, "grid size must be >= 2 on every axis");
    if (!(lo_(k) < hi_(k)) || !std::isfinite(lo_(k)) || !std::isfinite(hi_(k)))
      throw Error(ErrorKind::DegenerateAxis, "grid axis " + std::to_string(k) + " has lo >= hi");
    deltas_(k) = (hi_(k) - lo_(k)) / static_cast<double>(sizes_[k] - 1);
  }
}

double GridSpec::coordinate(Index axis, Index j) const
{
  if (j == sizes_[axis] - 1)
    return hi_(axis);
  return lo_(axis) + static_cast<double>(j) * deltas_(axis);
}

GridCounts::GridCounts(GridSpec spec, std::vector<double> counts)
  : spec_(std::move(spec))
  , counts_(std::move(counts))
  , total_(0.0)
{
  if (static_cast<Index>(counts_.size()) != spec_.total_points()) {
    throw Error(ErrorKind::ShapeMismatch, "counts length does not match grid size");
  }
  for (double c : counts_) {
    if (!(c >= 0.0) || !std::isfinite(c))
      throw Error(ErrorKind::InvalidArgument, "grid counts must be finite and non-negative");
    total_ += c;
  }
}

GridSpec make_grid(const Sample& sample, const Shape& sizes, double margin_fraction)
{
  if (!(margin_fraction >= 0.0))
    throw Error(ErrorKind::InvalidArgument, "margin fraction must be >= 0");
  const Index d = sample.dim();
  Shape full_sizes = sizes;
  if (full_sizes.size() == 1 && d > 1)
    full_sizes.assign(d, sizes.front());
  if (static_cast<Index>(full_sizes.size()) != d)
    throw Error(ErrorKind::ShapeMismatch, "grid sizes do not match sample dimension");

  Vector lo(d), hi(d);
  for (Index k = 0; k < d; ++k) {
    const double mn = sample.rows().col(k).minCoeff();
    const double mx = sample.rows().col(k).maxCoeff();
    const double range = mx - mn;
    if (range == 0.0) {
      throw Error(ErrorKind::DegenerateAxis,
                  "all observations share coordinate " + std::to_string(k));
    }
    lo(k) = mn - margin_fraction * range;
    hi(k) = mx + margin_fraction * range;
  }
  return GridSpec(std::move(lo), std::move(hi), std::move(full_sizes));
}

GridCounts linear_binning(const Sample& sample, const GridSpec& spec)
{
  const Index d = spec.dim();
  if (sample.dim() != d)
    throw Error(ErrorKind::ShapeMismatch, "sample and grid dimensions differ");

  const Shape strides = row_major_strides(spec.sizes());
  std::vector<double> counts(spec.total_points(), 0.0);
  std::vector<Index> base(d);
  std::vector<double> frac(d);
  const Index corners = Index{1} << d;

  for (Index i = 0; i < sample.size(); ++i) {
    for (Index k = 0; k < d; ++k) {
      const double x = sample(i, k);
      if (x < spec.lo()(k) || x > spec.hi()(k)) {
        throw Error(ErrorKind::OutOfRange, "observation " + std::to_string(i) +
                                             " lies outside the grid on axis " +
                                             std::to_string(k));
      }
      const double pos = (x - spec.lo()(k)) / spec.delta(k);
      Index b = static_cast<Index>(std::floor(pos));
      b = std::clamp<Index>(b, 0, spec.size(k) - 2);
      base[k] = b;
      frac[k] = std::clamp(pos - static_cast<double>(b), 0.0, 1.0);
    }
    for (Index corner = 0; corner < corners; ++corner) {
      double w = 1.0;
      Index flat = 0;
      for (Index k = 0; k < d; ++k) {
        const bool upper = (corner >> k) & 1;
        w *= upper ? frac[k] : 1.0 - frac[k];
        flat += (base[k] + (upper ? 1 : 0)) * strides[k];
      }
      if (w != 0.0)
        counts[flat] += w;
    }
  }
  return GridCounts(spec, std::move(counts));
}

GridPointRange::iterator::iterator(const GridSpec* spec, Index flat)
  : spec_(spec)
  , flat_(flat)
{
  point_.index.assign(spec_->dim(), 0);
  point_.coords.resize(spec_->dim());
  if (flat_ < spec_->total_points()) {
    Index rest = flat_;
    for (Index k = spec_->dim() - 1; k >= 0; --k) {
      point_.index[k] = rest % spec_->size(k);
      rest /= spec_->size(k);
    }
    refresh_coords();
  }
}

void GridPointRange::iterator::refresh_coords()
{
  for (Index k = 0; k < spec_->dim(); ++k)
    point_.coords(k) = spec_->coordinate(k, point_.index[k]);
}

GridPointRange::iterator& GridPointRange::iterator::operator++()
{
  ++flat_;
  for (Index k = spec_->dim() - 1; k >= 0; --k) {
    if (++point_.index[k] < spec_->size(k))
      break;
    point_.index[k] = 0;
  }
  refresh_coords();
  return *this;
}

GridPointRange::iterator GridPointRange::iterator::operator++(int)
{
  iterator old = *this;
  ++*this;
  return old;
}

} // namespace fastband
