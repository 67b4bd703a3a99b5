#pragma once

#include "fastband/linalg.hpp"

#include <iterator>
#include <span>
#include <vector>

namespace fastband {

/// Sizes or multi-indices of a d-dimensional array. Arrays are stored flat in
/// row-major order with axis 0 slowest.
using Shape = std::vector<Index>;

Index shape_volume(const Shape& shape);
Shape row_major_strides(const Shape& shape);

/// n observations of a d-variate random vector, one per row.
class Sample
{
public:
  /// Throws InvalidArgument when empty or when any entry is not finite.
  explicit Sample(Matrix rows);

  Index size() const { return rows_.rows(); }
  Index dim() const { return rows_.cols(); }
  const Matrix& rows() const { return rows_; }
  Vector row(Index i) const { return rows_.row(i).transpose(); }
  double operator()(Index i, Index k) const { return rows_(i, k); }

private:
  Matrix rows_;
};

/// Equally spaced lattice with `sizes[k]` nodes from lo[k] to hi[k].
class GridSpec
{
public:
  GridSpec(Vector lo, Vector hi, Shape sizes);

  Index dim() const { return lo_.size(); }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  const Vector& deltas() const { return deltas_; }
  const Shape& sizes() const { return sizes_; }
  Index size(Index axis) const { return sizes_[axis]; }
  double delta(Index axis) const { return deltas_(axis); }
  Index total_points() const { return shape_volume(sizes_); }

  /// Coordinate of node j (0-based) along an axis; node sizes-1 is exactly hi.
  double coordinate(Index axis, Index j) const;

private:
  Vector lo_;
  Vector hi_;
  Shape sizes_;
  Vector deltas_;
};

/// Linear-binning weights attached to every node of a grid.
class GridCounts
{
public:
  /// Counts must be non-negative and laid out row-major over spec.sizes().
  GridCounts(GridSpec spec, std::vector<double> counts);

  const GridSpec& spec() const { return spec_; }
  const std::vector<double>& counts() const { return counts_; }
  std::span<const double> values() const { return counts_; }
  /// Total mass; equals the number of binned observations.
  double total() const { return total_; }

private:
  GridSpec spec_;
  std::vector<double> counts_;
  double total_;
};

/// Grid spanning the data range of every axis, widened on each side by
/// margin_fraction times that range.
GridSpec make_grid(const Sample& sample, const Shape& sizes, double margin_fraction);

GridCounts linear_binning(const Sample& sample, const GridSpec& spec);

struct GridPoint
{
  Shape index;
  Vector coords;
};

/// Forward range over every node of a grid in row-major order.
class GridPointRange
{
public:
  class iterator
  {
  public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = GridPoint;
    using difference_type = std::ptrdiff_t;
    using pointer = const GridPoint*;
    using reference = const GridPoint&;

    iterator() = default;
    iterator(const GridSpec* spec, Index flat);

    reference operator*() const { return point_; }
    pointer operator->() const { return &point_; }
    iterator& operator++();
    iterator operator++(int);
    bool operator==(const iterator& other) const { return flat_ == other.flat_; }

  private:
    void refresh_coords();

    const GridSpec* spec_ = nullptr;
    Index flat_ = 0;
    GridPoint point_;
  };

  explicit GridPointRange(const GridSpec& spec) : spec_(&spec) {}

  iterator begin() const { return iterator(spec_, 0); }
  iterator end() const { return iterator(spec_, spec_->total_points()); }

private:
  const GridSpec* spec_;
};

inline GridPointRange grid_points(const GridSpec& spec)
{
  return GridPointRange(spec);
}

} // namespace fastband
