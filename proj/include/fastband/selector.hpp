#pragma once

#include "fastband/functionals.hpp"
#include "fastband/grid.hpp"
#include "fastband/linalg.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace fastband {

/// Nelder-Mead reflection (alpha), contraction (beta) and expansion (gamma).
struct SimplexParams
{
  double alpha = 1.0;
  double beta = 0.5;
  double gamma = 2.0;
};

struct SelectorConfig
{
  Mode mode = Mode::FftM;
  Constraint constraint = Constraint::Unconstrained;
  /// Derivative order of the LSCV_r criterion; 0 is ordinary LSCV.
  int r = 0;
  /// One size per axis, or a single size used on every axis.
  Shape grid_sizes{150};
  double tau = 3.7;
  SimplexParams simplex;
  int max_iter = 2000;
  double rel_tol = 1e-8;
  bool dedup = true;
  double margin_fraction = 0.05;
  Index min_points = 10;
  KernelForm kernel_form = KernelForm::Auto;
  /// Optional user-supplied starting bandwidth.
  std::optional<Matrix> start;

  /// Throws InvalidArgument on out-of-range settings.
  void validate() const;
};

struct Timings
{
  double binning_ms = 0.0;
  double optimization_ms = 0.0;
};

struct SelectionResult
{
  BandwidthMatrix h;
  double objective = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  Timings timings;
  Index observations = 0;
  Index duplicates_removed = 0;
};

/// The LSCV_r objective
///   (-1)^r { n^{-2} sum_i sum_j [eta_r(2H) - 2 eta_r(H)](X_i - X_j) + 2 n^{-1} K_H(0) }
/// with the double sum evaluated in the configured mode. Binned modes bin the
/// sample once at construction.
class LscvObjective
{
public:
  LscvObjective(const Sample& sample, const SelectorConfig& cfg);
  LscvObjective(const Sample& sample, const GridSpec& spec, const SelectorConfig& cfg);
  LscvObjective(GridCounts counts, const SelectorConfig& cfg);

  double operator()(const BandwidthMatrix& h) const;

  double sample_size() const { return n_; }
  /// Grid counts when the mode is binned, nullptr otherwise.
  const GridCounts* counts() const { return binned_ ? &binned_->counts() : nullptr; }

private:
  SelectorConfig cfg_;
  std::optional<Sample> sample_;
  std::unique_ptr<BinnedFunctional> binned_;
  double n_ = 0.0;
};

double lscv_objective(const Sample& sample, const BandwidthMatrix& h, const SelectorConfig& cfg);
double lscv_objective(const GridCounts& counts, const BandwidthMatrix& h, const SelectorConfig& cfg);

/// Leave-one-out form without the n ~ n - 1 simplification:
///   (-1)^r { n^{-2} sum_ij eta_r(X_i - X_j; 2H) - 2 n^{-1}(n-1)^{-1} sum_{i != j} eta_r(X_i - X_j; H) }.
/// Direct O(n^2); provided as a reference.
double lscv_leave_one_out(const Sample& sample, const BandwidthMatrix& h, int r);

struct NelderMeadOptions
{
  SimplexParams simplex;
  int max_iter = 2000;
  double rel_tol = 1e-8;
};

struct NelderMeadResult
{
  Vector x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization. The initial simplex is `start` plus
/// `steps(i)` along each coordinate. Converged once both the spread of vertex
/// values is within rel_tol * (|f_best| + rel_tol) and the simplex diameter
/// is within rel_tol * (1 + max|x_best|). NaN values count as +inf.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                             const Vector& steps, const NelderMeadOptions& options);

/// Minimizes an objective over bandwidth matrices through SpdParam
/// coordinates. Trial points that fail to decode or raise a numerical error
/// score +inf.
SelectionResult nelder_mead(const std::function<double(const BandwidthMatrix&)>& objective,
                            const SpdParam& start, const SelectorConfig& cfg);

/// Normal-scale diagonal bandwidth: diag(S) (4 / (d + 2))^{2/(d+4)} n^{-2/(d+4)}.
BandwidthMatrix normal_scale_diagonal(const Sample& sample);

/// Full pipeline: dedup, canonical row order, grid, binning (once), simplex
/// search, decode.
SelectionResult select_bandwidth(const Sample& sample, const SelectorConfig& cfg);

/// Kernel density estimate at every grid node, via the binned convolution
/// with kernel values K_H(delta j) / n. Row-major over spec.sizes().
std::vector<double> kde_on_grid(const Sample& sample, const BandwidthMatrix& h,
                                const GridSpec& spec);

struct DedupResult
{
  Sample sample;
  Index removed = 0;
};

/// Removes exact duplicate rows keeping first occurrences in order. Throws
/// AllDuplicates when fewer than two distinct rows remain.
DedupResult dedup(const Sample& sample);

} // namespace fastband
