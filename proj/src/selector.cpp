#include "fastband/selector.hpp"

#include "fastband/error.hpp"
#include "fastband/fft_conv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fastband {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double sanitize(double v)
{
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

bool binned(Mode mode)
{
  return mode != Mode::DirectExact;
}

Sample sorted_rows(const Sample& sample)
{
  const Index n = sample.size(), d = sample.dim();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index k = 0; k < d; ++k) {
      if (sample(a, k) != sample(b, k))
        return sample(a, k) < sample(b, k);
    }
    return false;
  });
  Matrix rows(n, d);
  for (Index i = 0; i < n; ++i)
    rows.row(i) = sample.rows().row(order[i]);
  return Sample(std::move(rows));
}

/// Initial simplex steps: 0.1 on log-diagonal coordinates, 0.1 L_ii on the
/// off-diagonal entries of row i.
Vector initial_steps(const SpdParam& start)
{
  Vector steps(start.theta.size());
  if (start.constraint == Constraint::Diagonal) {
    steps.setConstant(0.1);
    return steps;
  }
  Index pos = 0;
  for (Index i = 0; i < start.dim; ++i) {
    const double lii = std::exp(start.theta(pos + i));
    for (Index j = 0; j < i; ++j)
      steps(pos + j) = 0.1 * lii;
    steps(pos + i) = 0.1;
    pos += i + 1;
  }
  return steps;
}

} // namespace

void SelectorConfig::validate() const
{
  check_functional_order(r);
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
  if (!(tau > 0.0) || !std::isfinite(tau))
    fail("tau must be positive");
  if (grid_sizes.empty())
    fail("grid sizes must not be empty");
  for (Index m : grid_sizes) {
    if (m < 2)
      fail("every grid size must be at least 2");
  }
  if (!(simplex.alpha > 0.0) || !(simplex.beta > 0.0 && simplex.beta < 1.0) ||
      !(simplex.gamma > 1.0))
    fail("simplex coefficients need alpha > 0, 0 < beta < 1, gamma > 1");
  if (max_iter < 1)
    fail("max_iter must be positive");
  if (!(rel_tol > 0.0))
    fail("rel_tol must be positive");
  if (!(margin_fraction >= 0.0) || !std::isfinite(margin_fraction))
    fail("margin fraction must be non-negative");
  if (min_points < 2)
    fail("min_points must be at least 2");
  if (kernel_form == KernelForm::TH && r != 0)
    fail("the T_H kernel form exists only for r = 0");
}

LscvObjective::LscvObjective(const Sample& sample, const SelectorConfig& cfg)
  : cfg_(cfg), n_(static_cast<double>(sample.size()))
{
  cfg_.validate();
  if (binned(cfg_.mode))
    binned_ = std::make_unique<BinnedFunctional>(
      linear_binning(sample, make_grid(sample, cfg_.grid_sizes, cfg_.margin_fraction)));
  else
    sample_.emplace(sample);
}

LscvObjective::LscvObjective(const Sample& sample, const GridSpec& spec, const SelectorConfig& cfg)
  : cfg_(cfg), n_(static_cast<double>(sample.size()))
{
  cfg_.validate();
  if (binned(cfg_.mode))
    binned_ = std::make_unique<BinnedFunctional>(linear_binning(sample, spec));
  else
    sample_.emplace(sample);
}

LscvObjective::LscvObjective(GridCounts counts, const SelectorConfig& cfg)
  : cfg_(cfg), n_(counts.total())
{
  cfg_.validate();
  if (!binned(cfg_.mode))
    throw Error(ErrorKind::InvalidArgument, "direct-exact mode needs raw observations");
  if (!(n_ > 0.0))
    throw Error(ErrorKind::TooFewPoints, "grid counts are empty");
  binned_ = std::make_unique<BinnedFunctional>(std::move(counts));
}

double LscvObjective::operator()(const BandwidthMatrix& h) const
{
  const Index d = sample_ ? sample_->dim() : binned_->spec().dim();
  if (h.dim() != d)
    throw Error(ErrorKind::ShapeMismatch, "bandwidth and data dimensions differ");
  const double psi = sample_ ? psi_direct_exact(*sample_, h, cfg_.r, cfg_.kernel_form)
                             : binned_->psi(h, cfg_.r, cfg_.mode, cfg_.tau, cfg_.kernel_form);
  const double sign = (cfg_.r % 2 == 0) ? 1.0 : -1.0;
  return sign * (psi + 2.0 * kh_zero(h) / n_);
}

double lscv_objective(const Sample& sample, const BandwidthMatrix& h, const SelectorConfig& cfg)
{
  return LscvObjective(sample, cfg)(h);
}

double lscv_objective(const GridCounts& counts, const BandwidthMatrix& h, const SelectorConfig& cfg)
{
  return LscvObjective(counts, cfg)(h);
}

double lscv_leave_one_out(const Sample& sample, const BandwidthMatrix& h, int r)
{
  check_functional_order(r);
  if (sample.dim() != h.dim())
    throw Error(ErrorKind::ShapeMismatch, "sample and bandwidth dimensions differ");
  const Index n = sample.size(), d = sample.dim();
  if (n < 2)
    throw Error(ErrorKind::TooFewPoints, "leave-one-out needs at least two observations");
  const EtaFunction eta2h(h.scaled(2.0), r);
  const EtaFunction etah(h, r);
  std::vector<double> diff(d, 0.0);
  const double nn = static_cast<double>(n);
  double same = nn * eta2h(std::span<const double>(diff));
  double cross = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      for (Index k = 0; k < d; ++k)
        diff[k] = sample(i, k) - sample(j, k);
      const std::span<const double> u(diff);
      same += 2.0 * eta2h(u);
      cross += 2.0 * etah(u);
    }
  }
  const double sign = (r % 2 == 0) ? 1.0 : -1.0;
  return sign * (same / (nn * nn) - 2.0 * cross / (nn * (nn - 1.0)));
}

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                             const Vector& steps, const NelderMeadOptions& options)
{
  const Index p = start.size();
  if (p < 1 || steps.size() != p)
    throw Error(ErrorKind::ShapeMismatch, "start and steps must have the same positive length");
  const auto& [alpha, beta, gamma] = options.simplex;

  NelderMeadResult out;
  auto eval = [&](const Vector& x) {
    ++out.evaluations;
    return sanitize(f(x));
  };

  std::vector<Vector> pts(p + 1, start);
  std::vector<double> vals(p + 1);
  for (Index i = 0; i < p; ++i)
    pts[i + 1](i) += steps(i);
  for (Index i = 0; i <= p; ++i)
    vals[i] = eval(pts[i]);

  std::vector<Index> order(p + 1);
  auto sort_vertices = [&] {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return vals[a] < vals[b]; });
    std::vector<Vector> sp(p + 1);
    std::vector<double> sv(p + 1);
    for (Index i = 0; i <= p; ++i) {
      sp[i] = std::move(pts[order[i]]);
      sv[i] = vals[order[i]];
    }
    pts = std::move(sp);
    vals = std::move(sv);
  };
  auto converged = [&] {
    const double fb = vals.front();
    if (!std::isfinite(fb) || !std::isfinite(vals.back()))
      return false;
    const double spread = vals.back() - fb;
    if (spread > options.rel_tol * (std::abs(fb) + options.rel_tol))
      return false;
    double diam = 0.0;
    for (Index i = 1; i <= p; ++i)
      diam = std::max(diam, (pts[i] - pts[0]).lpNorm<Eigen::Infinity>());
    return diam <= options.rel_tol * (1.0 + pts[0].lpNorm<Eigen::Infinity>());
  };

  sort_vertices();
  while (out.iterations < options.max_iter) {
    if (converged()) {
      out.converged = true;
      break;
    }
    ++out.iterations;

    Vector centroid = Vector::Zero(p);
    for (Index i = 0; i < p; ++i)
      centroid += pts[i];
    centroid /= static_cast<double>(p);

    const Vector& worst = pts[p];
    const Vector xr = centroid + alpha * (centroid - worst);
    const double fr = eval(xr);

    if (fr < vals[0]) {
      const Vector xe = centroid + gamma * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[p] = xe;
        vals[p] = fe;
      } else {
        pts[p] = xr;
        vals[p] = fr;
      }
    } else if (fr < vals[p - 1]) {
      pts[p] = xr;
      vals[p] = fr;
    } else {
      // Outside contraction when the reflected point beats the worst vertex,
      // inside contraction otherwise.
      const bool outside = fr < vals[p];
      const Vector xc = outside ? Vector(centroid + beta * (xr - centroid))
                                : Vector(centroid + beta * (worst - centroid));
      const double fc = eval(xc);
      if (fc < (outside ? fr : vals[p])) {
        pts[p] = xc;
        vals[p] = fc;
      } else {
        for (Index i = 1; i <= p; ++i) {
          pts[i] = pts[0] + beta * (pts[i] - pts[0]);
          vals[i] = eval(pts[i]);
        }
      }
    }
    sort_vertices();
  }
  if (!out.converged && converged())
    out.converged = true;
  out.x = pts[0];
  out.f = vals[0];
  return out;
}

SelectionResult nelder_mead(const std::function<double(const BandwidthMatrix&)>& objective,
                            const SpdParam& start, const SelectorConfig& cfg)
{
  auto f = [&](const Vector& theta) {
    SpdParam param = start;
    param.theta = theta;
    try {
      return objective(param.decode());
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::Numerical)
        return std::numeric_limits<double>::infinity();
      throw;
    }
  };
  const NelderMeadOptions options{cfg.simplex, cfg.max_iter, cfg.rel_tol};
  const NelderMeadResult nm = nelder_mead(f, start.theta, initial_steps(start), options);
  if (!std::isfinite(nm.f))
    throw Error(ErrorKind::SingularBandwidth, "no trial bandwidth gave a finite objective");
  SpdParam best = start;
  best.theta = nm.x;
  SelectionResult result{best.decode(), nm.f, nm.iterations, nm.evaluations, nm.converged, {}, 0, 0};
  return result;
}

BandwidthMatrix normal_scale_diagonal(const Sample& sample)
{
  const Index n = sample.size(), d = sample.dim();
  if (n < 2)
    throw Error(ErrorKind::TooFewPoints, "a scale estimate needs at least two observations");
  const double dd = static_cast<double>(d);
  const double factor = std::pow(4.0 / (dd + 2.0), 2.0 / (dd + 4.0)) *
                        std::pow(static_cast<double>(n), -2.0 / (dd + 4.0));
  const Vector mean = sample.rows().colwise().mean().transpose();
  Vector diag(d);
  for (Index k = 0; k < d; ++k) {
    const double var = (sample.rows().col(k).array() - mean(k)).square().sum() /
                       static_cast<double>(n - 1);
    if (!(var > 0.0))
      throw Error(ErrorKind::DegenerateAxis,
                  "axis " + std::to_string(k) + " has zero sample variance");
    diag(k) = factor * var;
  }
  return BandwidthMatrix::diagonal(diag);
}

SelectionResult select_bandwidth(const Sample& sample, const SelectorConfig& cfg)
{
  cfg.validate();
  Index removed = 0;
  Sample data = sample;
  if (cfg.dedup) {
    DedupResult unique = dedup(sample);
    removed = unique.removed;
    data = std::move(unique.sample);
  }
  if (data.size() < cfg.min_points) {
    throw Error(ErrorKind::TooFewPoints, "need at least " + std::to_string(cfg.min_points) +
                                           " observations, have " +
                                           std::to_string(data.size()));
  }
  data = sorted_rows(data);

  const BandwidthMatrix start =
    cfg.start ? BandwidthMatrix(*cfg.start) : normal_scale_diagonal(data);
  if (start.dim() != data.dim())
    throw Error(ErrorKind::ShapeMismatch, "starting bandwidth and data dimensions differ");

  auto t0 = Clock::now();
  std::optional<LscvObjective> objective;
  if (binned(cfg.mode)) {
    GridCounts counts =
      linear_binning(data, make_grid(data, cfg.grid_sizes, cfg.margin_fraction));
    objective.emplace(std::move(counts), cfg);
  } else {
    objective.emplace(data, cfg);
  }
  const double binning_ms = binned(cfg.mode) ? elapsed_ms(t0) : 0.0;

  t0 = Clock::now();
  SelectionResult result =
    nelder_mead([&](const BandwidthMatrix& h) { return (*objective)(h); },
                SpdParam::encode(start, cfg.constraint), cfg);
  result.timings.binning_ms = binning_ms;
  result.timings.optimization_ms = elapsed_ms(t0);
  result.observations = data.size();
  result.duplicates_removed = removed;
  return result;
}

std::vector<double> kde_on_grid(const Sample& sample, const BandwidthMatrix& h,
                                const GridSpec& spec)
{
  if (sample.dim() != h.dim() || spec.dim() != h.dim())
    throw Error(ErrorKind::ShapeMismatch, "sample, grid and bandwidth dimensions differ");
  const GridCounts counts = linear_binning(sample, spec);
  const Index d = h.dim();
  const Matrix linv =
    h.chol().triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  const double n = static_cast<double>(sample.size());
  const double scale = kh_zero(h) / n;
  const KernelGrid kernel =
    tabulate_kernel(spec, full_halfwidths(spec), [&](std::span<const double> u) {
      const Vector z =
        linv.triangularView<Eigen::Lower>() * Eigen::Map<const Vector>(u.data(), d);
      return scale * std::exp(-0.5 * z.squaredNorm());
    });
  return convolve_counts_kernel(counts, kernel);
}

DedupResult dedup(const Sample& sample)
{
  const Index n = sample.size(), d = sample.dim();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index a, Index b) {
    for (Index k = 0; k < d; ++k) {
      if (sample(a, k) != sample(b, k))
        return sample(a, k) < sample(b, k);
    }
    return a < b;
  };
  auto same = [&](Index a, Index b) {
    for (Index k = 0; k < d; ++k) {
      if (sample(a, k) != sample(b, k))
        return false;
    }
    return true;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<char> keep(n, 1);
  for (Index i = 1; i < n; ++i) {
    if (same(order[i], order[i - 1]))
      keep[order[i]] = 0;
  }
  const Index kept = std::count(keep.begin(), keep.end(), char{1});
  if (kept < 2)
    throw Error(ErrorKind::AllDuplicates,
                "fewer than two distinct observations remain after removing duplicates");
  Matrix rows(kept, d);
  Index out = 0;
  for (Index i = 0; i < n; ++i) {
    if (keep[i])
      rows.row(out++) = sample.rows().row(i);
  }
  return {Sample(std::move(rows)), n - kept};
}

} // namespace fastband
