#include "fastband/error.hpp"
#include "fastband/selector.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <numeric>

using namespace fastband;

namespace {

Sample gaussian_sample(std::mt19937_64& rng, Index n, const Matrix& cov)
{
  return Sample(oracle::gaussian_rows(rng, n, Vector::Zero(cov.rows()), cov));
}

ErrorKind kind_of(const std::function<void()>& f)
{
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

SelectorConfig config(Mode mode)
{
  SelectorConfig c;
  c.mode = mode;
  return c;
}

} // namespace

TEST_CASE("two-point objective by hand")
{
  Matrix m(2, 1);
  m << 0, 1;
  const Sample s(m);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto phi = [&](double u, double var) {
    return inv_sqrt_2pi / std::sqrt(var) * std::exp(-0.5 * u * u / var);
  };
  auto t = [&](double u) { return phi(u, 2.0) - 2.0 * phi(u, 1.0); };
  const double expect = 0.25 * (2.0 * t(0.0) + 2.0 * t(1.0)) + 2.0 / 2.0 * inv_sqrt_2pi;
  SelectorConfig c = config(Mode::DirectExact);
  CHECK(lscv_objective(s, BandwidthMatrix::identity(1), c) ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("T_H form and eta form of the objective agree")
{
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 1 + trial % 3;
    const Sample s = gaussian_sample(rng, 30 + trial, oracle::random_spd(rng, d, 0.5, 2.0));
    const BandwidthMatrix h(oracle::random_spd(rng, d, 0.05, 1.0));
    SelectorConfig ct = config(Mode::DirectExact), ce = ct;
    ct.kernel_form = KernelForm::TH;
    ce.kernel_form = KernelForm::Eta;
    const double a = lscv_objective(s, h, ct), b = lscv_objective(s, h, ce);
    CHECK(std::abs(a - b) <= 1e-12 * std::max(std::abs(a), 1e-3));
  }
}

TEST_CASE("derivative-order objectives keep the sign convention")
{
  std::mt19937_64 rng(42);
  const Sample s = gaussian_sample(rng, 40, Matrix::Identity(2, 2));
  const BandwidthMatrix h(0.3 * Matrix::Identity(2, 2));
  SelectorConfig c = config(Mode::DirectExact);
  c.r = 2;
  const double psi = psi_direct_exact(s, h, 2);
  CHECK(lscv_objective(s, h, c) == doctest::Approx(psi + 2.0 * kh_zero(h) / 40.0).epsilon(1e-13));
}

TEST_CASE("binned and exact objectives agree on a fine grid")
{
  std::mt19937_64 rng(43);
  const Sample s = gaussian_sample(rng, 500, Matrix::Identity(2, 2));
  const BandwidthMatrix h = normal_scale_diagonal(s);
  SelectorConfig fm = config(Mode::FftM);
  fm.grid_sizes = {150};
  const double exact = lscv_objective(s, h, config(Mode::DirectExact));
  const double coarse = oracle::rel_err(lscv_objective(s, h, fm), exact);
  // Linear binning error is second order in the bin width.
  CHECK(coarse < 1e-3);
  fm.grid_sizes = {300};
  const double fine = oracle::rel_err(lscv_objective(s, h, fm), exact);
  CHECK(fine < 2e-4);
  CHECK(fine < coarse / 3.0);
}

TEST_CASE("leave-one-out objective against explicit loops")
{
  std::mt19937_64 rng(44);
  const Sample s = gaussian_sample(rng, 25, Matrix::Identity(2, 2));
  const Matrix hm = oracle::random_spd(rng, 2, 0.1, 0.5);
  double same = 0.0, cross = 0.0;
  for (Index i = 0; i < 25; ++i)
    for (Index j = 0; j < 25; ++j) {
      const Vector u = s.row(i) - s.row(j);
      same += oracle::gauss(u, 2.0 * hm);
      if (i != j)
        cross += oracle::gauss(u, hm);
    }
  const double ref = same / 625.0 - 2.0 * cross / (25.0 * 24.0);
  CHECK(oracle::rel_err(lscv_leave_one_out(s, BandwidthMatrix(hm), 0), ref) < 1e-12);
}

TEST_CASE("Nelder-Mead on a convex quadratic")
{
  auto f = [](const Vector& x) { return std::pow(x(0) - 1.0, 2) + std::pow(x(1) - 2.0, 2); };
  const NelderMeadResult r =
    nelder_mead(f, Vector::Zero(2), Vector::Constant(2, 0.1), NelderMeadOptions{});
  CHECK(r.converged);
  CHECK(std::abs(r.x(0) - 1.0) < 1e-6);
  CHECK(std::abs(r.x(1) - 2.0) < 1e-6);
}

TEST_CASE("Nelder-Mead on the Rosenbrock function")
{
  auto f = [](const Vector& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  Vector start(2);
  start << -1.2, 1.0;
  NelderMeadOptions opt;
  opt.max_iter = 5000;
  const NelderMeadResult r = nelder_mead(f, start, Vector::Constant(2, 0.1), opt);
  CHECK(r.iterations <= 5000);
  CHECK(std::abs(r.x(0) - 1.0) < 1e-4);
  CHECK(std::abs(r.x(1) - 1.0) < 1e-4);
}

TEST_CASE("Nelder-Mead treats NaN as +inf and reports non-convergence")
{
  auto f = [](const Vector& x) { return x(0) < -0.5 ? std::nan("") : x.squaredNorm(); };
  Vector start = Vector::Constant(2, 1.0);
  const NelderMeadResult r =
    nelder_mead(f, start, Vector::Constant(2, 0.5), NelderMeadOptions{});
  CHECK(r.x.norm() < 1e-6);

  NelderMeadOptions tight;
  tight.max_iter = 3;
  const NelderMeadResult short_run = nelder_mead(f, start, Vector::Constant(2, 0.5), tight);
  CHECK_FALSE(short_run.converged);
  CHECK(short_run.iterations == 3);
}

TEST_CASE("restarting from the optimum is a fixed point")
{
  std::mt19937_64 rng(45);
  const Sample s = gaussian_sample(rng, 150, Matrix::Identity(2, 2));
  SelectorConfig c = config(Mode::DirectExact);
  const SelectionResult first = select_bandwidth(s, c);
  c.start = first.h.entries();
  const SelectionResult second = select_bandwidth(s, c);
  CHECK(std::abs(second.objective - first.objective) <= c.rel_tol * std::abs(first.objective));
}

TEST_CASE("dedup")
{
  Matrix m(4, 2);
  m << 1, 1, 2, 2, 1, 1, 3, 3;
  const DedupResult r = dedup(Sample(m));
  CHECK(r.removed == 1);
  REQUIRE(r.sample.size() == 3);
  CHECK(r.sample(0, 0) == 1);
  CHECK(r.sample(1, 0) == 2);
  CHECK(r.sample(2, 0) == 3);

  Matrix distinct(3, 1);
  distinct << 3, 1, 2;
  const DedupResult same = dedup(Sample(distinct));
  CHECK(same.removed == 0);
  CHECK(same.sample.rows() == distinct);

  const Matrix copies = Matrix::Constant(5, 2, 7.0);
  CHECK(kind_of([&] { dedup(Sample(copies)); }) == ErrorKind::AllDuplicates);
}

TEST_CASE("selection input errors")
{
  std::mt19937_64 rng(46);
  const Sample small = gaussian_sample(rng, 5, Matrix::Identity(2, 2));
  CHECK(kind_of([&] { select_bandwidth(small, SelectorConfig{}); }) == ErrorKind::TooFewPoints);
  const Matrix copies = Matrix::Constant(20, 2, 1.0);
  CHECK(kind_of([&] { select_bandwidth(Sample(copies), SelectorConfig{}); }) ==
        ErrorKind::AllDuplicates);
  SelectorConfig bad;
  bad.simplex.beta = 1.5;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
  bad = SelectorConfig{};
  bad.rel_tol = 0.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
  bad = SelectorConfig{};
  bad.r = 3;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("diagonal selection has exactly zero off-diagonals")
{
  std::mt19937_64 rng(47);
  Matrix cov(2, 2);
  cov << 1.0, 0.6, 0.6, 1.0;
  const Sample s = gaussian_sample(rng, 200, cov);
  for (Mode mode : {Mode::DirectExact, Mode::FftL}) {
    SelectorConfig c = config(mode);
    c.constraint = Constraint::Diagonal;
    const SelectionResult r = select_bandwidth(s, c);
    CHECK(r.h(0, 1) == 0.0);
    CHECK(r.h(1, 0) == 0.0);
    CHECK(r.converged);
  }
}

TEST_CASE("reported objective recomputes exactly")
{
  std::mt19937_64 rng(48);
  const Sample s = gaussian_sample(rng, 300, Matrix::Identity(2, 2));
  for (Mode mode : {Mode::DirectExact, Mode::FftM, Mode::FftL}) {
    SelectorConfig c = config(mode);
    c.grid_sizes = {60};
    const SelectionResult r = select_bandwidth(s, c);
    // The selector works on the sorted copy; the objective is order-free.
    const double again = lscv_objective(s, r.h, c);
    CHECK(std::abs(again - r.objective) <= 1e-12 * std::abs(r.objective));
    CHECK(r.evaluations > r.iterations);
  }
}

TEST_CASE("row order does not change the selected bandwidth")
{
  std::mt19937_64 rng(49);
  Matrix cov(2, 2);
  cov << 1.0, -0.4, -0.4, 2.0;
  const Matrix rows = oracle::gaussian_rows(rng, 120, Vector::Zero(2), cov);
  Matrix shuffled = rows;
  std::vector<Index> perm(rows.rows());
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Index i = 0; i < rows.rows(); ++i)
    shuffled.row(i) = rows.row(perm[i]);
  const SelectorConfig c = config(Mode::DirectExact);
  const SelectionResult a = select_bandwidth(Sample(rows), c);
  const SelectionResult b = select_bandwidth(Sample(shuffled), c);
  CHECK((a.h.entries() - b.h.entries()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("binned selection stays close to the exact one")
{
  std::mt19937_64 rng(50);
  const Sample s = gaussian_sample(rng, 1000, Matrix::Identity(2, 2));
  const SelectionResult exact = select_bandwidth(s, config(Mode::DirectExact));
  const SelectionResult binned = select_bandwidth(s, config(Mode::FftM));
  const Matrix he = exact.h.entries(), hb = binned.h.entries();
  const double scale = he.diagonal().maxCoeff();
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j)
      CHECK(std::abs(hb(i, j) - he(i, j)) <= 0.1 * (i == j ? he(i, j) : scale));
}

TEST_CASE("truncated kernels at the default tau bias the selection")
{
  // Cutting T_H at tau sqrt(lambda_max(H)) drops part of the phi_{2H} tail,
  // which favours near-isotropic bandwidths. A wider cut removes the drift.
  std::mt19937_64 rng(52);
  const Sample s = gaussian_sample(rng, 1000, Matrix::Identity(2, 2));
  const Matrix hm = select_bandwidth(s, config(Mode::FftM)).h.entries();
  SelectorConfig cut = config(Mode::FftL);
  const Matrix short_cut = select_bandwidth(s, cut).h.entries();
  cut.tau = 6.0;
  const Matrix long_cut = select_bandwidth(s, cut).h.entries();
  CHECK((long_cut - hm).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((short_cut - hm).cwiseAbs().maxCoeff() > 1e-2);
  CHECK(std::abs(short_cut(0, 0) - short_cut(1, 1)) < 0.1 * std::abs(hm(0, 0) - hm(1, 1)));
}

TEST_CASE("normal-scale start")
{
  std::mt19937_64 rng(51);
  const Sample s = gaussian_sample(rng, 400, Matrix::Identity(3, 3));
  const BandwidthMatrix h = normal_scale_diagonal(s);
  const double factor = std::pow(4.0 / 5.0, 2.0 / 7.0) * std::pow(400.0, -2.0 / 7.0);
  for (Index k = 0; k < 3; ++k) {
    const Vector col = s.rows().col(k);
    const double var = (col.array() - col.mean()).square().sum() / 399.0;
    CHECK(h(k, k) == doctest::Approx(factor * var).epsilon(1e-12));
  }
}

TEST_CASE("density on a grid")
{
  std::mt19937_64 rng(52);
  const Sample s = gaussian_sample(rng, 200, Matrix::Identity(2, 2));
  const Matrix hm = 0.15 * Matrix::Identity(2, 2);
  const BandwidthMatrix h(hm);
  const GridSpec spec(Vector::Constant(2, -6.0), Vector::Constant(2, 6.0), {241, 241});
  const std::vector<double> f = kde_on_grid(s, h, spec);
  REQUIRE(f.size() == 241u * 241u);
  double mass = 0.0;
  for (double v : f)
    mass += v;
  mass *= spec.delta(0) * spec.delta(1);
  CHECK(std::abs(mass - 1.0) < 1e-2);
  CHECK(mass >= 0.95);
  CHECK(mass <= 1.001);

  double peak = 0.0;
  for (double v : f)
    peak = std::max(peak, v);
  Index flat = 0;
  for (const GridPoint& p : grid_points(spec)) {
    const double ref = oracle::kde(s.rows(), hm, p.coords);
    if (ref > 1e-3 * peak)
      CHECK(std::abs(f[flat] - ref) <= 0.02 * ref);
    ++flat;
  }
}

TEST_CASE("single observation peaks at the nearest node")
{
  Matrix m(1, 2);
  m << 0.33, -1.12;
  const GridSpec spec(Vector::Constant(2, -3.0), Vector::Constant(2, 3.0), {61, 61});
  const std::vector<double> f =
    kde_on_grid(Sample(m), BandwidthMatrix(0.2 * Matrix::Identity(2, 2)), spec);
  const auto best = std::max_element(f.begin(), f.end()) - f.begin();
  CHECK(best / 61 == 33);
  CHECK(best % 61 == 19);
}
