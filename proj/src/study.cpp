#include "fastband/study.hpp"

#include "fastband/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace fastband {

namespace {

using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

Json number_or_null(double x)
{
  return std::isfinite(x) ? Json(x) : Json(nullptr);
}

Json matrix_json(const Matrix& m)
{
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < m.cols(); ++k)
      row.push_back(number_or_null(m(i, k)));
    rows.push_back(row);
  }
  return rows;
}

double median_of(std::vector<double> v)
{
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  for (double& x : v) {
    if (std::isnan(x))
      x = std::numeric_limits<double>::infinity();
  }
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <class T>
T field(const Json& j, const char* name)
{
  if (!j.contains(name))
    throw Error(ErrorKind::ParseError, std::string("report is missing '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("report field '") + name + "': " + e.what());
  }
}

} // namespace

Json RunReport::to_json() const
{
  Json j;
  j["report_version"] = kReportVersion;
  j["command"] = command;
  j["config"] = config;
  j["results"] = results;
  j["timings"] = {{"binning_ms", timings.binning_ms},
                  {"objective_evals", timings.objective_evals},
                  {"total_ms", timings.total_ms}};
  j["environment"] = {{"seed", seed ? Json(*seed) : Json(nullptr)}, {"version", version}};
  return j;
}

RunReport RunReport::from_json(const Json& j)
{
  if (!j.is_object())
    throw Error(ErrorKind::ParseError, "report must be a JSON object");
  if (field<int>(j, "report_version") != kReportVersion)
    throw Error(ErrorKind::ParseError, "unsupported report_version");
  RunReport r;
  r.command = field<std::string>(j, "command");
  r.config = field<Json>(j, "config");
  r.results = field<Json>(j, "results");
  const Json t = field<Json>(j, "timings");
  r.timings.binning_ms = field<double>(t, "binning_ms");
  r.timings.objective_evals = field<std::int64_t>(t, "objective_evals");
  r.timings.total_ms = field<double>(t, "total_ms");
  const Json env = field<Json>(j, "environment");
  const Json seed = field<Json>(env, "seed");
  if (!seed.is_null())
    r.seed = seed.get<std::uint64_t>();
  r.version = field<std::string>(env, "version");
  return r;
}

bool RunReport::operator==(const RunReport& other) const
{
  return to_json() == other.to_json();
}

Json to_json(const SelectorConfig& cfg)
{
  Json j;
  j["mode"] = std::string(to_string(cfg.mode));
  j["constraint"] = cfg.constraint == Constraint::Diagonal ? "diagonal" : "unconstrained";
  j["r"] = cfg.r;
  j["grid_sizes"] = cfg.grid_sizes;
  j["tau"] = cfg.tau;
  j["simplex"] = {{"alpha", cfg.simplex.alpha},
                  {"beta", cfg.simplex.beta},
                  {"gamma", cfg.simplex.gamma}};
  j["max_iter"] = cfg.max_iter;
  j["rel_tol"] = cfg.rel_tol;
  j["dedup"] = cfg.dedup;
  j["margin_fraction"] = cfg.margin_fraction;
  j["min_points"] = cfg.min_points;
  j["start"] = cfg.start ? matrix_json(*cfg.start) : Json(nullptr);
  return j;
}

Json to_json(const BandwidthMatrix& h)
{
  return matrix_json(h.entries());
}

Json to_json(const SelectionResult& result)
{
  Json j;
  j["H"] = to_json(result.h);
  j["objective"] = number_or_null(result.objective);
  j["iterations"] = result.iterations;
  j["evaluations"] = result.evaluations;
  j["converged"] = result.converged;
  j["observations"] = result.observations;
  j["duplicates_removed"] = result.duplicates_removed;
  j["timings"] = {{"binning_ms", result.timings.binning_ms},
                  {"optimization_ms", result.timings.optimization_ms}};
  return j;
}

int resolve_threads(int requested)
{
  if (requested > 0)
    return requested;
  if (const char* env = std::getenv("FASTBAND_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0)
      return v;
  }
  return 1;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task)
{
  const std::size_t workers =
    std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex mutex;
  auto work = [&] {
    while (!stop) {
      const std::size_t i = next++;
      if (i >= count)
        break;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!first)
          first = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back(work);
  for (auto& t : pool)
    t.join();
  if (first)
    std::rethrow_exception(first);
}

std::uint64_t replication_seed(std::uint64_t base, Index n, int rep)
{
  return derive_seed(derive_seed(base, static_cast<std::uint64_t>(n)),
                     static_cast<std::uint64_t>(rep));
}

std::vector<IseCell> ise_study(const NormalMixture& mix, const IseStudyConfig& cfg)
{
  if (cfg.reps < 1)
    throw Error(ErrorKind::InvalidArgument, "reps must be at least 1");
  if (cfg.sample_sizes.empty() || cfg.grid_sizes.empty())
    throw Error(ErrorKind::InvalidArgument, "sample and grid size lists must not be empty");
  cfg.selector.validate();

  const std::size_t ng = cfg.grid_sizes.size();
  std::vector<IseCell> cells;
  for (Index n : cfg.sample_sizes) {
    if (n < 1)
      throw Error(ErrorKind::InvalidArgument, "sample sizes must be positive");
    for (Index m : cfg.grid_sizes) {
      IseCell cell;
      cell.n = n;
      cell.grid = m;
      cell.ise.assign(cfg.reps, std::numeric_limits<double>::quiet_NaN());
      cell.bandwidths.assign(cfg.reps, Matrix());
      cells.push_back(std::move(cell));
    }
  }
  std::vector<std::vector<char>> converged(cells.size(), std::vector<char>(cfg.reps, 0));

  // One task per (n, rep); each writes only its own slots.
  const std::size_t tasks = cfg.sample_sizes.size() * static_cast<std::size_t>(cfg.reps);
  parallel_for(tasks, resolve_threads(cfg.threads), [&](std::size_t t) {
    const std::size_t ni = t / cfg.reps;
    const int rep = static_cast<int>(t % cfg.reps);
    const Index n = cfg.sample_sizes[ni];
    const Sample sample = sample_mixture(mix, n, replication_seed(cfg.seed, n, rep));
    for (std::size_t gi = 0; gi < ng; ++gi) {
      IseCell& cell = cells[ni * ng + gi];
      SelectorConfig sc = cfg.selector;
      sc.grid_sizes = {cfg.grid_sizes[gi]};
      try {
        const SelectionResult res = select_bandwidth(sample, sc);
        cell.ise[rep] = exact_ise(sample, res.h, mix);
        cell.bandwidths[rep] = res.h.entries();
        converged[ni * ng + gi][rep] = res.converged;
      } catch (const Error& e) {
        if (e.category() != ErrorCategory::Numerical && e.kind() != ErrorKind::AllDuplicates)
          throw;
      }
    }
  });

  for (std::size_t c = 0; c < cells.size(); ++c) {
    IseCell& cell = cells[c];
    cell.median = median_of(cell.ise);
    for (int rep = 0; rep < cfg.reps; ++rep) {
      const double v = cell.ise[rep];
      if (!(v <= cfg.failure_threshold))
        ++cell.failures;
      if (!converged[c][rep])
        ++cell.not_converged;
    }
  }
  return cells;
}

double mean_time_ms(const std::function<void()>& fn, int reps)
{
  if (reps < 1)
    throw Error(ErrorKind::InvalidArgument, "reps must be at least 1");
  fn();
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i)
    fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

double time_binning(const Sample& sample, const Shape& sizes, int reps)
{
  const GridSpec spec = make_grid(sample, sizes, 0.05);
  double sink = 0.0;
  const double ms = mean_time_ms([&] { sink += linear_binning(sample, spec).total(); }, reps);
  if (!(sink > 0.0))
    throw Error(ErrorKind::InvalidArgument, "binning produced no mass");
  return ms;
}

std::vector<BenchCell> bench(const NormalMixture& mix, const BenchConfig& cfg)
{
  std::vector<BenchCell> cells;
  for (Index n : cfg.sample_sizes) {
    const Sample sample = sample_mixture(mix, n, derive_seed(cfg.seed, static_cast<std::uint64_t>(n)));
    const BandwidthMatrix h = normal_scale_diagonal(sample);
    for (Mode mode : cfg.modes) {
      SelectorConfig sc;
      sc.mode = mode;
      sc.r = cfg.r;
      sc.tau = cfg.tau;
      sc.margin_fraction = cfg.margin_fraction;
      if (mode == Mode::DirectExact) {
        BenchCell cell{mode, n, 0};
        const LscvObjective objective(sample, sc);
        cell.mean_ms = mean_time_ms([&] { cell.objective = objective(h); }, cfg.reps);
        cells.push_back(cell);
        continue;
      }
      for (Index m : cfg.grid_sizes) {
        BenchCell cell{mode, n, m};
        sc.grid_sizes = {m};
        const GridSpec spec = make_grid(sample, sc.grid_sizes, cfg.margin_fraction);
        cell.mean_ms = mean_time_ms(
          [&] { cell.objective = LscvObjective(linear_binning(sample, spec), sc)(h); }, cfg.reps);
        cell.binning_ms = time_binning(sample, sc.grid_sizes, cfg.reps);
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::vector<QrCell> qr_bench(const NormalMixture& mix, const QrBenchConfig& cfg)
{
  if (cfg.fft_mode == Mode::DirectExact)
    throw Error(ErrorKind::InvalidArgument, "the comparison mode must be binned");
  if (!(cfg.sigma_scale > 0.0))
    throw Error(ErrorKind::InvalidArgument, "sigma scale must be positive");
  std::vector<QrCell> cells;
  for (Index n : cfg.sample_sizes) {
    const Sample sample = sample_mixture(mix, n, derive_seed(cfg.seed, static_cast<std::uint64_t>(n)));
    const Vector var =
      (sample.rows().rowwise() - sample.rows().colwise().mean()).colwise().squaredNorm().transpose() /
      static_cast<double>(std::max<Index>(n - 1, 1));
    const BandwidthMatrix sigma = BandwidthMatrix::diagonal(cfg.sigma_scale * var);
    const GridSpec spec = make_grid(sample, {cfg.grid}, cfg.margin_fraction);
    for (int r : cfg.orders) {
      check_functional_order(r);
      QrCell cell{n, r};
      cell.direct_ms = mean_time_ms(
        [&] { cell.direct_value = q_r(sample, sigma, r, Mode::DirectExact, spec, cfg.tau); },
        cfg.reps);
      cell.fft_ms = mean_time_ms(
        [&] { cell.fft_value = q_r(sample, sigma, r, cfg.fft_mode, spec, cfg.tau); }, cfg.reps);
      cell.rel_diff = std::abs(cell.fft_value - cell.direct_value) /
                      std::max(std::abs(cell.direct_value), std::numeric_limits<double>::min());
      cells.push_back(cell);
    }
  }
  return cells;
}

} // namespace fastband
