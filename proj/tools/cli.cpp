#include "cli.hpp"

#include "fastband/csv.hpp"
#include "fastband/error.hpp"
#include "fastband/study.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

namespace fastband::cli {

namespace {

using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct SelectorFlags
{
  std::string mode = "fft-M";
  std::string constraint = "unconstrained";
  std::vector<Index> grid{150};
  double tau = 3.7;
  int r = 0;
  int max_iter = 2000;
  double rel_tol = 1e-8;
  bool no_dedup = false;
  double margin = 0.05;
  Index min_points = 10;
  std::vector<double> start;

  void add_to(CLI::App* app, bool with_grid)
  {
    app->add_option("--mode", mode, "direct-exact, direct-binned, fft-M or fft-L")
      ->capture_default_str();
    app->add_option("--constraint", constraint, "unconstrained or diagonal")
      ->capture_default_str();
    if (with_grid)
      app->add_option("--grid", grid, "grid size, one value or one per axis")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--tau", tau, "effective support factor for fft-L")->capture_default_str();
    app->add_option("--r", r, "derivative order of the criterion (even)")->capture_default_str();
    app->add_option("--max-iter", max_iter, "simplex iteration limit")->capture_default_str();
    app->add_option("--rel-tol", rel_tol, "simplex convergence tolerance")->capture_default_str();
    app->add_flag("--no-dedup", no_dedup, "keep duplicate observations");
    app->add_option("--margin", margin, "grid margin as a fraction of the data range")
      ->capture_default_str();
    app->add_option("--min-points", min_points, "minimum number of distinct observations")
      ->capture_default_str();
    app->add_option("--start", start, "starting bandwidth, d*d row-major entries")
      ->delimiter(',');
  }

  SelectorConfig build() const
  {
    SelectorConfig cfg;
    cfg.mode = parse_mode(mode);
    if (constraint == "unconstrained" || constraint == "full")
      cfg.constraint = Constraint::Unconstrained;
    else if (constraint == "diagonal" || constraint == "diag")
      cfg.constraint = Constraint::Diagonal;
    else
      throw Error(ErrorKind::InvalidArgument, "unknown constraint '" + constraint + "'");
    cfg.grid_sizes = grid;
    cfg.tau = tau;
    cfg.r = r;
    cfg.max_iter = max_iter;
    cfg.rel_tol = rel_tol;
    cfg.dedup = !no_dedup;
    cfg.margin_fraction = margin;
    cfg.min_points = min_points;
    if (!start.empty())
      cfg.start = square_matrix(start, "--start");
    cfg.validate();
    return cfg;
  }

  static Matrix square_matrix(const std::vector<double>& v, const std::string& flag)
  {
    const auto d = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(v.size()))));
    if (d * d != static_cast<Index>(v.size()))
      throw Error(ErrorKind::InvalidArgument, flag + " needs d*d entries");
    Matrix m(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index k = 0; k < d; ++k)
        m(i, k) = v[i * d + k];
    return m;
  }
};

NormalMixture resolve_mixture(const std::string& model, const std::string& mixture_file)
{
  return mixture_file.empty() ? mixture_catalog(model) : load_mixture(mixture_file);
}

double since_ms(Clock::time_point t0)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void emit(const RunReport& report, const std::string& path, std::ostream& out)
{
  const std::string text = report.to_json().dump(2);
  if (path.empty() || path == "-") {
    out << text << '\n';
    return;
  }
  std::ofstream file(path);
  if (!file)
    throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
  file << text << '\n';
}

RunReport cmd_select(const std::string& input, bool header, const SelectorFlags& flags)
{
  const auto t0 = Clock::now();
  const Sample sample = read_csv_file(input, {header});
  const SelectorConfig cfg = flags.build();
  const SelectionResult res = select_bandwidth(sample, cfg);

  RunReport report;
  report.command = "select";
  report.config = to_json(cfg);
  report.config["input"] = input;
  report.results = to_json(res);
  report.timings.binning_ms = res.timings.binning_ms;
  report.timings.objective_evals = res.evaluations;
  report.timings.total_ms = since_ms(t0);
  return report;
}

struct IseFlags
{
  std::string model = "standard";
  std::string mixture_file;
  std::vector<Index> ns{256};
  std::vector<Index> grids{20, 150};
  int reps = 50;
  std::uint64_t seed = 1;
  double threshold = 1.0;
  int threads = 0;
  std::string csv_path;
};

RunReport cmd_ise_study(const IseFlags& flags, const SelectorFlags& sel)
{
  const auto t0 = Clock::now();
  const NormalMixture mix = resolve_mixture(flags.model, flags.mixture_file);
  IseStudyConfig cfg;
  cfg.sample_sizes = flags.ns;
  cfg.grid_sizes = flags.grids;
  cfg.reps = flags.reps;
  cfg.seed = flags.seed;
  cfg.failure_threshold = flags.threshold;
  cfg.threads = flags.threads;
  cfg.selector = sel.build();
  const std::vector<IseCell> cells = ise_study(mix, cfg);

  RunReport report;
  report.command = "ise-study";
  report.seed = flags.seed;
  report.config = {{"model", flags.mixture_file.empty() ? flags.model : flags.mixture_file},
                   {"n", flags.ns},
                   {"grid", flags.grids},
                   {"reps", flags.reps},
                   {"failure_threshold", flags.threshold},
                   {"selector", to_json(cfg.selector)}};
  Json out = Json::array();
  for (const IseCell& c : cells) {
    Json ise = Json::array();
    for (double v : c.ise)
      ise.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    out.push_back({{"n", c.n},
                   {"grid", c.grid},
                   {"ise", ise},
                   {"median", std::isfinite(c.median) ? Json(c.median) : Json(nullptr)},
                   {"failures", c.failures},
                   {"not_converged", c.not_converged}});
  }
  report.results = {{"cells", out}};
  report.timings.total_ms = since_ms(t0);

  if (!flags.csv_path.empty()) {
    std::ofstream csv(flags.csv_path);
    if (!csv)
      throw Error(ErrorKind::InvalidArgument, "cannot write '" + flags.csv_path + "'");
    csv << "n,grid,rep,ise\n";
    for (const IseCell& c : cells)
      for (std::size_t rep = 0; rep < c.ise.size(); ++rep)
        csv << c.n << ',' << c.grid << ',' << rep << ','
            << (std::isfinite(c.ise[rep]) ? format_double(c.ise[rep]) : "") << '\n';
  }
  return report;
}

struct BenchFlags
{
  std::string model = "standard";
  std::string mixture_file;
  std::vector<Index> ns{400, 4000};
  std::vector<Index> grids{180};
  std::vector<std::string> modes{"direct-exact", "fft-M", "fft-L"};
  int reps = 5;
  std::uint64_t seed = 1;
  double tau = 3.7;
  int r = 0;
};

RunReport cmd_bench(const BenchFlags& flags)
{
  const auto t0 = Clock::now();
  BenchConfig cfg;
  cfg.sample_sizes = flags.ns;
  cfg.grid_sizes = flags.grids;
  cfg.modes.clear();
  for (const auto& m : flags.modes)
    cfg.modes.push_back(parse_mode(m));
  cfg.reps = flags.reps;
  cfg.seed = flags.seed;
  cfg.tau = flags.tau;
  cfg.r = flags.r;
  check_functional_order(cfg.r);
  const std::vector<BenchCell> cells =
    bench(resolve_mixture(flags.model, flags.mixture_file), cfg);

  RunReport report;
  report.command = "bench";
  report.seed = flags.seed;
  report.config = {{"model", flags.mixture_file.empty() ? flags.model : flags.mixture_file},
                   {"n", flags.ns},
                   {"grid", flags.grids},
                   {"modes", flags.modes},
                   {"reps", flags.reps},
                   {"tau", flags.tau},
                   {"r", flags.r}};
  Json out = Json::array();
  double binning = 0.0;
  for (const BenchCell& c : cells) {
    out.push_back({{"mode", std::string(to_string(c.mode))},
                   {"n", c.n},
                   {"grid", c.grid},
                   {"mean_ms", c.mean_ms},
                   {"binning_ms", c.binning_ms},
                   {"objective", c.objective}});
    binning += c.binning_ms;
  }
  report.results = {{"cells", out}};
  report.timings.binning_ms = binning;
  report.timings.total_ms = since_ms(t0);
  return report;
}

struct QrFlags
{
  std::string model = "standard";
  std::string mixture_file;
  std::vector<Index> ns{100, 1000};
  std::vector<int> orders{0, 2, 4};
  Index grid = 100;
  int reps = 3;
  std::uint64_t seed = 1;
  std::string mode = "fft-M";
  double tau = 3.7;
  double sigma_scale = 1.0;
};

RunReport cmd_qr_bench(const QrFlags& flags)
{
  const auto t0 = Clock::now();
  QrBenchConfig cfg;
  cfg.sample_sizes = flags.ns;
  cfg.orders = flags.orders;
  cfg.grid = flags.grid;
  cfg.reps = flags.reps;
  cfg.seed = flags.seed;
  cfg.fft_mode = parse_mode(flags.mode);
  cfg.tau = flags.tau;
  cfg.sigma_scale = flags.sigma_scale;
  const std::vector<QrCell> cells = qr_bench(resolve_mixture(flags.model, flags.mixture_file), cfg);

  RunReport report;
  report.command = "qr-bench";
  report.seed = flags.seed;
  report.config = {{"model", flags.mixture_file.empty() ? flags.model : flags.mixture_file},
                   {"n", flags.ns},
                   {"r", flags.orders},
                   {"grid", flags.grid},
                   {"reps", flags.reps},
                   {"mode", flags.mode},
                   {"tau", flags.tau},
                   {"sigma_scale", flags.sigma_scale}};
  Json out = Json::array();
  for (const QrCell& c : cells) {
    out.push_back({{"n", c.n},
                   {"r", c.r},
                   {"direct_ms", c.direct_ms},
                   {"fft_ms", c.fft_ms},
                   {"direct_value", c.direct_value},
                   {"fft_value", c.fft_value},
                   {"rel_diff", c.rel_diff}});
  }
  report.results = {{"cells", out}};
  report.timings.total_ms = since_ms(t0);
  return report;
}

struct DensityFlags
{
  std::string input;
  bool header = false;
  std::vector<double> h;
  bool select = false;
  std::vector<Index> grid{100};
  double margin = 0.05;
  std::string output = "-";
};

int cmd_density(const DensityFlags& flags, const SelectorFlags& sel, std::ostream& out)
{
  const auto t0 = Clock::now();
  const Sample sample = read_csv_file(flags.input, {flags.header});
  if (flags.h.empty() == !flags.select)
    throw Error(ErrorKind::InvalidArgument, "give exactly one of --H and --select");

  std::optional<SelectionResult> selected;
  if (flags.select)
    selected = select_bandwidth(sample, sel.build());
  const BandwidthMatrix h =
    selected ? selected->h : BandwidthMatrix(SelectorFlags::square_matrix(flags.h, "--H"));
  if (h.dim() != sample.dim())
    throw Error(ErrorKind::ShapeMismatch, "bandwidth and data dimensions differ");

  // Widen the grid so that the kernel mass around the extreme points fits.
  const Index d = sample.dim();
  Vector lo = sample.rows().colwise().minCoeff().transpose();
  Vector hi = sample.rows().colwise().maxCoeff().transpose();
  Shape sizes(d);
  for (Index k = 0; k < d; ++k) {
    const double pad = flags.margin * (hi(k) - lo(k)) + 4.0 * std::sqrt(h(k, k));
    lo(k) -= pad;
    hi(k) += pad;
    sizes[k] = flags.grid.size() == 1 ? flags.grid[0] : flags.grid.at(k);
  }
  if (flags.grid.size() != 1 && static_cast<Index>(flags.grid.size()) != d)
    throw Error(ErrorKind::ShapeMismatch, "--grid needs one value or one per axis");
  const GridSpec spec(lo, hi, sizes);
  const std::vector<double> f = kde_on_grid(sample, h, spec);

  double cell = 1.0;
  for (Index k = 0; k < d; ++k)
    cell *= spec.delta(k);
  double mass = 0.0;
  for (double v : f)
    mass += v;
  mass *= cell;

  auto write_grid = [&](std::ostream& os) {
    for (Index k = 0; k < d; ++k)
      os << 'x' << (k + 1) << ',';
    os << "density\n";
    std::size_t flat = 0;
    for (const GridPoint& p : grid_points(spec)) {
      for (Index k = 0; k < d; ++k)
        os << format_double(p.coords(k)) << ',';
      os << format_double(f[flat++]) << '\n';
    }
  };
  if (flags.output == "-") {
    write_grid(out);
    return kExitOk;
  }
  {
    std::ofstream file(flags.output);
    if (!file)
      throw Error(ErrorKind::InvalidArgument, "cannot write '" + flags.output + "'");
    write_grid(file);
  }
  RunReport report;
  report.command = "density";
  report.config = {{"input", flags.input}, {"grid", sizes}, {"output", flags.output}};
  if (selected)
    report.config["selector"] = to_json(sel.build());
  const auto peak = std::max_element(f.begin(), f.end()) - f.begin();
  Json peak_at = Json::array();
  {
    Index rest = peak;
    const Shape strides = row_major_strides(sizes);
    for (Index k = 0; k < d; ++k) {
      peak_at.push_back(spec.coordinate(k, rest / strides[k]));
      rest %= strides[k];
    }
  }
  report.results = {{"H", to_json(h)}, {"rows", f.size()}, {"mass", mass}, {"peak", peak_at}};
  if (selected) {
    report.results["selection"] = to_json(*selected);
    report.timings.binning_ms = selected->timings.binning_ms;
    report.timings.objective_evals = selected->evaluations;
  }
  report.timings.total_ms = since_ms(t0);
  emit(report, "-", out);
  return kExitOk;
}

void report_error(std::ostream& out, std::ostream& err, const std::string& kind,
                  const std::string& message)
{
  Json j = {{"report_version", kReportVersion}, {"error", {{"kind", kind}, {"message", message}}}};
  out << j.dump(2) << '\n';
  err << "error: " << message << '\n';
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Fast bandwidth selection for multivariate kernel density estimation"};
  app.name("fastband");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string output;
  bool header = false;
  std::string input;

  SelectorFlags select_flags;
  auto* sel = app.add_subcommand("select", "select a bandwidth matrix by LSCV");
  sel->add_option("input", input, "CSV file, one observation per row")->required();
  sel->add_flag("--header", header, "skip the first row");
  sel->add_option("--output,-o", output, "write the report here instead of stdout");
  select_flags.add_to(sel, true);

  IseFlags ise_flags;
  SelectorFlags ise_sel;
  auto* ise = app.add_subcommand("ise-study", "ISE of selected bandwidths over replications");
  ise->add_option("--model", ise_flags.model, "built-in mixture")->capture_default_str();
  ise->add_option("--mixture", ise_flags.mixture_file, "mixture JSON file");
  ise->add_option("--n", ise_flags.ns, "sample sizes")->delimiter(',')->capture_default_str();
  ise->add_option("--grid", ise_flags.grids, "grid sizes")->delimiter(',')->capture_default_str();
  ise->add_option("--reps", ise_flags.reps, "replications per cell")->capture_default_str();
  ise->add_option("--seed", ise_flags.seed, "base seed")->capture_default_str();
  ise->add_option("--threshold", ise_flags.threshold, "ISE failure threshold")
    ->capture_default_str();
  ise->add_option("--threads", ise_flags.threads, "worker threads (default FASTBAND_THREADS or 1)");
  ise->add_option("--csv", ise_flags.csv_path, "also write per-replication ISE as CSV");
  ise->add_option("--output,-o", output, "write the report here instead of stdout");
  ise_sel.add_to(ise, false);

  BenchFlags bench_flags;
  auto* bch = app.add_subcommand("bench", "time the LSCV objective per mode, n and grid");
  bch->add_option("--model", bench_flags.model, "built-in mixture")->capture_default_str();
  bch->add_option("--mixture", bench_flags.mixture_file, "mixture JSON file");
  bch->add_option("--n", bench_flags.ns, "sample sizes")->delimiter(',')->capture_default_str();
  bch->add_option("--grid", bench_flags.grids, "grid sizes")->delimiter(',')->capture_default_str();
  bch->add_option("--modes", bench_flags.modes, "modes")->delimiter(',')->capture_default_str();
  bch->add_option("--reps", bench_flags.reps, "timed runs after one warmup")->capture_default_str();
  bch->add_option("--seed", bench_flags.seed, "base seed")->capture_default_str();
  bch->add_option("--tau", bench_flags.tau, "effective support factor")->capture_default_str();
  bch->add_option("--r", bench_flags.r, "derivative order")->capture_default_str();
  bch->add_option("--output,-o", output, "write the report here instead of stdout");

  QrFlags qr_flags;
  auto* qr = app.add_subcommand("qr-bench", "Q_r functional: FFT against the direct double sum");
  qr->add_option("--model", qr_flags.model, "built-in mixture")->capture_default_str();
  qr->add_option("--mixture", qr_flags.mixture_file, "mixture JSON file");
  qr->add_option("--n", qr_flags.ns, "sample sizes")->delimiter(',')->capture_default_str();
  qr->add_option("--r", qr_flags.orders, "orders")->delimiter(',')->capture_default_str();
  qr->add_option("--grid", qr_flags.grid, "grid size")->capture_default_str();
  qr->add_option("--reps", qr_flags.reps, "timed runs after one warmup")->capture_default_str();
  qr->add_option("--seed", qr_flags.seed, "base seed")->capture_default_str();
  qr->add_option("--mode", qr_flags.mode, "binned mode to compare")->capture_default_str();
  qr->add_option("--tau", qr_flags.tau, "effective support factor")->capture_default_str();
  qr->add_option("--sigma-scale", qr_flags.sigma_scale,
                 "Sigma as a multiple of the diagonal sample variance")
    ->capture_default_str();
  qr->add_option("--output,-o", output, "write the report here instead of stdout");

  DensityFlags density_flags;
  SelectorFlags density_sel;
  auto* den = app.add_subcommand("density", "kernel density estimate on a grid, as CSV");
  den->add_option("input", density_flags.input, "CSV file, one observation per row")->required();
  den->add_flag("--header", density_flags.header, "skip the first row");
  den->add_option("--H", density_flags.h, "bandwidth, d*d row-major entries")->delimiter(',');
  den->add_flag("--select", density_flags.select, "select the bandwidth by LSCV first");
  den->add_option("--grid", density_flags.grid, "output grid size, one value or one per axis")
    ->delimiter(',')
    ->capture_default_str();
  den->add_option("--extent", density_flags.margin, "extra range as a fraction of the data range")
    ->capture_default_str();
  den->add_option("--output,-o", density_flags.output, "CSV destination, - for stdout")
    ->capture_default_str();
  density_sel.add_to(den, false);
  den->add_option("--select-grid", density_sel.grid, "grid used by --select")
    ->delimiter(',')
    ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(out, err, "UsageError", e.what());
    return kExitInput;
  }

  try {
    if (sel->parsed()) {
      emit(cmd_select(input, header, select_flags), output, out);
    } else if (ise->parsed()) {
      emit(cmd_ise_study(ise_flags, ise_sel), output, out);
    } else if (bch->parsed()) {
      emit(cmd_bench(bench_flags), output, out);
    } else if (qr->parsed()) {
      emit(cmd_qr_bench(qr_flags), output, out);
    } else if (den->parsed()) {
      return cmd_density(density_flags, density_sel, out);
    }
  } catch (const Error& e) {
    report_error(out, err, std::string(to_string(e.kind())), e.what());
    return e.category() == ErrorCategory::Numerical ? kExitNumerical : kExitInput;
  } catch (const std::exception& e) {
    report_error(out, err, "InternalError", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}

} // namespace fastband::cli
