#pragma once

#include "fastband/functionals.hpp"
#include "fastband/mixtures.hpp"
#include "fastband/selector.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fastband {

inline constexpr int kReportVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct ReportTimings
{
  double binning_ms = 0.0;
  std::int64_t objective_evals = 0;
  double total_ms = 0.0;
};

/// Machine-readable record of one command run.
struct RunReport
{
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  ReportTimings timings;
  std::optional<std::uint64_t> seed;
  std::string version = kVersion;

  nlohmann::json to_json() const;
  /// Throws ParseError on a missing field or an unsupported report_version.
  static RunReport from_json(const nlohmann::json& j);

  bool operator==(const RunReport& other) const;
};

nlohmann::json to_json(const SelectorConfig& cfg);
nlohmann::json to_json(const BandwidthMatrix& h);
nlohmann::json to_json(const SelectionResult& result);

/// Worker count: `requested` if positive, else FASTBAND_THREADS, else 1.
int resolve_threads(int requested);

/// Runs task(i) for i in [0, count) on `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task);

struct IseStudyConfig
{
  std::vector<Index> sample_sizes{256};
  std::vector<Index> grid_sizes{20, 150};
  int reps = 50;
  std::uint64_t seed = 1;
  double failure_threshold = 1.0;
  int threads = 0;
  SelectorConfig selector;
};

struct IseCell
{
  Index n = 0;
  Index grid = 0;
  /// One entry per replication; NaN when the selection itself failed.
  std::vector<double> ise;
  std::vector<Matrix> bandwidths;
  double median = 0.0;
  /// Replications with ISE above the threshold or a failed selection.
  int failures = 0;
  int not_converged = 0;
};

/// For every (n, grid) cell and replication: draw a sample, select H, compute
/// the exact ISE. Replication k at size n uses the same sample for every grid.
std::vector<IseCell> ise_study(const NormalMixture& mix, const IseStudyConfig& cfg);

/// Seed of replication `rep` at sample size n.
std::uint64_t replication_seed(std::uint64_t base, Index n, int rep);

struct BenchConfig
{
  std::vector<Index> sample_sizes{400, 4000};
  std::vector<Index> grid_sizes{180};
  std::vector<Mode> modes{Mode::DirectExact, Mode::FftM, Mode::FftL};
  int reps = 5;
  std::uint64_t seed = 1;
  int r = 0;
  double tau = 3.7;
  double margin_fraction = 0.05;
};

struct BenchCell
{
  Mode mode = Mode::FftL;
  Index n = 0;
  Index grid = 0;
  /// Mean over reps (one warmup run discarded) of binning plus one objective
  /// evaluation at the normal-scale bandwidth.
  double mean_ms = 0.0;
  /// Mean binning time alone; zero for direct-exact.
  double binning_ms = 0.0;
  double objective = 0.0;
};

/// Times the LSCV objective per (mode, n, grid) on samples from `mix`.
/// direct-exact ignores the grid and is reported once per n with grid 0.
std::vector<BenchCell> bench(const NormalMixture& mix, const BenchConfig& cfg);

/// Mean time to bin n points onto a grid, one warmup discarded.
double time_binning(const Sample& sample, const Shape& sizes, int reps);

struct QrBenchConfig
{
  std::vector<Index> sample_sizes{100, 1000};
  std::vector<int> orders{0, 2, 4};
  Index grid = 100;
  int reps = 3;
  std::uint64_t seed = 1;
  Mode fft_mode = Mode::FftM;
  double tau = 3.7;
  /// Sigma is this factor times the diagonal sample variance.
  double sigma_scale = 1.0;
  double margin_fraction = 0.05;
};

struct QrCell
{
  Index n = 0;
  int r = 0;
  double direct_ms = 0.0;
  double fft_ms = 0.0;
  double direct_value = 0.0;
  double fft_value = 0.0;
  double rel_diff = 0.0;
};

std::vector<QrCell> qr_bench(const NormalMixture& mix, const QrBenchConfig& cfg);

/// Mean wall time of fn() in milliseconds over reps runs after one warmup.
double mean_time_ms(const std::function<void()>& fn, int reps);

} // namespace fastband
