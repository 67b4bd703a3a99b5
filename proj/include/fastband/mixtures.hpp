#pragma once

#include "fastband/grid.hpp"
#include "fastband/linalg.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fastband {

/// Seeded generator: std::mt19937_64 with uniform and normal draws built on
/// top of its raw 64-bit output, so streams are identical on every platform.
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Marsaglia polar method).
  double normal();

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Seed for stream `index` derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct MixtureComponent
{
  double weight;
  Vector mean;
  BandwidthMatrix cov;
};

class NormalMixture
{
public:
  /// Throws InvalidArgument unless weights are positive and sum to 1 within
  /// 1e-12 and every mean and covariance has the same dimension.
  explicit NormalMixture(std::vector<MixtureComponent> components);

  const std::vector<MixtureComponent>& components() const { return components_; }
  Index dim() const { return components_.front().mean.size(); }

private:
  std::vector<MixtureComponent> components_;
};

double mixture_pdf(const NormalMixture& mix, const Vector& x);

/// n draws: component q with probability w_q, then mu_q + L_q z.
Sample sample_mixture(const NormalMixture& mix, Index n, std::uint64_t seed);

/// Integrated squared error of the Gaussian KDE with bandwidth H built on
/// `sample`, against the mixture density, in closed form.
double exact_ise(const Sample& sample, const BandwidthMatrix& h, const NormalMixture& mix);

/// Built-in bivariate models: "standard", "correlated", "bimodal",
/// "asymmetric_bimodal", "trimodal", "fragile". Throws UnknownModel.
NormalMixture mixture_catalog(std::string_view name);
std::vector<std::string> mixture_catalog_names();

/// JSON with fields weights[], means[][], covs[][][].
NormalMixture mixture_from_json(std::string_view text);
std::string mixture_to_json(const NormalMixture& mix);
NormalMixture load_mixture(const std::string& path);

} // namespace fastband
