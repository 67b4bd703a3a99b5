#include "fastband/mixtures.hpp"

#include "fastband/error.hpp"
#include "fastband/gaussian_deriv.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fastband {

namespace {

using Json = nlohmann::json;

/// log of the N(0, sigma) density at x, sigma given by its Cholesky factor.
double log_normal_pdf(const Vector& x, const Matrix& chol, double log_det)
{
  const Vector z = chol.triangularView<Eigen::Lower>().solve(x);
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) -
         0.5 * log_det - 0.5 * z.squaredNorm();
}

double pdf_with_cov(const Vector& x, const Matrix& cov)
{
  const BandwidthMatrix sigma(cov);
  return std::exp(log_normal_pdf(x, sigma.chol(), sigma.log_det()));
}

Vector vector_from_json(const Json& j)
{
  if (!j.is_array() || j.empty())
    throw Error(ErrorKind::ParseError, "expected a non-empty numeric array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw Error(ErrorKind::ParseError, "expected a number");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const Json& j)
{
  if (!j.is_array() || j.empty())
    throw Error(ErrorKind::ParseError, "expected a non-empty array of rows");
  const Index rows = static_cast<Index>(j.size());
  Matrix m(rows, rows);
  for (Index i = 0; i < rows; ++i) {
    const Vector row = vector_from_json(j[i]);
    if (row.size() != rows)
      throw Error(ErrorKind::ParseError, "covariance matrices must be square");
    m.row(i) = row.transpose();
  }
  return m;
}

NormalMixture make_mixture(std::vector<double> weights, std::vector<Vector> means,
                           std::vector<Matrix> covs)
{
  std::vector<MixtureComponent> comps;
  for (std::size_t q = 0; q < weights.size(); ++q)
    comps.push_back({weights[q], std::move(means[q]), BandwidthMatrix(covs[q])});
  return NormalMixture(std::move(comps));
}

Matrix diag2(double a, double b)
{
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

Matrix cov2(double s1, double s2, double rho)
{
  Matrix m(2, 2);
  m << s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2;
  return m;
}

Vector vec2(double a, double b)
{
  Vector v(2);
  v << a, b;
  return v;
}

} // namespace

double Rng::uniform()
{
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index)
{
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NormalMixture::NormalMixture(std::vector<MixtureComponent> components)
  : components_(std::move(components))
{
  if (components_.empty())
    throw Error(ErrorKind::InvalidArgument, "a mixture needs at least one component");
  const Index d = components_.front().mean.size();
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw Error(ErrorKind::InvalidArgument, "mixture weights must be positive");
    if (c.mean.size() != d || c.cov.dim() != d)
      throw Error(ErrorKind::ShapeMismatch, "mixture components differ in dimension");
    if (!c.mean.allFinite())
      throw Error(ErrorKind::InvalidArgument, "mixture means must be finite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorKind::InvalidArgument, "mixture weights must sum to 1");
}

double mixture_pdf(const NormalMixture& mix, const Vector& x)
{
  if (x.size() != mix.dim())
    throw Error(ErrorKind::ShapeMismatch, "point and mixture dimensions differ");
  double f = 0.0;
  for (const auto& c : mix.components())
    f += c.weight * normal_pdf(x - c.mean, c.cov);
  return f;
}

Sample sample_mixture(const NormalMixture& mix, Index n, std::uint64_t seed)
{
  if (n < 1)
    throw Error(ErrorKind::InvalidArgument, "sample size must be positive");
  const auto& comps = mix.components();
  const Index d = mix.dim();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : comps)
    cumulative.push_back(acc += c.weight);

  Rng rng(seed);
  Matrix rows(n, d);
  Vector z(d);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    std::size_t q = 0;
    while (q + 1 < comps.size() && u >= cumulative[q])
      ++q;
    for (Index k = 0; k < d; ++k)
      z(k) = rng.normal();
    rows.row(i) = (comps[q].mean + comps[q].cov.chol() * z).transpose();
  }
  return Sample(std::move(rows));
}

double exact_ise(const Sample& sample, const BandwidthMatrix& h, const NormalMixture& mix)
{
  const Index n = sample.size(), d = sample.dim();
  if (h.dim() != d || mix.dim() != d)
    throw Error(ErrorKind::ShapeMismatch, "sample, bandwidth and mixture dimensions differ");
  const auto& comps = mix.components();
  const double nn = static_cast<double>(n);

  // n^{-2} sum_ij phi_{2H}(X_i - X_j)
  const BandwidthMatrix h2 = h.scaled(2.0);
  const Matrix& l2 = h2.chol();
  double kk = nn * std::exp(log_normal_pdf(Vector::Zero(d), l2, h2.log_det()));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Vector diff = (sample.rows().row(i) - sample.rows().row(j)).transpose();
      kk += 2.0 * std::exp(log_normal_pdf(diff, l2, h2.log_det()));
    }
  }
  kk /= nn * nn;

  // -2 n^{-1} sum_i sum_q w_q phi_{H + Sigma_q}(X_i - mu_q)
  double kf = 0.0;
  for (const auto& c : comps) {
    const BandwidthMatrix s(h.entries() + c.cov.entries());
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Vector diff = sample.row(i) - c.mean;
      acc += std::exp(log_normal_pdf(diff, s.chol(), s.log_det()));
    }
    kf += c.weight * acc;
  }
  kf *= -2.0 / nn;

  // sum_q sum_q' w_q w_q' phi_{Sigma_q + Sigma_q'}(mu_q - mu_q')
  double ff = 0.0;
  for (const auto& a : comps) {
    for (const auto& b : comps)
      ff += a.weight * b.weight *
            pdf_with_cov(a.mean - b.mean, a.cov.entries() + b.cov.entries());
  }
  return kk + kf + ff;
}

std::vector<std::string> mixture_catalog_names()
{
  return {"standard", "correlated", "bimodal", "asymmetric_bimodal", "trimodal", "fragile"};
}

NormalMixture mixture_catalog(std::string_view name)
{
  if (name == "standard")
    return make_mixture({1.0}, {vec2(0, 0)}, {diag2(1, 1)});
  if (name == "correlated")
    return make_mixture({1.0}, {vec2(0, 0)}, {cov2(1.0, 1.0, 0.7)});
  if (name == "bimodal") {
    return make_mixture({0.5, 0.5}, {vec2(-1.5, 0), vec2(1.5, 0)},
                        {diag2(0.25, 1.0), diag2(0.25, 1.0)});
  }
  if (name == "asymmetric_bimodal") {
    return make_mixture({0.75, 0.25}, {vec2(0, 0), vec2(1.5, 1.5)},
                        {cov2(1.0, 1.0, 0.3), diag2(1.0 / 9.0, 1.0 / 9.0)});
  }
  if (name == "trimodal") {
    const double w = 1.0 / 3.0;
    return make_mixture({w, w, 1.0 - 2.0 * w},
                        {vec2(-1.2, -0.7), vec2(1.2, -0.7), vec2(0.0, 1.4)},
                        {cov2(0.6, 0.6, 0.3), cov2(0.6, 0.6, -0.3), diag2(0.36, 0.36)});
  }
  if (name == "fragile") {
    // Broad component plus a light, very concentrated one whose covariance
    // is the broad one scaled by 1e-3.
    return make_mixture({0.9, 0.1}, {vec2(0, 0), vec2(0.5, 0.5)},
                        {diag2(1, 1), diag2(1e-3, 1e-3)});
  }
  throw Error(ErrorKind::UnknownModel, "unknown mixture model '" + std::string(name) + "'");
}

NormalMixture mixture_from_json(std::string_view text)
{
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("invalid mixture JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("weights") || !j.contains("means") || !j.contains("covs"))
    throw Error(ErrorKind::ParseError, "mixture JSON needs weights, means and covs");
  const Vector w = vector_from_json(j["weights"]);
  const Json& means = j["means"];
  const Json& covs = j["covs"];
  if (!means.is_array() || !covs.is_array() ||
      means.size() != static_cast<std::size_t>(w.size()) ||
      covs.size() != static_cast<std::size_t>(w.size()))
    throw Error(ErrorKind::ParseError, "weights, means and covs must have equal lengths");
  std::vector<double> weights(w.data(), w.data() + w.size());
  std::vector<Vector> mu;
  std::vector<Matrix> sigma;
  for (std::size_t q = 0; q < weights.size(); ++q) {
    mu.push_back(vector_from_json(means[q]));
    sigma.push_back(matrix_from_json(covs[q]));
  }
  return make_mixture(std::move(weights), std::move(mu), std::move(sigma));
}

std::string mixture_to_json(const NormalMixture& mix)
{
  Json j;
  j["weights"] = Json::array();
  j["means"] = Json::array();
  j["covs"] = Json::array();
  for (const auto& c : mix.components()) {
    j["weights"].push_back(c.weight);
    j["means"].push_back(std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size()));
    Json rows = Json::array();
    for (Index i = 0; i < c.cov.dim(); ++i) {
      std::vector<double> row(c.cov.dim());
      for (Index k = 0; k < c.cov.dim(); ++k)
        row[k] = c.cov(i, k);
      rows.push_back(row);
    }
    j["covs"].push_back(rows);
  }
  return j.dump(2);
}

NormalMixture load_mixture(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::InvalidArgument, "cannot open mixture file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return mixture_from_json(buf.str());
}

} // namespace fastband
