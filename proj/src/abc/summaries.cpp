#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "qlabc/abc.hpp"
#include "qlabc/error.hpp"

namespace qlabc {

double log_bayes_factor(const RealMatrix& states, Eigen::Index j, double burn_in) {
  if (states.rows() == 0) throw ConfigError("Bayes factor needs a non-empty chain");
  if (j < 0 || j >= states.cols()) throw DimensionMismatch("Bayes factor coordinate out of range");
  const auto start = static_cast<Eigen::Index>(std::floor(burn_in * static_cast<double>(states.rows())));
  double pos = 0.0, neg = 0.0;
  for (Eigen::Index t = start; t < states.rows(); ++t) {
    pos += states(t, j) > 0.0;
    neg += states(t, j) < 0.0;
  }
  if (pos == 0.0 && neg == 0.0) return 0.0;
  return std::log(pos) - std::log(neg);
}

double log_bayes_factor(const ChainOutput& chain, Eigen::Index j, double burn_in) {
  return log_bayes_factor(chain.states, j, burn_in);
}

double verify_proposition1(const SurrogateModel& m, double s_obs, const std::vector<double>& grid, int panels,
                           double sigma2_scale) {
  if (m.dim() != 1 || m.variance_kind() != VarianceKind::constant)
    throw ConfigError("Proposition 1 check needs a scalar constant-variance surrogate");
  if (grid.empty()) throw ConfigError("Proposition 1 check needs a grid");
  if (panels < 2 || panels % 2 != 0) throw ConfigError("Simpson rule needs an even number of panels");
  if (!(sigma2_scale > 0.0)) throw ConfigError("variance scale must be positive");
  const SmoothingSpline& f = m.scalar_forward();
  const double sigma2 = m.variance_surfaces().front().constant_value() * sigma2_scale;
  for (double x : grid)
    if (!f.in_domain(x)) throw OutOfDomain("Proposition 1 grid point outside the pilot box");

  auto integrand = [&](double t) { return f.derivative(t) / sigma2 * (s_obs - f.value(t)); };
  auto kernel = [&](double t) {
    const double r = f.value(t) - s_obs;
    return -r * r / (2.0 * sigma2);
  };
  const double c0 = *std::min_element(grid.begin(), grid.end());
  const double k0 = kernel(c0);
  double worst = 0.0;
  for (double theta : grid) {
    const double h = (theta - c0) / panels;
    double integral = 0.0;
    if (h > 0.0) {
      double acc = integrand(c0) + integrand(theta);
      for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * integrand(c0 + i * h);
      integral = acc * h / 3.0;
    }
    worst = std::max(worst, std::abs(integral - (kernel(theta) - k0)));
  }
  return worst;
}

double sample_quantile(std::vector<double> x, double p) {
  if (x.empty()) throw InsufficientData("quantile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(lo), x.end());
  const double a = x[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(hi), x.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

namespace {

// Autocovariances for lags 0..n-1 (biased, divided by n) by FFT.
std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> padded(len, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& c : spec) c = std::norm(c);
  std::vector<double> acov;
  fft.inv(acov, spec);
  acov.resize(n);
  for (double& a : acov) a /= static_cast<double>(n);
  return acov;
}

}  // namespace

double autocorrelation(const std::vector<double>& x, std::size_t lag) {
  if (x.size() < 2 || lag >= x.size()) return 0.0;
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) den += (x[i] - mean) * (x[i] - mean);
  if (den == 0.0) return 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) num += (x[i] - mean) * (x[i + lag] - mean);
  return num / den;
}

double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(std::max<std::size_t>(n, 1));
  const std::vector<double> g = autocovariance(x);
  if (!(g[0] > 1e-300)) return 1.0;
  // Initial monotone positive sequence of paired autocorrelations.
  double sum = 0.0;
  double prev = kInfinity;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = (g[2 * m] + g[2 * m + 1]) / g[0];
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    sum += pair;
    prev = pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(n)));
  return std::max(1.0, static_cast<double>(n) / tau);
}

ChainSummary diagnostics(const RealMatrix& states, double acceptance_rate, double burn_in) {
  if (states.rows() == 0) throw ConfigError("diagnostics need a non-empty chain");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ConfigError("burn-in fraction must lie in [0, 1)");
  ChainSummary s;
  s.total_states = static_cast<std::size_t>(states.rows());
  const auto start = static_cast<Eigen::Index>(std::floor(burn_in * static_cast<double>(states.rows())));
  s.kept_states = static_cast<std::size_t>(states.rows() - start);
  s.acceptance_rate = acceptance_rate;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    std::vector<double> x(states.col(j).data() + start, states.col(j).data() + states.rows());
    CoordinateSummary c;
    const double n = static_cast<double>(x.size());
    c.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - c.mean) * (v - c.mean);
    c.sd = x.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    c.q025 = sample_quantile(x, 0.025);
    c.q50 = sample_quantile(x, 0.5);
    c.q975 = sample_quantile(x, 0.975);
    c.lag1 = autocorrelation(x, 1);
    c.ess = effective_sample_size(x);
    c.mean_se = c.sd / std::sqrt(c.ess);
    s.coords.push_back(c);
  }
  return s;
}

ChainSummary diagnostics(const ChainOutput& chain, double burn_in) {
  return diagnostics(chain.states, chain.acceptance_rate, burn_in);
}

double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw InsufficientData("KS statistic of an empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace qlabc
