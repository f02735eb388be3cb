#include <algorithm>
#include <cmath>

#include "qlabc/error.hpp"
#include "qlabc/models.hpp"

namespace qlabc {

RealVector gamma_statistics(const std::vector<double>& sample) {
  const std::size_t n = sample.size();
  if (n < 2) throw ConfigError("gamma statistics need n >= 2");
  double mean = 0.0;
  for (double y : sample) mean += y;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double y : sample) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(mean > 0.0) || !(sd > 0.0)) throw DegenerateSample("gamma sample has zero mean or spread");
  RealVector s(2);
  s << std::log(mean), std::log(sd);
  return s;
}

RealVector simulate_gamma(const RealVector& theta, int n, RandomStream& rng) {
  if (theta.size() != 2) throw DimensionMismatch("gamma model takes two parameters");
  const double shape = std::exp(theta[0]), scale = std::exp(-theta[1]);
  std::vector<double> y(n);
  for (double& v : y) v = rng.gamma(shape, scale);
  return gamma_statistics(y);
}

GammaModel::GammaModel(int n) : n_(n) {
  if (n < 2) throw ConfigError("gamma model needs n >= 2");
}

Box GammaModel::box() const {
  return Box(RealVector::Constant(2, -2.0), RealVector::Constant(2, 2.0));
}

Prior GammaModel::prior() const {
  return Prior({Marginal::normal(0.0, 1.0), Marginal::normal(0.0, 1.0)});
}

SimOutput GammaModel::simulate(const RealVector& theta, RandomStream& rng) const {
  return {simulate_gamma(theta, n_, rng), {}};
}

double gk_transform(const RealVector& theta, double z) {
  // (1 - e^{-x}) / (1 + e^{-x}) = tanh(x / 2).
  const double skew = 1.0 + 0.8 * std::tanh(0.5 * theta[2] * z);
  return theta[0] + std::exp(theta[1]) * skew * std::pow(1.0 + z * z, std::exp(theta[3]) - 0.5);
}

std::vector<double> gk_sample(const RealVector& theta, int n, RandomStream& rng) {
  if (theta.size() != 4) throw DimensionMismatch("g-and-k takes four parameters");
  std::vector<double> y(n);
  for (double& v : y) v = gk_transform(theta, rng.normal());
  return y;
}

double empirical_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

RealVector gk_statistics(std::vector<double>& sample) {
  if (sample.size() < 40) throw ConfigError("g-and-k statistics need at least 40 values");
  std::sort(sample.begin(), sample.end());
  const double q025 = empirical_quantile(sample, 0.025);
  const double q25 = empirical_quantile(sample, 0.25);
  const double q50 = empirical_quantile(sample, 0.5);
  const double q75 = empirical_quantile(sample, 0.75);
  const double q975 = empirical_quantile(sample, 0.975);
  const double iqr = q75 - q25;
  if (!(iqr > 0.0)) throw DegenerateSample("g-and-k sample has zero interquartile range");
  RealVector s(4);
  s << q50, std::log(iqr), (q75 + q25 - 2.0 * q50) / iqr, std::log(q975 - q025);
  return s;
}

GkModel::GkModel(int n) : n_(n) {
  if (n < 40) throw ConfigError("g-and-k model needs n >= 40");
}

Box GkModel::box() const {
  RealVector lo(4), hi(4);
  lo << 0.0, -std::log(10.0), 0.0, -std::log(10.0);
  hi << 10.0, std::log(10.0), 10.0, std::log(10.0);
  return Box(lo, hi);
}

Prior GkModel::prior() const {
  const Box b = box();
  std::vector<Marginal> m;
  for (Eigen::Index j = 0; j < 4; ++j) m.push_back(Marginal::uniform(b.lo[j], b.hi[j]));
  return Prior(std::move(m));
}

SimOutput GkModel::simulate(const RealVector& theta, RandomStream& rng) const {
  auto y = gk_sample(theta, n_, rng);
  return {gk_statistics(y), {}};
}

}  // namespace qlabc
