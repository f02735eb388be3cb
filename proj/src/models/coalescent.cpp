#include <algorithm>
#include <cmath>

#include "qlabc/error.hpp"
#include "qlabc/models.hpp"

namespace qlabc {

double simulate_tree_length(int n, RandomStream& rng) {
  if (n < 2) throw ConfigError("coalescent needs n >= 2");
  double t = 0.0;
  // j W_j ~ Exp(mean 2 / (j - 1)).
  for (int j = 2; j <= n; ++j) t += rng.exponential(2.0 / (j - 1));
  return t;
}

std::uint64_t simulate_segregating_sites(double theta, int n, RandomStream& rng) {
  const double t = simulate_tree_length(n, rng);
  return rng.poisson(std::exp(theta) * t / 2.0);
}

double simulate_coalescent(double theta, int n, RandomStream& rng) {
  return std::log(static_cast<double>(simulate_segregating_sites(theta, n, rng)) + 1.0);
}

CoalescentModel::CoalescentModel(int n) : n_(n) {
  if (n < 2) throw ConfigError("coalescent needs n >= 2");
}

Box CoalescentModel::box() const {
  return Box(RealVector::Constant(1, -8.0), RealVector::Constant(1, 4.0));
}

Prior CoalescentModel::prior() const { return Prior({Marginal::log_exponential(1.0)}); }

SimOutput CoalescentModel::simulate(const RealVector& theta, RandomStream& rng) const {
  if (theta.size() != 1) throw DimensionMismatch("coalescent takes one parameter");
  return {RealVector::Constant(1, simulate_coalescent(theta[0], n_, rng)), {}};
}

double coalescent_n2_likelihood(std::uint64_t s, double theta_prime) {
  const double sd = static_cast<double>(s);
  return std::exp(sd * std::log(theta_prime) - (sd + 1.0) * std::log1p(theta_prime));
}

GriddedDensity coalescent_parametric_posterior(std::uint64_t s_obs, int n, const Prior& prior,
                                               const std::vector<double>& theta_grid, int K,
                                               RandomStream& rng) {
  if (K < 1) throw ConfigError("parametric posterior needs K >= 1");
  if (theta_grid.size() < 2) throw ConfigError("parametric posterior needs a grid");
  std::vector<double> half_t(K);
  for (int k = 0; k < K; ++k) half_t[k] = simulate_tree_length(n, rng) / 2.0;

  const double s = static_cast<double>(s_obs);
  const double log_fact = std::lgamma(s + 1.0);
  GriddedDensity out;
  out.x = theta_grid;
  out.density.resize(theta_grid.size());
  for (std::size_t g = 0; g < theta_grid.size(); ++g) {
    const double rate = std::exp(theta_grid[g]);
    double lik = 0.0;
    for (double h : half_t) {
      const double mu = rate * h;
      lik += std::exp(s * std::log(mu) - mu - log_fact);
    }
    const double lp = prior.log_density(RealVector::Constant(1, theta_grid[g]));
    out.density[g] = std::isfinite(lp) ? std::exp(lp) * lik / K : 0.0;
  }
  const double z = out.integral();
  if (!(z > 0.0)) throw SimulationError("parametric posterior has zero mass on the grid");
  for (double& d : out.density) d /= z;
  return out;
}

double GriddedDensity::integral() const {
  double total = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    total += 0.5 * (density[i] + density[i - 1]) * (x[i] - x[i - 1]);
  return total;
}

double GriddedDensity::mean() const {
  double m = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    m += 0.5 * (density[i] * x[i] + density[i - 1] * x[i - 1]) * (x[i] - x[i - 1]);
  return m / integral();
}

double GriddedDensity::quantile(double p) const {
  const double total = integral();
  double acc = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = x[i] - x[i - 1];
    const double piece = 0.5 * (density[i] + density[i - 1]) * h / total;
    if (acc + piece >= p && piece > 0.0) {
      // Invert the trapezoid cdf on this cell: density is linear in x.
      const double d0 = density[i - 1] / total, d1 = density[i] / total;
      const double need = p - acc;
      const double slope = (d1 - d0) / h;
      double t;
      if (std::abs(slope) < 1e-14 * std::max(d0, d1)) {
        t = need / d0;
      } else {
        t = (-d0 + std::sqrt(std::max(0.0, d0 * d0 + 2.0 * slope * need))) / slope;
      }
      return x[i - 1] + std::clamp(t, 0.0, h);
    }
    acc += piece;
  }
  return x.back();
}

double GriddedDensity::mode() const {
  return x[std::max_element(density.begin(), density.end()) - density.begin()];
}

}  // namespace qlabc
