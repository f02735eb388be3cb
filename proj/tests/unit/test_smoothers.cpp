#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qlabc/error.hpp"
#include "qlabc/smoothers.hpp"

using namespace qlabc;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

RealMatrix lattice2(int m, double lo, double hi) {
  RealMatrix d(m * m, 2);
  const auto g = linspace(lo, hi, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      d(i * m + j, 0) = g[i];
      d(i * m + j, 1) = g[j];
    }
  return d;
}

}  // namespace

TEST_CASE("fit_spline on exactly linear data is exact") {
  const auto x = linspace(0, 1, 100);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2 * x[i] + 1;
  const SmoothingSpline s = fit_spline(x, y);
  for (double t : linspace(0, 1, 1001)) CHECK(std::abs(s.value(t) - (2 * t + 1)) < 1e-6);
  CHECK(std::abs(s.derivative(0.5) - 2.0) < 1e-6);
}

TEST_CASE("fit_spline recovers a noisy sine and its derivative") {
  RandomStream rng(3, 0);
  const auto x = linspace(0, 3, 500);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::sin(x[i]) + 0.01 * rng.normal();
  const SmoothingSpline s = fit_spline(x, y);
  double worst = 0;
  for (double t : linspace(0, 3, 3001)) worst = std::max(worst, std::abs(s.value(t) - std::sin(t)));
  CHECK(worst < 0.02);
  CHECK(std::abs(s.derivative(1.0) - std::cos(1.0)) < 0.05);
  CHECK(s.edf() > 2.0);
  CHECK(s.edf() < 500.0);
}

TEST_CASE("fit_spline on constant data") {
  const auto x = linspace(-1, 4, 30);
  const std::vector<double> y(x.size(), 3.25);
  const SmoothingSpline s = fit_spline(x, y);
  for (double t : linspace(-1, 4, 97)) {
    CHECK(s.value(t) == 3.25);
    CHECK(s.derivative(t) == 0.0);
  }
}

TEST_CASE("fit_spline errors") {
  CHECK_THROWS_AS(fit_spline(linspace(0, 1, 9), std::vector<double>(9, 1.0)), InsufficientData);
  CHECK_THROWS_AS(fit_spline(std::vector<double>(20, 1.0), linspace(0, 1, 20)), DegenerateDesign);
  const SmoothingSpline s = fit_spline(linspace(0, 1, 20), linspace(0, 1, 20));
  CHECK_THROWS_AS(s.value(1.5), OutOfDomain);
  CHECK_THROWS_AS(s.derivative(-0.5), OutOfDomain);
}

TEST_CASE("spline pieces join with continuous value, slope and curvature") {
  RandomStream rng(77, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + static_cast<int>(rng.index(200));
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) x[i] = 10.0 * rng.uniform();
    for (int i = 0; i < n; ++i) y[i] = std::sin(x[i]) + x[i] * 0.1 + 0.3 * rng.normal();
    const SmoothingSpline s = fit_spline(x, y);
    const auto& k = s.knots();
    const auto& c = s.coefficients();
    for (std::size_t i = 1; i + 1 < k.size(); ++i) {
      const double h = k[i] - k[i - 1];
      const auto& l = c[i - 1];
      const double left_v = l[0] + h * (l[1] + h * (l[2] + h * l[3]));
      const double left_d = l[1] + h * (2 * l[2] + 3 * h * l[3]);
      const double left_c = 2 * l[2] + 6 * h * l[3];
      CHECK(std::abs(left_v - c[i][0]) < 1e-10);
      CHECK(std::abs(left_d - c[i][1]) < 1e-10);
      CHECK(std::abs(left_c - 2 * c[i][2]) < 1e-8);
      CHECK(std::abs(s.value(k[i]) - left_v) < 1e-12 * std::max(1.0, std::abs(left_v)));
    }
  }
}

TEST_CASE("analytic spline derivative agrees with central differences") {
  RandomStream rng(9, 9);
  const auto x = linspace(-2, 2, 400);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(0.5 * x[i]) + 0.05 * rng.normal();
  const SmoothingSpline s = fit_spline(x, y);
  const double h = 1e-5;
  for (double t : linspace(-1.99, 1.99, 500)) {
    const double fd = (s.value(t + h) - s.value(t - h)) / (2 * h);
    CHECK(std::abs(fd - s.derivative(t)) < 1e-4);
  }
}

TEST_CASE("GCV-selected penalty does not depend on input order") {
  RandomStream rng(12, 0);
  std::vector<double> x(150), y(150);
  for (int i = 0; i < 150; ++i) {
    x[i] = std::floor(30.0 * rng.uniform()) / 3.0;  // with ties
    y[i] = std::cos(x[i]) + 0.2 * rng.normal();
  }
  const SmoothingSpline ref = fit_spline(x, y);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    std::vector<double> xs(x.size()), ys(y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      xs[i] = x[perm[i]];
      ys[i] = y[perm[i]];
    }
    CHECK(fit_spline(xs, ys).penalty() == ref.penalty());
  }
}

TEST_CASE("fit_additive") {
  const RealMatrix d = lattice2(30, -1, 2);
  SUBCASE("additive linear truth") {
    RealVector y = (3.0 + d.col(0).array() + 2.0 * d.col(1).array()).matrix();
    const AdditiveSurface a = fit_additive(d, y);
    CHECK(a.converged());
    double worst = 0;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      worst = std::max(worst, std::abs(a.value(d.row(i).transpose()) - y[i]));
    CHECK(worst < 1e-4);
    const RealVector g = a.gradient(d.row(17).transpose());
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(2.0).epsilon(1e-6));
  }
  SUBCASE("nonlinear truth with noise") {
    RandomStream rng(4, 4);
    RealVector y(d.rows()), truth(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      truth[i] = d(i, 0) * d(i, 0) + std::sin(d(i, 1));
      y[i] = truth[i] + 0.01 * rng.normal();
    }
    const AdditiveSurface a = fit_additive(d, y);
    double worst = 0;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      if (d(i, 0) <= -1 || d(i, 0) >= 2 || d(i, 1) <= -1 || d(i, 1) >= 2) continue;
      worst = std::max(worst, std::abs(a.value(d.row(i).transpose()) - truth[i]));
    }
    CHECK(worst < 0.05);
  }
  SUBCASE("noiseless additive data has R^2 above 0.999") {
    RealVector y(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) y[i] = std::exp(d(i, 0)) - std::cos(3 * d(i, 1));
    const AdditiveSurface a = fit_additive(d, y);
    double rss = 0;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      rss += std::pow(a.value(d.row(i).transpose()) - y[i], 2);
    const double tss = (y.array() - y.mean()).square().sum();
    CHECK(1.0 - rss / tss > 0.999);
  }
  SUBCASE("constant response") {
    const AdditiveSurface a = fit_additive(d, RealVector::Constant(d.rows(), -0.75));
    CHECK(a.intercept() == doctest::Approx(-0.75).epsilon(1e-15));
    for (const auto& c : a.components())
      for (double t : linspace(-1, 2, 11)) CHECK(std::abs(c.value(t)) < 1e-15);
  }
  SUBCASE("components are centered over the design") {
    RealVector y(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) y[i] = d(i, 0) * d(i, 0) * d(i, 0) + d(i, 1);
    const AdditiveSurface a = fit_additive(d, y);
    for (Eigen::Index j = 0; j < 2; ++j) {
      double mean = 0;
      for (Eigen::Index i = 0; i < d.rows(); ++i) mean += a.components()[j].value(d(i, j));
      CHECK(std::abs(mean / d.rows()) < 1e-10);
    }
  }
  SUBCASE("too few distinct values per column") {
    const RealMatrix small = lattice2(9, 0, 1);
    CHECK_THROWS_AS(fit_additive(small, RealVector::Zero(small.rows())), InsufficientData);
  }
}

TEST_CASE("fit_variance") {
  SUBCASE("constant kind is the mean square") {
    RealMatrix d(50, 1);
    d.col(0) = Eigen::VectorXd::LinSpaced(50, 0, 1);
    const VarianceSurface v = fit_variance(d, RealVector::Constant(50, 2.0), VarianceKind::constant);
    CHECK(v.value(RealVector::Constant(1, 0.3)) == doctest::Approx(4.0));
  }
  SUBCASE("exact-zero residuals hit the floor") {
    RealMatrix d(50, 1);
    d.col(0) = Eigen::VectorXd::LinSpaced(50, 0, 1);
    const VarianceSurface v = fit_variance(d, RealVector::Zero(50), VarianceKind::smooth);
    const double at = v.value(RealVector::Constant(1, 0.5));
    CHECK(at > 0.0);
    CHECK(at == doctest::Approx(VarianceSurface::kFloor).epsilon(1e-6));
  }
  SUBCASE("heteroskedastic residuals, uncorrected log-chi-square bias") {
    // log e^2 = log sigma^2(theta) + log chi2_1 and E[log chi2_1] = digamma(1/2) + log 2,
    // so the exponentiated fit estimates exp(-1.2704) * sigma^2(theta).
    const double log_chi2_mean = -0.5772156649015329 - 2.0 * std::log(2.0) + std::log(2.0);
    RandomStream rng(21, 0);
    const int n = 10000;
    RealMatrix d(n, 1);
    RealVector e(n);
    for (int i = 0; i < n; ++i) {
      d(i, 0) = -2.0 + 4.0 * rng.uniform();
      e[i] = std::exp(d(i, 0) / 2) * rng.normal();
    }
    const VarianceSurface v = fit_variance(d, e, VarianceKind::smooth);
    const double fitted = v.value(RealVector::Zero(1));
    const double oracle = std::exp(log_chi2_mean);
    CHECK(std::abs(fitted - oracle) < 0.35 * oracle);
    // Shape: variance ratio over [-2, 2] should be close to e^4.
    const double ratio = v.value(RealVector::Constant(1, 1.5)) / v.value(RealVector::Constant(1, -1.5));
    CHECK(std::abs(std::log(ratio) - 3.0) < 0.5);
    for (double t : linspace(-1.99, 1.99, 2001)) CHECK(v.value(RealVector::Constant(1, t)) > 0.0);
  }
  SUBCASE("smooth additive variance is positive on a dense grid") {
    const RealMatrix d = lattice2(20, 0, 1);
    RandomStream rng(6, 6);
    RealVector e(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) e[i] = (0.1 + d(i, 0)) * rng.normal() * 1e-3;
    const VarianceSurface v = fit_variance(d, e, VarianceKind::smooth);
    for (double a : linspace(0, 1, 60))
      for (double b : linspace(0, 1, 60)) {
        RealVector t(2);
        t << a, b;
        CHECK(v.value(t) > 0.0);
      }
  }
}
