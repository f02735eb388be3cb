#include <doctest.h>

#include <cmath>

#include "qlabc/error.hpp"
#include "qlabc/numerics.hpp"

using namespace qlabc;

namespace {

RealMatrix random_matrix(Eigen::Index r, Eigen::Index c, RandomStream& rng) {
  RealMatrix a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = rng.normal();
  return a;
}

RealVector vec(std::initializer_list<double> v) {
  RealVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("philox stream matches the published known-answer block") {
  // Philox4x32-10 with zero key and zero counter.
  RandomStream rng(0, 0);
  const auto a = rng();
  const auto b = rng();
  CHECK(a == ((std::uint64_t{0x6627e8d5} << 32) | 0xe169c58d));
  CHECK(b == ((std::uint64_t{0xbc57ac4c} << 32) | 0x9b00dbd8));
}

TEST_CASE("identical seed and stream reproduce the variate sequence") {
  RandomStream a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.normal(), y = b.normal(), z = c.normal();
    CHECK(x == y);
    differs = differs || (x != z);
  }
  CHECK(differs);
  RandomStream d(1, 2), e(1, 2);
  for (int i = 0; i < 200; ++i) {
    CHECK(d.gamma(0.7, 2.0) == e.gamma(0.7, 2.0));
    CHECK(d.poisson(35.0) == e.poisson(35.0));
  }
}

TEST_CASE("cholesky_factor") {
  SUBCASE("identity") {
    CHECK(cholesky_factor(RealMatrix::Identity(2, 2)).isApprox(RealMatrix::Identity(2, 2)));
  }
  SUBCASE("diagonal square roots") {
    RealMatrix m(2, 2);
    m << 4, 0, 0, 9;
    RealMatrix expected(2, 2);
    expected << 2, 0, 0, 3;
    CHECK((cholesky_factor(m) - expected).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("random SPD reconstruction property") {
    RandomStream rng(2024, 1);
    for (int trial = 0; trial < 200; ++trial) {
      const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.index(6));
      const RealMatrix a = random_matrix(n + 2, n, rng);
      const RealMatrix m = a.transpose() * a;
      const RealMatrix l = cholesky_factor(m);
      CHECK((l * l.transpose() - m).cwiseAbs().maxCoeff() <= 1e-8 * m.cwiseAbs().maxCoeff());
      CHECK(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero());
    }
  }
  SUBCASE("singular and indefinite matrices are rejected") {
    RealMatrix m(2, 2);
    m << 1, 1, 1, 1;
    CHECK_THROWS_AS(cholesky_factor(m), NotPositiveDefinite);
    m << 1, 2, 2, 1;
    CHECK_THROWS_AS(cholesky_factor(m), NotPositiveDefinite);
  }
}

TEST_CASE("sample_mvn") {
  RandomStream rng(11, 0);
  SUBCASE("zero variance") {
    const RealVector x = sample_mvn(vec({0.0}), RealMatrix::Zero(1, 1), rng);
    CHECK(x[0] == 0.0);
  }
  SUBCASE("scalar mean") {
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += sample_mvn(vec({5.0}), RealMatrix::Identity(1, 1), rng)[0];
    CHECK(std::abs(sum / n - 5.0) < 0.02);
  }
  SUBCASE("correlation") {
    RealMatrix cov(2, 2);
    cov << 1, 0.5, 0.5, 1;
    const RealMatrix l = cholesky_factor(cov);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const RealVector v = sample_mvn(vec({0, 0}), l, rng);
      sx += v[0]; sy += v[1];
      sxx += v[0] * v[0]; syy += v[1] * v[1]; sxy += v[0] * v[1];
    }
    const double cxy = sxy / n - sx / n * sy / n;
    const double r = cxy / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
    CHECK(std::abs(r - 0.5) < 0.02);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(sample_mvn(vec({0, 0}), RealMatrix::Identity(1, 1), rng), DimensionMismatch);
  }
}

TEST_CASE("mvn_logpdf at the mean of a standard normal") {
  CHECK(mvn_logpdf(vec({0.0}), vec({0.0}), RealMatrix::Identity(1, 1)) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
}

TEST_CASE("richardson_jacobian") {
  SUBCASE("identity map") {
    auto f = [](const RealVector& x) { return x; };
    const RealMatrix j = richardson_jacobian(f, vec({0.3, -7.0}));
    CHECK((j - RealMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("analytic quadratic") {
    auto f = [](const RealVector& x) { return vec({x[0] * x[0], x[0] * x[1]}); };
    RealMatrix expected(2, 2);
    expected << 2, 0, 2, 1;
    CHECK((richardson_jacobian(f, vec({1, 2})) - expected).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("exact on random cubic polynomials") {
    RandomStream rng(5, 5);
    for (int trial = 0; trial < 100; ++trial) {
      // f_i(x) = sum_j a_ij x_j^3 + b_ij x_j^2 x_{(j+1)%p} + c_i
      const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.index(4));
      const RealMatrix a = random_matrix(p, p, rng), b = random_matrix(p, p, rng);
      auto f = [&](const RealVector& x) {
        RealVector out = RealVector::Constant(p, 1.0);
        for (Eigen::Index i = 0; i < p; ++i)
          for (Eigen::Index j = 0; j < p; ++j)
            out[i] += a(i, j) * std::pow(x[j], 3) + b(i, j) * x[j] * x[j] * x[(j + 1) % p];
        return out;
      };
      RealVector x(p);
      for (Eigen::Index j = 0; j < p; ++j) x[j] = 2.0 * rng.normal();
      RealMatrix exact = RealMatrix::Zero(p, p);
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) {
          exact(i, j) += 3 * a(i, j) * x[j] * x[j] + 2 * b(i, j) * x[j] * x[(j + 1) % p];
          const Eigen::Index prev = (j + p - 1) % p;
          exact(i, j) += b(i, prev) * x[prev] * x[prev];
        }
      CHECK((richardson_jacobian(f, x) - exact).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, exact.cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("stencil leaving the domain") {
    auto f = [](const RealVector& x) { return x; };
    const Box box(vec({0.0}), vec({1.0}));
    CHECK_THROWS_AS(richardson_jacobian(f, vec({0.0}), 1e-3, &box), DomainViolation);
    CHECK_NOTHROW(richardson_jacobian(f, vec({0.5}), 1e-3, &box));
  }
}

TEST_CASE("solve_nonlinear") {
  SUBCASE("identity") {
    auto f = [](const RealVector& x) { return x; };
    const Box box(vec({-5, -5}), vec({5, 5}));
    const RealVector x = solve_nonlinear(f, vec({1.5, -2.0}), vec({0, 0}), box);
    CHECK((x - vec({1.5, -2.0})).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("cubic root with bracket") {
    auto f = [](const RealVector& x) { return vec({x[0] * x[0] * x[0]}); };
    const Box box(vec({0.0}), vec({3.0}));
    const RealVector x = solve_nonlinear(f, vec({8.0}), vec({0.0}), box);
    CHECK(std::abs(x[0] - 2.0) < 1e-8);
  }
  SUBCASE("flat start falls back to bisection") {
    // Newton cannot move from x0 = 0 where the derivative vanishes.
    auto f = [](const RealVector& x) { return vec({std::pow(x[0], 3)}); };
    const Box box(vec({-1.0}), vec({2.0}));
    const RealVector x = solve_nonlinear(f, vec({1.0}), vec({0.0}), box);
    CHECK(std::abs(x[0] - 1.0) < 1e-8);
  }
  SUBCASE("unreachable target reports the best iterate") {
    auto f = [](const RealVector& x) { return vec({std::tanh(x[0])}); };
    const Box box(vec({-2.0}), vec({2.0}));
    try {
      solve_nonlinear(f, vec({3.0}), vec({0.0}), box);
      FAIL("expected NonConverged");
    } catch (const NonConverged& e) {
      CHECK(e.best()[0] == doctest::Approx(2.0));
      CHECK(e.residual() == doctest::Approx(3.0 - std::tanh(2.0)));
    }
  }
  SUBCASE("round trip on monotone maps") {
    RandomStream rng(8, 3);
    for (int trial = 0; trial < 100; ++trial) {
      const double a = 0.2 + rng.uniform(), b = rng.normal();
      // Monotone coordinate-wise map with coupling through a rotation-free shear.
      auto f = [&](const RealVector& x) {
        return vec({a * x[0] + std::sinh(0.5 * x[0]) + b, x[1] + 0.3 * std::tanh(x[0]) + x[1] * x[1] * x[1] * 0.1});
      };
      const Box box(vec({-3, -3}), vec({3, 3}));
      RealVector truth(2);
      truth << -2.5 + 5.0 * rng.uniform(), -2.5 + 5.0 * rng.uniform();
      const RealVector target = f(truth);
      const RealVector x = solve_nonlinear(f, target, vec({0, 0}), box);
      CHECK((f(x) - target).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}
