#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <Eigen/Eigenvalues>

#include "qlabc/error.hpp"
#include "qlabc/surrogate.hpp"

using namespace qlabc;

namespace {

RealVector vec(std::initializer_list<double> v) {
  RealVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Box box1(double lo, double hi) { return Box(RealVector::Constant(1, lo), RealVector::Constant(1, hi)); }

std::shared_ptr<FunctionSimulator> linear_sim() {
  return std::make_shared<FunctionSimulator>(
      "linear", box1(0, 1), Prior({Marginal::uniform(0, 1)}),
      [](const RealVector& t, RandomStream&) { return RealVector::Constant(1, 2 * t[0] + 1); });
}

std::shared_ptr<FunctionSimulator> identity2_sim(double noise = 0.0) {
  Box b(RealVector::Constant(2, -1), RealVector::Constant(2, 1));
  return std::make_shared<FunctionSimulator>(
      "identity2", b, Prior({Marginal::uniform(-1, 1), Marginal::uniform(-1, 1)}),
      [noise](const RealVector& t, RandomStream& rng) {
        RealVector s = t;
        if (noise > 0) {
          // Correlated noise with covariance [[0.09, 0.06], [0.06, 0.25]].
          const double z1 = rng.normal(), z2 = rng.normal();
          s[0] += 0.3 * z1;
          s[1] += 0.2 * z1 + std::sqrt(0.25 - 0.04) * z2;
        }
        return s;
      });
}

struct Fitted {
  PilotDesign design;
  PilotData data;
  SurrogateModel model;
};

Fitted fit(const Simulator& sim, int m, VarianceKind kind, std::uint64_t seed = 1) {
  Fitted f{PilotDesign(sim.box(), m), {}, {}};
  f.data = run_pilot(f.design, sim, seed, 1);
  f.model = fit_surrogate(f.data, f.design, kind);
  return f;
}

const Fitted& gamma_fit() {
  static const Fitted f = fit(GammaModel(10), 100, VarianceKind::smooth, 2024);
  return f;
}

}  // namespace

TEST_CASE("pilot design lattice") {
  SUBCASE("p = 1 regular grid") {
    const PilotDesign d(box1(0, 1), 5);
    CHECK(d.total_points() == 5);
    for (int i = 0; i < 5; ++i) CHECK(d.point(i)[0] == doctest::Approx(0.25 * i));
  }
  SUBCASE("p = 2 lattice in row-major order") {
    const PilotDesign d(Box(vec({0, 10}), vec({2, 12})), 3);
    CHECK(d.total_points() == 9);
    CHECK(d.point(0) == vec({0, 10}));
    CHECK(d.point(1) == vec({0, 11}));
    CHECK(d.point(3) == vec({1, 10}));
    CHECK(d.point(8) == vec({2, 12}));
    for (std::size_t i = 0; i < 9; ++i) CHECK(d.flatten(d.unflatten(i)) == i);
  }
  SUBCASE("gamma lattice has 10^4 rows") {
    CHECK(gamma_fit().data.thetas.rows() == 10000);
    CHECK(gamma_fit().design.box().lo == vec({-2, -2}));
  }
  SUBCASE("defaults") {
    CHECK(default_points_per_dim(1) == 1000);
    CHECK(default_points_per_dim(2) == 30);
    CHECK(default_points_per_dim(3) == 30);
    CHECK(default_points_per_dim(4) == 10);
  }
}

TEST_CASE("pilot runs are reproducible and thread-independent") {
  const GammaModel sim(10);
  const PilotDesign d(sim.box(), 20);
  const PilotData a = run_pilot(d, sim, 77, 1);
  const PilotData b = run_pilot(d, sim, 77, 4);
  CHECK(a.stats == b.stats);
  CHECK(a.thetas == b.thetas);
  const PilotData c = run_pilot(d, sim, 78, 1);
  CHECK(a.stats != c.stats);

  SUBCASE("CSV round trip is exact") {
    const auto path = (std::filesystem::temp_directory_path() / "qlabc_pilot_test.csv").string();
    write_pilot_csv(path, a);
    const PilotData r = read_pilot_csv(path);
    CHECK(r.stats == a.stats);
    CHECK(r.thetas == a.thetas);
    CHECK(r.master_seed == 77);
    std::filesystem::remove(path);
  }
  SUBCASE("box outside the model box is rejected") {
    CHECK_THROWS_AS(run_pilot(PilotDesign(Box(vec({-3, 0}), vec({0, 1})), 5), sim, 1), ConfigError);
  }
  SUBCASE("simulator errors carry the offending point") {
    FunctionSimulator bad("bad", box1(0, 1), Prior({Marginal::uniform(0, 1)}),
                          [](const RealVector& t, RandomStream&) -> RealVector {
                            if (t[0] > 0.5) throw DegenerateSample("boom");
                            return t;
                          });
    try {
      run_pilot(PilotDesign(box1(0, 1), 11), bad, 1);
      FAIL("expected SimulationError");
    } catch (const SimulationError& e) {
      CHECK(std::string(e.what()).find("pilot point 6 theta = (0.6") != std::string::npos);
    }
  }
}

TEST_CASE("scalar surrogate on a noiseless linear pilot") {
  const auto sim = linear_sim();
  const Fitted f = fit(*sim, 100, VarianceKind::smooth);
  const SurrogateModel& m = f.model;
  for (int i = 0; i <= 200; ++i) {
    const double t = i / 200.0;
    CHECK(std::abs(m.forward(vec({t}))[0] - (2 * t + 1)) < 1e-4);
    CHECK(m.jacobian(vec({t}))(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(m.variance_at(vec({t}))(0, 0) < 1e-10);
    CHECK(m.variance_at(vec({t}))(0, 0) > 0.0);
  }
  CHECK(std::abs(m.jacobian_logdet(vec({0.3})) - std::log(2.0)) < 1e-3);
  CHECK(m.monotonicity().monotone);
  CHECK(m.monotonicity().flat_regions.empty());
  CHECK(m.r_squared()[0] > 0.9999);

  SUBCASE("inverse") {
    CHECK(m.inverse(vec({2.0}))[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK_THROWS_AS(m.inverse(vec({100.0})), OutsideImage);
    CHECK_FALSE(m.try_inverse(vec({-5.0})).has_value());
    CHECK(coverage_warning(m, vec({100.0})).has_value());
    CHECK_FALSE(coverage_warning(m, vec({1.5})).has_value());
  }
  SUBCASE("out of domain") {
    CHECK_THROWS_AS(m.forward(vec({1.5})), OutOfDomain);
    CHECK_THROWS_AS(m.jacobian_logdet(vec({-0.1})), OutOfDomain);
    CHECK_THROWS_AS(m.variance_at(vec({2.0})), OutOfDomain);
  }
  SUBCASE("inverse is order preserving") {
    double last = -1;
    for (int i = 0; i <= 100; ++i) {
      const double s = 1.001 + 1.998 * i / 100.0;
      const double t = m.inverse(vec({s}))[0];
      CHECK(t > last);
      last = t;
    }
  }
}

TEST_CASE("identity pilot in two dimensions") {
  const auto sim = identity2_sim();
  const Fitted f = fit(*sim, 20, VarianceKind::constant);
  const SurrogateModel& m = f.model;
  RandomStream rng(4, 0);
  for (int i = 0; i < 50; ++i) {
    const RealVector t = vec({-0.95 + 1.9 * rng.uniform(), -0.95 + 1.9 * rng.uniform()});
    CHECK(std::abs(m.jacobian_logdet(t)) < 1e-2);
    CHECK((m.forward(t) - t).cwiseAbs().maxCoeff() < 1e-4);
  }
  CHECK(m.monotonicity().monotone);
}

TEST_CASE("constant covariance recovers a known noise covariance") {
  const auto sim = identity2_sim(1.0);
  const Fitted f = fit(*sim, 30, VarianceKind::constant, 9);
  const RealMatrix v = f.model.variance_at(vec({0.1, -0.2}));
  CHECK(v(0, 0) == doctest::Approx(0.09).epsilon(0.15));
  CHECK(v(1, 1) == doctest::Approx(0.25).epsilon(0.15));
  CHECK(v(0, 1) == doctest::Approx(0.06).epsilon(0.25));
  CHECK(v(0, 1) == v(1, 0));
  const Eigen::SelfAdjointEigenSolver<RealMatrix> es(v);
  CHECK(es.eigenvalues().minCoeff() > 0.0);

  SUBCASE("smooth mode is diagonal and positive") {
    const Fitted g = fit(*sim, 30, VarianceKind::smooth, 9);
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j) {
        const RealMatrix w = g.model.variance_at(vec({-1 + i / 20.0, -1 + j / 20.0}));
        CHECK(w(0, 1) == 0.0);
        CHECK(w(1, 0) == 0.0);
        CHECK(w(0, 0) > 0.0);
        CHECK(w(1, 1) > 0.0);
      }
  }
}

TEST_CASE("gamma surrogate") {
  const SurrogateModel& m = gamma_fit().model;
  const PilotDesign& d = gamma_fit().design;

  SUBCASE("Richardson Jacobian at the grid centre matches one-sided differences") {
    const RealVector c = vec({0.0, 0.0});
    const RealMatrix jr = m.jacobian_direct(c);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < 2; ++k) {
      RealVector cp = c;
      cp[k] += h;
      const RealVector fd = (m.forward(cp) - m.forward(c)) / h;
      CHECK((fd - jr.col(k)).cwiseAbs().maxCoeff() < 1e-3);
    }
  }
  SUBCASE("round trip through lattice points") {
    RandomStream rng(12, 0);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t idx = rng.index(d.total_points());
      const RealVector t = d.point(idx);
      const RealVector back = m.inverse(m.forward(t), vec({0.0, 0.0}));
      CHECK((back - t).cwiseAbs().maxCoeff() < 1e-4);
    }
  }
  SUBCASE("solve_nonlinear on the fitted surrogate") {
    const RealVector t = d.point(d.flatten({37, 61}));
    auto f = [&](const RealVector& x) { return m.forward(x); };
    const RealVector x = solve_nonlinear(f, m.forward(t), vec({0.0, 0.0}), Box(vec({-1.99, -1.99}), vec({1.99, 1.99})));
    CHECK((x - t).cwiseAbs().maxCoeff() < 1e-4);
  }
  SUBCASE("forward(inverse(s)) round trip over the image interior") {
    RandomStream rng(12, 1);
    for (int trial = 0; trial < 200; ++trial) {
      const RealVector t = vec({-1.8 + 3.6 * rng.uniform(), -1.8 + 3.6 * rng.uniform()});
      const RealVector s = m.forward(t);
      CHECK((m.forward(m.inverse(s)) - s).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("interpolated Jacobian agrees with direct Richardson") {
    RandomStream rng(12, 2);
    for (int trial = 0; trial < 50; ++trial) {
      const RealVector t = vec({-1.9 + 3.8 * rng.uniform(), -1.9 + 3.8 * rng.uniform()});
      const double direct = std::log(std::abs(m.jacobian_direct(t).determinant()));
      CHECK(std::abs(std::log(std::abs(m.jacobian(t).determinant())) - direct) < 1e-2);
      CHECK(std::abs(m.jacobian_logdet(t) - direct) < 1e-6);
    }
  }
  SUBCASE("fitted surfaces are close to linear") {
    // Largest deviation of each component from its chord, relative to the
    // chord's rise, for components that move by more than 0.5.
    for (const auto& a : m.additive_forward()) {
      for (const auto& c : a.components()) {
        const double rise = c.value(c.hi()) - c.value(c.lo());
        if (std::abs(rise) < 0.5) continue;
        double dev = 0;
        for (int i = 0; i <= 100; ++i) {
          const double t = c.lo() + (c.hi() - c.lo()) * i / 100.0;
          dev = std::max(dev, std::abs(c.value(t) - c.value(c.lo()) - rise * i / 100.0));
        }
        CHECK(dev < 0.25 * std::abs(rise));
      }
    }
  }
  SUBCASE("serialization round trip is bit exact") {
    const SurrogateModel r = deserialize_surrogate(serialize_surrogate(m));
    RandomStream rng(12, 3);
    for (int i = 0; i < 100; ++i) {
      const RealVector t = vec({-2 + 4 * rng.uniform(), -2 + 4 * rng.uniform()});
      CHECK((r.forward(t).array() == m.forward(t).array()).all());
      CHECK(r.jacobian_logdet(t) == m.jacobian_logdet(t));
      CHECK((r.variance_at(t).array() == m.variance_at(t).array()).all());
    }
    CHECK(serialize_surrogate(r) == serialize_surrogate(m));
  }
  SUBCASE("corrupted and mismatched files") {
    std::string text = serialize_surrogate(m);
    CHECK_THROWS_AS(deserialize_surrogate("{" + text), SchemaMismatch);
    CHECK_THROWS_AS(deserialize_surrogate("{\"format\": \"other\"}"), SchemaMismatch);
    const auto pos = text.find("\"schema_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"schema_version\": 7");
    try {
      deserialize_surrogate(text);
      FAIL("expected SchemaMismatch");
    } catch (const SchemaMismatch& e) {
      const std::string what = e.what();
      CHECK(what.find("version 7") != std::string::npos);
      CHECK(what.find("version 1") != std::string::npos);
    }
  }
}

TEST_CASE("coalescent surrogate flags the ancillary region") {
  const Fitted f = fit(CoalescentModel(100), 1000, VarianceKind::smooth, 5);
  const SurrogateModel& m = f.model;
  CHECK(m.jacobian_logdet(vec({-7.0})) < m.jacobian_logdet(vec({1.0})) - 2.0);
  REQUIRE_FALSE(m.monotonicity().flat_regions.empty());
  CHECK(m.monotonicity().flat_regions.front().first == doctest::Approx(-8.0));
  CHECK_FALSE(m.warnings().empty());
}

TEST_CASE("g-and-k surrogate has non-constant log variance") {
  const Fitted f = fit(GkModel(200), 10, VarianceKind::smooth, 6);
  const SurrogateModel& m = f.model;
  for (Eigen::Index j = 0; j < 4; ++j) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < f.design.total_points(); ++i) {
      const double v = std::log(m.variance_at(f.design.point(i))(j, j));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(hi - lo > 1.0);
  }
}
