#pragma once

#include <functional>
#include <optional>

#include <Eigen/Core>

#include "qlabc/random.hpp"

namespace qlabc {

using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
using VectorFunction = std::function<RealVector(const RealVector&)>;
using MatrixFunction = std::function<RealMatrix(const RealVector&)>;

// Axis-aligned box [lo, hi] in R^p.
struct Box {
  RealVector lo;
  RealVector hi;

  Box() = default;
  Box(RealVector lower, RealVector upper);

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const RealVector& x) const;
  RealVector clamp(const RealVector& x) const;
  RealVector width() const { return hi - lo; }
  RealVector center() const { return 0.5 * (lo + hi); }
};

bool all_finite(const RealVector& v);

// Lower Cholesky factor of a symmetric positive definite matrix. Throws
// NotPositiveDefinite when a pivot falls below 1e-12 * trace(m) / rows.
RealMatrix cholesky_factor(const RealMatrix& m);

// mean + L z with z standard normal.
RealVector sample_mvn(const RealVector& mean, const RealMatrix& chol_lower, RandomStream& rng);

// Log density of N(mean, L L^T) at x.
double mvn_logpdf(const RealVector& x, const RealVector& mean, const RealMatrix& chol_lower);

// Central-difference Jacobian refined by Richardson extrapolation over two
// step halvings. The default step for coordinate j is 1e-3 * max(1, |x_j|).
// When a domain is given, any perturbed point outside it raises
// DomainViolation.
RealMatrix richardson_jacobian(const VectorFunction& f, const RealVector& x,
                               std::optional<double> h0 = std::nullopt,
                               const Box* domain = nullptr);

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iterations = 50;
  int max_halvings = 10;
};

struct SolveResult {
  RealVector x;
  double residual = 0.0;  // sup-norm of f(x) - target
  int iterations = 0;
  bool converged = false;
};

// Damped Newton on f(x) = target, iterates projected onto bounds. For p = 1 a
// bisection on [bounds.lo, bounds.hi] is tried when Newton stalls. Without a
// jacobian callback f must be evaluable just outside the bounds.
SolveResult try_solve_nonlinear(const VectorFunction& f, const RealVector& target,
                                const RealVector& x0, const Box& bounds,
                                const MatrixFunction& jacobian = {},
                                const SolveOptions& opts = {});

// As try_solve_nonlinear, throwing NonConverged with the best iterate.
RealVector solve_nonlinear(const VectorFunction& f, const RealVector& target,
                           const RealVector& x0, const Box& bounds,
                           const MatrixFunction& jacobian = {},
                           const SolveOptions& opts = {});

}  // namespace qlabc
