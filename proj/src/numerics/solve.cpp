#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/QR>

#include "qlabc/error.hpp"
#include "qlabc/numerics.hpp"

namespace qlabc {

RealMatrix richardson_jacobian(const VectorFunction& f, const RealVector& x,
                               std::optional<double> h0, const Box* domain) {
  constexpr int kLevels = 3;  // h, h/2, h/4
  const Eigen::Index p = x.size();
  RealMatrix jac;

  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = h0 ? *h0 : 1e-3 * std::max(1.0, std::abs(x[j]));
    if (!(h > 0.0)) throw ConfigError("richardson_jacobian: step must be positive");

    std::array<RealVector, kLevels> table;
    for (int k = 0; k < kLevels; ++k) {
      const double step = h / static_cast<double>(1 << k);
      RealVector up = x, down = x;
      up[j] += step;
      down[j] -= step;
      if (domain && (!domain->contains(up) || !domain->contains(down))) {
        std::ostringstream os;
        os << "richardson_jacobian: step " << step << " along coordinate " << j
           << " leaves the domain";
        throw DomainViolation(os.str());
      }
      table[k] = (f(up) - f(down)) / (2.0 * step);
    }
    if (j == 0) jac.resize(table[0].size(), p);

    // Neville-style tableau eliminating the h^2 then h^4 error terms.
    double factor = 4.0;
    for (int m = 1; m < kLevels; ++m) {
      for (int k = kLevels - 1; k >= m; --k)
        table[k] = (factor * table[k] - table[k - 1]) / (factor - 1.0);
      factor *= 4.0;
    }
    jac.col(j) = table[kLevels - 1];
  }
  return jac;
}

namespace {

SolveResult bisect_scalar(const VectorFunction& f, double target, const Box& bounds,
                          const SolveOptions& opts, SolveResult best) {
  auto g = [&](double t) {
    RealVector v(1);
    v[0] = t;
    return f(v)[0] - target;
  };
  double lo = bounds.lo[0], hi = bounds.hi[0];
  double glo = g(lo), ghi = g(hi);
  if (!(glo * ghi <= 0.0)) return best;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (std::abs(gm) < best.residual) {
      best.x[0] = mid;
      best.residual = std::abs(gm);
    }
    if (std::abs(gm) < opts.tolerance) {
      best.converged = true;
      return best;
    }
    if ((gm < 0.0) == (glo < 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid)))
      break;
  }
  for (double end : {lo, hi}) {
    const double r = std::abs(g(end));
    if (r < best.residual) {
      best.x[0] = end;
      best.residual = r;
    }
  }
  best.converged = best.residual < opts.tolerance;
  return best;
}

}  // namespace

SolveResult try_solve_nonlinear(const VectorFunction& f, const RealVector& target,
                                const RealVector& x0, const Box& bounds,
                                const MatrixFunction& jacobian, const SolveOptions& opts) {
  if (x0.size() != bounds.dim() || target.size() != bounds.dim())
    throw DimensionMismatch("solve_nonlinear: dimensions of x0, target and bounds differ");

  auto jac = [&](const RealVector& x) -> RealMatrix {
    return jacobian ? jacobian(x) : richardson_jacobian(f, x);
  };

  SolveResult out;
  out.x = bounds.clamp(x0);
  RealVector fx = f(out.x);
  RealVector r = fx - target;
  out.residual = r.allFinite() ? r.cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();

  for (int it = 0; it < opts.max_iterations && out.residual >= opts.tolerance; ++it) {
    out.iterations = it + 1;
    const RealMatrix j = jac(out.x);
    RealVector step = j.completeOrthogonalDecomposition().solve(-r);
    if (!step.allFinite()) break;

    bool improved = false;
    double t = 1.0;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const RealVector candidate = bounds.clamp(out.x + t * step);
      const RealVector rc = f(candidate) - target;
      if (!rc.allFinite()) continue;
      const double res = rc.cwiseAbs().maxCoeff();
      if (res < out.residual) {
        out.x = candidate;
        r = rc;
        out.residual = res;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  out.converged = out.residual < opts.tolerance;

  if (!out.converged && bounds.dim() == 1) out = bisect_scalar(f, target[0], bounds, opts, out);
  return out;
}

RealVector solve_nonlinear(const VectorFunction& f, const RealVector& target,
                           const RealVector& x0, const Box& bounds,
                           const MatrixFunction& jacobian, const SolveOptions& opts) {
  SolveResult res = try_solve_nonlinear(f, target, x0, bounds, jacobian, opts);
  if (!res.converged) {
    std::ostringstream os;
    os << "solve_nonlinear did not converge: residual " << res.residual << " after "
       << res.iterations << " Newton iterations";
    throw NonConverged(os.str(), res.x, res.residual);
  }
  return res.x;
}

}  // namespace qlabc
