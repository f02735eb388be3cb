#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qlabc/error.hpp"
#include "qlabc/smoothers.hpp"

namespace qlabc {

SmoothingSpline::SmoothingSpline(std::vector<double> knots, std::vector<Cubic> coefficients,
                                 double penalty, double edf)
    : knots_(std::move(knots)), coef_(std::move(coefficients)), penalty_(penalty), edf_(edf) {
  if (knots_.size() < 2 || coef_.size() + 1 != knots_.size())
    throw SchemaMismatch("spline needs k >= 2 knots and k - 1 cubic pieces");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (!(knots_[i] > knots_[i - 1])) throw SchemaMismatch("spline knots must be increasing");
}

bool SmoothingSpline::in_domain(double x) const {
  const double slack = 1e-12 * (hi() - lo());
  return x >= lo() - slack && x <= hi() + slack;
}

std::size_t SmoothingSpline::interval(double x) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  std::size_t i = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(i, coef_.size() - 1);
}

double SmoothingSpline::value(double x) const {
  if (!in_domain(x)) {
    std::ostringstream os;
    os << "spline evaluated at " << x << " outside [" << lo() << ", " << hi() << "]";
    throw OutOfDomain(os.str());
  }
  return value_extended(std::clamp(x, lo(), hi()));
}

double SmoothingSpline::derivative(double x) const {
  if (!in_domain(x)) {
    std::ostringstream os;
    os << "spline derivative at " << x << " outside [" << lo() << ", " << hi() << "]";
    throw OutOfDomain(os.str());
  }
  return derivative_extended(std::clamp(x, lo(), hi()));
}

double SmoothingSpline::value_extended(double x) const {
  if (x < lo()) return coef_.front()[0] + coef_.front()[1] * (x - lo());
  if (x > hi()) return value_extended(hi()) + derivative_extended(hi()) * (x - hi());
  const std::size_t i = interval(x);
  const Cubic& c = coef_[i];
  const double t = x - knots_[i];
  return c[0] + t * (c[1] + t * (c[2] + t * c[3]));
}

double SmoothingSpline::derivative_extended(double x) const {
  if (x < lo()) return coef_.front()[1];
  const double xc = std::min(x, hi());
  const std::size_t i = interval(xc);
  const Cubic& c = coef_[i];
  const double t = xc - knots_[i];
  return c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]);
}

void SmoothingSpline::shift(double c) {
  for (Cubic& piece : coef_) piece[0] += c;
}

SplineGrouping SplineGrouping::from(const std::vector<double>& x) {
  SplineGrouping g;
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  g.group.resize(x.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = x[order[k]];
    if (g.unique_x.empty() || v != g.unique_x.back()) {
      g.unique_x.push_back(v);
      g.counts.push_back(0.0);
    }
    g.group[order[k]] = g.unique_x.size() - 1;
    g.counts.back() += 1.0;
  }
  return g;
}

namespace {

// Reinsch formulation on the distinct abscissae: minimize
// sum_i w_i (ybar_i - g_i)^2 + lambda * int g''^2.
class ReinschSolver {
 public:
  ReinschSolver(std::vector<double> x, std::vector<double> w, std::vector<double> ybar,
                double ss_within, double n_total)
      : x_(std::move(x)), w_(std::move(w)), y_(std::move(ybar)),
        ss_within_(ss_within), n_total_(n_total) {
    n_ = x_.size();
    m_ = n_ - 2;
    h_.resize(n_ - 1);
    for (std::size_t i = 0; i + 1 < n_; ++i) h_[i] = x_[i + 1] - x_[i];
    q0_.resize(m_);
    q1_.resize(m_);
    q2_.resize(m_);
    for (std::size_t a = 0; a < m_; ++a) {
      q0_[a] = 1.0 / h_[a];
      q1_[a] = -1.0 / h_[a] - 1.0 / h_[a + 1];
      q2_[a] = 1.0 / h_[a + 1];
    }
    qty_.resize(m_);
    for (std::size_t a = 0; a < m_; ++a)
      qty_[a] = q0_[a] * y_[a] + q1_[a] * y_[a + 1] + q2_[a] * y_[a + 2];

    r0_.resize(m_);
    r1_.assign(m_, 0.0);
    t0_.resize(m_);
    t1_.assign(m_, 0.0);
    t2_.assign(m_, 0.0);
    for (std::size_t a = 0; a < m_; ++a) {
      r0_[a] = (h_[a] + h_[a + 1]) / 3.0;
      if (a + 1 < m_) r1_[a] = h_[a + 1] / 6.0;
      t0_[a] = q0_[a] * q0_[a] / w_[a] + q1_[a] * q1_[a] / w_[a + 1] + q2_[a] * q2_[a] / w_[a + 2];
      if (a + 1 < m_) t1_[a] = q1_[a] * q0_[a + 1] / w_[a + 1] + q2_[a] * q1_[a + 1] / w_[a + 2];
      if (a + 2 < m_) t2_[a] = q2_[a] * q0_[a + 2] / w_[a + 2];
    }
    // Equivalent-kernel bandwidth b scales like (lambda / density)^(1/4), so
    // lambda = range^3 / n puts b at a fixed fraction of the range.
    const double range = x_.back() - x_.front();
    scale_ = range * range * range / n_total_;
  }

  // Reference penalty; the GCV grid is expressed relative to it.
  double scale() const { return scale_; }

  struct Fit {
    std::vector<double> g;
    std::vector<double> gamma;  // second derivatives at all knots
    double trace = 0.0;
    double rss = 0.0;
    double gcv = 0.0;
  };

  Fit solve(double lambda, bool want_trace) const {
    const std::size_t m = m_;
    std::vector<double> d(m), l1(m, 0.0), l2(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double b0 = r0_[i] + lambda * t0_[i];
      double di = b0;
      if (i >= 1) di -= l1[i - 1] * l1[i - 1] * d[i - 1];
      if (i >= 2) di -= l2[i - 2] * l2[i - 2] * d[i - 2];
      d[i] = di;
      if (i + 1 < m) {
        double b1 = r1_[i] + lambda * t1_[i];
        if (i >= 1) b1 -= l2[i - 1] * l1[i - 1] * d[i - 1];
        l1[i] = b1 / di;
      }
      if (i + 2 < m) l2[i] = lambda * t2_[i] / di;
    }

    std::vector<double> z(m);
    for (std::size_t i = 0; i < m; ++i) {
      double zi = qty_[i];
      if (i >= 1) zi -= l1[i - 1] * z[i - 1];
      if (i >= 2) zi -= l2[i - 2] * z[i - 2];
      z[i] = zi;
    }
    std::vector<double> gam(m);
    for (std::size_t k = m; k-- > 0;) {
      double gi = z[k] / d[k];
      if (k + 1 < m) gi -= l1[k] * gam[k + 1];
      if (k + 2 < m) gi -= l2[k] * gam[k + 2];
      gam[k] = gi;
    }

    Fit fit;
    fit.g.resize(n_);
    for (std::size_t r = 0; r < n_; ++r) {
      double qg = 0.0;
      if (r < m) qg += q0_[r] * gam[r];
      if (r >= 1 && r - 1 < m) qg += q1_[r - 1] * gam[r - 1];
      if (r >= 2 && r - 2 < m) qg += q2_[r - 2] * gam[r - 2];
      fit.g[r] = y_[r] - lambda * qg / w_[r];
    }
    fit.gamma.assign(n_, 0.0);
    for (std::size_t a = 0; a < m; ++a) fit.gamma[a + 1] = gam[a];

    double rss = ss_within_;
    for (std::size_t r = 0; r < n_; ++r) rss += w_[r] * (y_[r] - fit.g[r]) * (y_[r] - fit.g[r]);
    fit.rss = std::max(rss, 0.0);

    if (want_trace) {
      // Central band of B^-1 by backward recursion on the LDL' factors.
      std::vector<double> s0(m + 2, 0.0), s1(m + 2, 0.0), s2(m + 2, 0.0);
      for (std::size_t k = m; k-- > 0;) {
        s1[k] = -l1[k] * s0[k + 1] - l2[k] * s1[k + 1];
        s2[k] = -l1[k] * s1[k + 1] - l2[k] * s0[k + 2];
        s0[k] = 1.0 / d[k] - l1[k] * s1[k] - l2[k] * s2[k];
      }
      auto sigma = [&](std::size_t a, std::size_t b) {
        if (a > b) std::swap(a, b);
        switch (b - a) {
          case 0: return s0[a];
          case 1: return s1[a];
          default: return s2[a];
        }
      };
      double trace = 0.0;
      for (std::size_t r = 0; r < n_; ++r) {
        std::size_t cols[3];
        double vals[3];
        int nc = 0;
        if (r >= 2 && r - 2 < m) { cols[nc] = r - 2; vals[nc++] = q2_[r - 2]; }
        if (r >= 1 && r - 1 < m) { cols[nc] = r - 1; vals[nc++] = q1_[r - 1]; }
        if (r < m) { cols[nc] = r; vals[nc++] = q0_[r]; }
        double qsq = 0.0;
        for (int a = 0; a < nc; ++a)
          for (int b = 0; b < nc; ++b) qsq += vals[a] * vals[b] * sigma(cols[a], cols[b]);
        trace += 1.0 - lambda * qsq / w_[r];
      }
      fit.trace = trace;
      const double denom = n_total_ - trace;
      fit.gcv = denom > 1e-9 * n_total_ ? n_total_ * fit.rss / (denom * denom)
                                        : std::numeric_limits<double>::infinity();
    }
    return fit;
  }

  SmoothingSpline to_spline(const Fit& fit, double lambda) const {
    // Re-derive gamma from g with R gamma = Q'g. The penalized system is badly
    // conditioned at large lambda; this one is not, and it keeps the pieces C2.
    std::vector<double> gam(n_, 0.0), diag(m_), rhs(m_);
    for (std::size_t a = 0; a < m_; ++a) {
      diag[a] = r0_[a];
      rhs[a] = q0_[a] * fit.g[a] + q1_[a] * fit.g[a + 1] + q2_[a] * fit.g[a + 2];
    }
    for (std::size_t a = 1; a < m_; ++a) {
      const double f = r1_[a - 1] / diag[a - 1];
      diag[a] -= f * r1_[a - 1];
      rhs[a] -= f * rhs[a - 1];
    }
    for (std::size_t a = m_; a-- > 0;) {
      const double next = a + 1 < m_ ? gam[a + 2] : 0.0;
      gam[a + 1] = (rhs[a] - (a + 1 < m_ ? r1_[a] * next : 0.0)) / diag[a];
    }
    std::vector<SmoothingSpline::Cubic> coef(n_ - 1);
    for (std::size_t i = 0; i + 1 < n_; ++i) {
      const double h = h_[i];
      const double g0 = fit.g[i], g1 = fit.g[i + 1];
      const double c0 = gam[i], c1 = gam[i + 1];
      coef[i] = {g0, (g1 - g0) / h - h * (2.0 * c0 + c1) / 6.0, 0.5 * c0, (c1 - c0) / (6.0 * h)};
    }
    return SmoothingSpline(x_, std::move(coef), lambda, fit.trace);
  }

 private:
  std::vector<double> x_, w_, y_;
  double ss_within_, n_total_;
  std::size_t n_ = 0, m_ = 0;
  std::vector<double> h_, q0_, q1_, q2_, qty_;
  std::vector<double> r0_, r1_, t0_, t1_, t2_;
  double scale_ = 1.0;
};

SmoothingSpline linear_spline(const std::vector<double>& ux, const std::vector<double>& w,
                              const std::vector<double>& ybar) {
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    sw += w[i];
    sx += w[i] * ux[i];
    sy += w[i] * ybar[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    sxx += w[i] * (ux[i] - mx) * (ux[i] - mx);
    sxy += w[i] * (ux[i] - mx) * (ybar[i] - my);
  }
  const double slope = sxy / sxx;
  std::vector<SmoothingSpline::Cubic> coef;
  for (std::size_t i = 0; i + 1 < ux.size(); ++i)
    coef.push_back({my + slope * (ux[i] - mx), slope, 0.0, 0.0});
  return SmoothingSpline(ux, std::move(coef), 0.0, 2.0);
}

}  // namespace

SmoothingSpline fit_spline_grouped(const SplineGrouping& grouping, const std::vector<double>& y,
                                   Penalty penalty) {
  const std::size_t n_obs = y.size();
  if (n_obs != grouping.group.size())
    throw DimensionMismatch("fit_spline: x and y lengths differ");
  if (n_obs < 10) throw InsufficientData("fit_spline needs at least 10 points");
  const std::size_t n = grouping.unique_x.size();
  if (n < 2) throw DegenerateDesign("fit_spline: x values span a zero range");
  for (double v : y)
    if (!std::isfinite(v)) throw InsufficientData("fit_spline: non-finite response");

  std::vector<double> sums(n, 0.0);
  for (std::size_t i = 0; i < n_obs; ++i) sums[grouping.group[i]] += y[i];
  std::vector<double> ybar(n);
  for (std::size_t k = 0; k < n; ++k) ybar[k] = sums[k] / grouping.counts[k];
  double ss_within = 0.0;
  for (std::size_t i = 0; i < n_obs; ++i) {
    const double dev = y[i] - ybar[grouping.group[i]];
    ss_within += dev * dev;
  }

  if (n == 2) return linear_spline(grouping.unique_x, grouping.counts, ybar);

  const bool constant =
      std::all_of(ybar.begin(), ybar.end(), [&](double v) { return v == ybar.front(); });
  if (constant) {
    std::vector<SmoothingSpline::Cubic> coef(n - 1, {ybar.front(), 0.0, 0.0, 0.0});
    return SmoothingSpline(grouping.unique_x, std::move(coef), penalty.value_or(0.0), 1.0);
  }

  ReinschSolver solver(grouping.unique_x, grouping.counts, ybar, ss_within,
                       static_cast<double>(n_obs));
  if (penalty) {
    if (!(*penalty >= 0.0)) throw ConfigError("fit_spline: penalty must be non-negative");
    const auto fit = solver.solve(*penalty, true);
    return solver.to_spline(fit, *penalty);
  }

  // GCV over a logarithmic grid of relative penalties, then golden-section
  // refinement around the best grid point.
  const double base = solver.scale();
  auto gcv_at = [&](double log10_rel) {
    return solver.solve(base * std::pow(10.0, log10_rel), true).gcv;
  };
  constexpr double kLow = -14.0, kHigh = 4.0, kStep = 0.25;
  double best_log = kLow, best_gcv = std::numeric_limits<double>::infinity();
  for (double t = kLow; t <= kHigh + 1e-9; t += kStep) {
    const double v = gcv_at(t);
    if (v < best_gcv) {
      best_gcv = v;
      best_log = t;
    }
  }
  double a = best_log - kStep, b = best_log + kStep;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = gcv_at(c), fd = gcv_at(d);
  for (int it = 0; it < 30; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = gcv_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = gcv_at(d);
    }
  }
  const double refined = fc < fd ? c : d;
  if (std::min(fc, fd) < best_gcv) best_log = refined;

  const double lambda = base * std::pow(10.0, best_log);
  return solver.to_spline(solver.solve(lambda, true), lambda);
}

SmoothingSpline fit_spline(const std::vector<double>& x, const std::vector<double>& y,
                           Penalty penalty) {
  if (x.size() != y.size()) throw DimensionMismatch("fit_spline: x and y lengths differ");
  if (x.size() < 10) throw InsufficientData("fit_spline needs at least 10 points");
  for (double v : x)
    if (!std::isfinite(v)) throw InsufficientData("fit_spline: non-finite abscissa");

  // Sort on (x, y) pairs so the fit does not depend on input order.
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(x.size()), ys(y.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    xs[k] = x[order[k]];
    ys[k] = y[order[k]];
  }
  return fit_spline_grouped(SplineGrouping::from(xs), ys, penalty);
}

}  // namespace qlabc
