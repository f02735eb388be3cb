#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "qlabc/error.hpp"
#include "qlabc/surrogate.hpp"

namespace qlabc {

namespace {

constexpr double kInverseTolerance = 1e-6;

std::string describe(const RealVector& x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index j = 0; j < x.size(); ++j) os << (j ? ", " : "") << format_double(x[j]);
  os << ")";
  return os.str();
}

double r_squared(const RealVector& y, const RealVector& fit) {
  const double tss = (y.array() - y.mean()).square().sum();
  const double rss = (y - fit).squaredNorm();
  return tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : 0.0);
}

MonotonicityReport check_monotone(const SmoothingSpline& s, const Box& box) {
  constexpr int kGrid = 2001;
  std::vector<double> t(kGrid), d(kGrid);
  double big = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    t[i] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / (kGrid - 1.0);
    d[i] = s.derivative(std::clamp(t[i], s.lo(), s.hi()));
    big = std::max(big, std::abs(d[i]));
  }
  MonotonicityReport r;
  r.sign = s.value(s.hi()) >= s.value(s.lo()) ? 1 : -1;
  // Flat: wrong sign, or slope below 1% of the steepest slope.
  bool in_region = false;
  for (int i = 0; i < kGrid; ++i) {
    const bool wrong = d[i] * r.sign < 0.0;
    if (wrong) r.monotone = false;
    const bool flat = wrong || std::abs(d[i]) < 1e-2 * big;
    if (flat && !in_region) r.flat_regions.push_back({t[i], t[i]});
    if (flat) r.flat_regions.back().second = t[i];
    in_region = flat;
  }
  return r;
}

}  // namespace

RealVector SurrogateModel::forward_unchecked(const RealVector& theta, bool extended) const {
  const Eigen::Index p = dim();
  RealVector f(p);
  if (p == 1) {
    f[0] = extended ? scalar_forward_.value_extended(theta[0]) : scalar_forward_.value(theta[0]);
  } else {
    for (Eigen::Index i = 0; i < p; ++i)
      f[i] = extended ? additive_forward_[i].value_extended(theta) : additive_forward_[i].value(theta);
  }
  return f;
}

RealVector SurrogateModel::forward(const RealVector& theta) const {
  if (theta.size() != dim()) throw DimensionMismatch("surrogate: wrong parameter dimension");
  if (!in_domain(theta)) throw OutOfDomain("surrogate evaluated at " + describe(theta) + " outside the pilot box");
  return forward_unchecked(theta, false);
}

RealMatrix SurrogateModel::analytic_jacobian(const RealVector& theta) const {
  const Eigen::Index p = dim();
  RealMatrix j(p, p);
  if (p == 1) {
    j(0, 0) = scalar_forward_.derivative(theta[0]);
  } else {
    for (Eigen::Index i = 0; i < p; ++i) j.row(i) = additive_forward_[i].gradient(theta).transpose();
  }
  return j;
}

RealMatrix SurrogateModel::jacobian_direct(const RealVector& theta) const {
  if (!in_domain(theta)) throw OutOfDomain("jacobian at " + describe(theta) + " outside the pilot box");
  return richardson_jacobian([this](const RealVector& x) { return forward_unchecked(x, true); }, theta);
}

RealMatrix SurrogateModel::jacobian(const RealVector& theta) const {
  if (theta.size() != dim()) throw DimensionMismatch("surrogate: wrong parameter dimension");
  if (!in_domain(theta)) throw OutOfDomain("jacobian at " + describe(theta) + " outside the pilot box");
  const Eigen::Index p = dim();
  if (p == 1) return analytic_jacobian(theta);

  // Multilinear interpolation of the lattice table.
  const int m = design_.points_per_dim();
  std::vector<int> cell(p);
  std::vector<double> frac(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double step = (design_.box().hi[k] - design_.box().lo[k]) / (m - 1);
    const double u = (theta[k] - design_.box().lo[k]) / step;
    const int c = std::clamp(static_cast<int>(std::floor(u)), 0, m - 2);
    cell[k] = c;
    frac[k] = std::clamp(u - c, 0.0, 1.0);
  }
  RealVector acc = RealVector::Zero(p * p);
  std::vector<int> pos(p);
  for (int corner = 0; corner < (1 << p); ++corner) {
    double w = 1.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      const int bit = (corner >> k) & 1;
      pos[k] = cell[k] + bit;
      w *= bit ? frac[k] : 1.0 - frac[k];
    }
    if (w == 0.0) continue;
    acc += w * jacobian_table_.row(static_cast<Eigen::Index>(design_.flatten(pos))).transpose();
  }
  RealMatrix j(p, p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) j(r, c) = acc[r * p + c];
  return j;
}

double SurrogateModel::jacobian_logdet(const RealVector& theta) const {
  if (theta.size() != dim()) throw DimensionMismatch("surrogate: wrong parameter dimension");
  if (!in_domain(theta)) throw OutOfDomain("jacobian at " + describe(theta) + " outside the pilot box");
  // The determinant enters the MH ratio as the Jacobian of the map that
  // try_inverse actually inverts, so it comes from the component splines and
  // not from the interpolated table, which is far off on coarse lattices.
  const RealMatrix j = analytic_jacobian(theta);
  const double det = dim() == 1 ? j(0, 0) : j.partialPivLu().determinant();
  if (det == 0.0 || !std::isfinite(det)) return -std::numeric_limits<double>::infinity();
  return std::log(std::abs(det));
}

RealMatrix SurrogateModel::variance_at(const RealVector& theta) const {
  if (theta.size() != dim()) throw DimensionMismatch("surrogate: wrong parameter dimension");
  if (!in_domain(theta)) throw OutOfDomain("variance at " + describe(theta) + " outside the pilot box");
  const Eigen::Index p = dim();
  if (p > 1 && variance_kind_ == VarianceKind::constant) return sigma_;
  RealMatrix v = RealMatrix::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) v(i, i) = variance_[i].value(theta);
  return v;
}

RealMatrix SurrogateModel::variance_chol(const RealVector& theta) const {
  if (variance_kind_ == VarianceKind::constant) {
    if (!in_domain(theta)) throw OutOfDomain("variance at " + describe(theta) + " outside the pilot box");
    return sigma_chol_;
  }
  RealMatrix v = variance_at(theta);
  for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, i) = std::sqrt(v(i, i));
  return v;
}

std::size_t SurrogateModel::nearest_lattice_index(const RealVector& s) const {
  Eigen::Index best = 0;
  (forward_table_.rowwise() - s.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<std::size_t>(best);
}

std::optional<RealVector> SurrogateModel::try_inverse(const RealVector& s,
                                                      const std::optional<RealVector>& hint) const {
  if (s.size() != dim()) throw DimensionMismatch("inverse: wrong statistic dimension");
  if (!all_finite(s)) return std::nullopt;
  const Box& box = domain();
  auto f = [this](const RealVector& x) { return forward_unchecked(x, false); };
  auto jac = [this](const RealVector& x) { return analytic_jacobian(x); };

  std::vector<RealVector> seeds;
  if (hint && hint->size() == dim() && all_finite(*hint)) seeds.push_back(box.clamp(*hint));
  seeds.push_back(design_.point(nearest_lattice_index(s)));

  for (const auto& x0 : seeds) {
    const SolveResult r = try_solve_nonlinear(f, s, x0, box, jac);
    if (r.residual < kInverseTolerance && box.contains(r.x)) return r.x;
  }
  return std::nullopt;
}

RealVector SurrogateModel::inverse(const RealVector& s, const std::optional<RealVector>& hint) const {
  auto r = try_inverse(s, hint);
  if (!r) throw OutsideImage("statistic " + describe(s) + " is outside the fitted image");
  return *r;
}

void SurrogateModel::build_tables() {
  const Eigen::Index p = dim();
  const auto n = static_cast<Eigen::Index>(design_.total_points());
  forward_table_.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    forward_table_.row(i) = forward_unchecked(design_.point(static_cast<std::size_t>(i)), false).transpose();
  if (p == 1) {
    jacobian_table_.resize(0, 0);
    return;
  }
  jacobian_table_.resize(n, p * p);
  auto f = [this](const RealVector& x) { return forward_unchecked(x, true); };
  for (Eigen::Index i = 0; i < n; ++i) {
    const RealMatrix j = richardson_jacobian(f, design_.point(static_cast<std::size_t>(i)));
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < p; ++c) jacobian_table_(i, r * p + c) = j(r, c);
  }
}

void SurrogateModel::finish_setup() {
  const Eigen::Index p = dim();
  if (variance_kind_ != VarianceKind::constant) return;
  if (p == 1) {
    sigma_ = RealMatrix::Constant(1, 1, variance_[0].constant_value());
  }
  sigma_chol_ = cholesky_factor(sigma_);
}

SurrogateModel fit_surrogate(const PilotData& data, const PilotDesign& design,
                             VarianceKind variance_kind) {
  const Eigen::Index p = design.dim();
  const auto n = static_cast<Eigen::Index>(design.total_points());
  if (data.thetas.cols() != p || data.stats.cols() != p)
    throw DimensionMismatch("pilot data dimension does not match the design");
  if (data.thetas.rows() != n || data.stats.rows() != n)
    throw DimensionMismatch("pilot data has " + std::to_string(data.thetas.rows()) + " rows, design has " +
                            std::to_string(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const RealVector expect = design.point(static_cast<std::size_t>(i));
    if ((data.thetas.row(i).transpose() - expect).cwiseAbs().maxCoeff() >
        1e-9 * std::max(1.0, expect.cwiseAbs().maxCoeff()))
      throw SchemaMismatch("pilot row " + std::to_string(i) + " is not the lattice point of the design");
    if (!all_finite(data.stats.row(i).transpose()))
      throw InsufficientData("pilot row " + std::to_string(i) + " has non-finite statistics");
  }

  SurrogateModel m;
  m.design_ = design;
  m.variance_kind_ = variance_kind;
  RealMatrix resid(n, p);

  if (p == 1) {
    std::vector<double> x(data.thetas.col(0).data(), data.thetas.col(0).data() + n);
    std::vector<double> y(data.stats.col(0).data(), data.stats.col(0).data() + n);
    m.scalar_forward_ = fit_spline(x, y);
    RealVector fit(n);
    for (Eigen::Index i = 0; i < n; ++i) fit[i] = m.scalar_forward_.value(x[i]);
    resid.col(0) = data.stats.col(0) - fit;
    m.r2_.push_back(r_squared(data.stats.col(0), fit));
    m.variance_.push_back(fit_variance(data.thetas, resid.col(0), variance_kind));

    m.monotonicity_ = check_monotone(m.scalar_forward_, design.box());
    for (const auto& [a, b] : m.monotonicity_.flat_regions) {
      std::ostringstream os;
      os << "derivative of f is near zero or changes sign on [" << format_double(a) << ", "
         << format_double(b) << "]; the statistic is locally ancillary there";
      m.warnings_.push_back(os.str());
    }
    if (!m.monotonicity_.monotone) m.warnings_.push_back("fitted f is not monotone on the pilot box");
  } else {
    for (Eigen::Index i = 0; i < p; ++i) {
      AdditiveSurface a = fit_additive(data.thetas, data.stats.col(i));
      if (!a.converged())
        m.warnings_.push_back("backfitting for s_" + std::to_string(i + 1) + " did not converge in " +
                              std::to_string(a.sweeps()) + " sweeps");
      RealVector fit(n);
      for (Eigen::Index r = 0; r < n; ++r) fit[r] = a.value(data.thetas.row(r).transpose());
      resid.col(i) = data.stats.col(i) - fit;
      m.r2_.push_back(r_squared(data.stats.col(i), fit));
      m.additive_forward_.push_back(std::move(a));
    }
    if (variance_kind == VarianceKind::constant) {
      m.sigma_ = resid.transpose() * resid / static_cast<double>(n);
      m.sigma_ = 0.5 * (m.sigma_ + m.sigma_.transpose());
      m.sigma_.diagonal().array() += VarianceSurface::kFloor;
    } else {
      for (Eigen::Index i = 0; i < p; ++i)
        m.variance_.push_back(fit_variance(data.thetas, resid.col(i), VarianceKind::smooth));
    }
  }

  m.build_tables();
  m.finish_setup();

  if (p > 1) {
    int positive = 0, negative = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      RealMatrix j(p, p);
      for (Eigen::Index r = 0; r < p; ++r)
        for (Eigen::Index c = 0; c < p; ++c) j(r, c) = m.jacobian_table_(i, r * p + c);
      const double det = j.partialPivLu().determinant();
      (det >= 0 ? positive : negative)++;
    }
    m.monotonicity_.sign = positive >= negative ? 1 : -1;
    m.monotonicity_.monotone = positive == 0 || negative == 0;
    if (!m.monotonicity_.monotone)
      m.warnings_.push_back("Jacobian determinant changes sign at " + std::to_string(std::min(positive, negative)) +
                            " of " + std::to_string(n) + " lattice points; f is not invertible there");
  }
  return m;
}

SurrogateModel linear_surrogate(const PilotDesign& design, const RealMatrix& a, const RealVector& b,
                                const RealMatrix& sigma) {
  const Eigen::Index p = design.dim();
  if (a.rows() != p || a.cols() != p || b.size() != p || sigma.rows() != p || sigma.cols() != p)
    throw DimensionMismatch("linear surrogate: coefficient shapes do not match the design");
  auto line = [&](Eigen::Index k, double slope, double offset) {
    const auto& knots = design.axis(k);
    std::vector<SmoothingSpline::Cubic> coef;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) coef.push_back({offset + slope * knots[i], slope, 0.0, 0.0});
    return SmoothingSpline(knots, std::move(coef), 0.0, 2.0);
  };

  SurrogateModel m;
  m.design_ = design;
  m.variance_kind_ = VarianceKind::constant;
  m.model_name_ = "linear";
  if (p == 1) {
    m.scalar_forward_ = line(0, a(0, 0), b[0]);
    m.variance_.push_back(VarianceSurface::constant(sigma(0, 0)));
    m.monotonicity_.sign = a(0, 0) >= 0 ? 1 : -1;
    m.monotonicity_.monotone = a(0, 0) != 0.0;
  } else {
    const RealVector c = design.box().center();
    for (Eigen::Index i = 0; i < p; ++i) {
      std::vector<SmoothingSpline> comps;
      for (Eigen::Index k = 0; k < p; ++k) comps.push_back(line(k, a(i, k), -a(i, k) * c[k]));
      m.additive_forward_.emplace_back(b[i] + a.row(i).dot(c), std::move(comps), true, 0);
    }
    m.sigma_ = sigma;
    const double det = a.partialPivLu().determinant();
    m.monotonicity_.sign = det >= 0 ? 1 : -1;
    m.monotonicity_.monotone = det != 0.0;
  }
  m.r2_.assign(static_cast<std::size_t>(p), 1.0);
  m.build_tables();
  m.finish_setup();
  return m;
}

std::optional<std::string> coverage_warning(const SurrogateModel& m, const RealVector& s_obs) {
  if (m.try_inverse(s_obs)) return std::nullopt;
  return "observed statistic " + describe(s_obs) +
         " is outside the fitted image of the pilot box; widen the box";
}

}  // namespace qlabc
