#include <cmath>

#include "qlabc/error.hpp"
#include "qlabc/smoothers.hpp"

namespace qlabc {

VarianceKind parse_variance_kind(const std::string& name) {
  if (name == "constant") return VarianceKind::constant;
  if (name == "smooth") return VarianceKind::smooth;
  throw ConfigError("unknown variance mode '" + name + "' (expected constant or smooth)");
}

std::string to_string(VarianceKind kind) {
  return kind == VarianceKind::constant ? "constant" : "smooth";
}

VarianceSurface VarianceSurface::constant(double value) {
  VarianceSurface v;
  v.kind_ = VarianceKind::constant;
  v.constant_ = std::max(value, kFloor);
  return v;
}

VarianceSurface VarianceSurface::smooth(LogModel model) {
  VarianceSurface v;
  v.kind_ = VarianceKind::smooth;
  v.log_model_ = std::move(model);
  return v;
}

double VarianceSurface::value(const RealVector& theta) const {
  if (kind_ == VarianceKind::constant) return constant_;
  double log_v = 0.0;
  if (const auto* s = std::get_if<SmoothingSpline>(&log_model_)) {
    if (theta.size() != 1) throw DimensionMismatch("scalar variance surface needs p = 1");
    log_v = s->value(theta[0]);
  } else if (const auto* a = std::get_if<AdditiveSurface>(&log_model_)) {
    log_v = a->value(theta);
  } else {
    throw SchemaMismatch("smooth variance surface without a log model");
  }
  // exp of a finite fit is positive; the floor also covers underflow.
  return std::max(std::exp(log_v), kFloor);
}

VarianceSurface fit_variance(const RealMatrix& design, const RealVector& residuals,
                             VarianceKind kind) {
  if (design.rows() != residuals.size())
    throw DimensionMismatch("fit_variance: design rows and residuals differ");
  if (residuals.size() < 10) throw InsufficientData("fit_variance needs at least 10 residuals");

  if (kind == VarianceKind::constant) return VarianceSurface::constant(residuals.squaredNorm() / static_cast<double>(residuals.size()));

  RealVector log_sq(residuals.size());
  for (Eigen::Index i = 0; i < residuals.size(); ++i)
    log_sq[i] = std::log(residuals[i] * residuals[i] + VarianceSurface::kFloor);

  if (design.cols() == 1) {
    std::vector<double> x(design.col(0).data(), design.col(0).data() + design.rows());
    std::vector<double> y(log_sq.data(), log_sq.data() + log_sq.size());
    return VarianceSurface::smooth(fit_spline(x, y));
  }
  return VarianceSurface::smooth(fit_additive(design, log_sq));
}

}  // namespace qlabc
