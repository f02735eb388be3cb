#pragma once

#include <array>
#include <optional>
#include <variant>
#include <vector>

#include "qlabc/numerics.hpp"

namespace qlabc {

// Penalty for fit_spline: nullopt selects it by generalized cross-validation.
using Penalty = std::optional<double>;

// Natural cubic smoothing spline stored as one cubic per knot interval:
// on [knot_i, knot_{i+1}], s(x) = c0 + c1 t + c2 t^2 + c3 t^3 with t = x - knot_i.
class SmoothingSpline {
 public:
  using Cubic = std::array<double, 4>;

  SmoothingSpline() = default;
  SmoothingSpline(std::vector<double> knots, std::vector<Cubic> coefficients, double penalty,
                  double edf = 0.0);

  double lo() const { return knots_.front(); }
  double hi() const { return knots_.back(); }
  bool in_domain(double x) const;

  // Throw OutOfDomain outside [lo, hi].
  double value(double x) const;
  double derivative(double x) const;

  // Natural extension: linear beyond the boundary knots, matching value and
  // slope there. Used where a stencil must straddle the boundary.
  double value_extended(double x) const;
  double derivative_extended(double x) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Cubic>& coefficients() const { return coef_; }
  double penalty() const { return penalty_; }
  double edf() const { return edf_; }

  // Adds c to the function (used when centering additive components).
  void shift(double c);

 private:
  std::size_t interval(double x) const;

  std::vector<double> knots_;
  std::vector<Cubic> coef_;
  double penalty_ = 0.0;
  double edf_ = 0.0;
};

// Penalized least squares cubic smoothing spline with knots at the distinct x
// values. Needs at least 10 points spanning a non-zero range.
SmoothingSpline fit_spline(const std::vector<double>& x, const std::vector<double>& y,
                           Penalty penalty = std::nullopt);

// Precomputed grouping of a design column into its distinct values; reused
// across backfitting sweeps.
struct SplineGrouping {
  std::vector<double> unique_x;
  std::vector<std::size_t> group;  // observation -> index into unique_x
  std::vector<double> counts;

  static SplineGrouping from(const std::vector<double>& x);
};

SmoothingSpline fit_spline_grouped(const SplineGrouping& grouping, const std::vector<double>& y,
                                   Penalty penalty = std::nullopt);

// intercept + sum_j component_j(theta_j), components centered over the
// training design.
class AdditiveSurface {
 public:
  AdditiveSurface() = default;
  AdditiveSurface(double intercept, std::vector<SmoothingSpline> components, bool converged = true,
                  int sweeps = 0);

  Eigen::Index input_dim() const { return static_cast<Eigen::Index>(components_.size()); }
  double value(const RealVector& theta) const;
  double value_extended(const RealVector& theta) const;
  // Analytic gradient from the component derivatives.
  RealVector gradient(const RealVector& theta) const;

  double intercept() const { return intercept_; }
  const std::vector<SmoothingSpline>& components() const { return components_; }
  bool converged() const { return converged_; }
  int sweeps() const { return sweeps_; }

 private:
  double intercept_ = 0.0;
  std::vector<SmoothingSpline> components_;
  bool converged_ = true;
  int sweeps_ = 0;
};

struct BackfitOptions {
  double tolerance = 1e-6;
  int max_sweeps = 100;
  // Penalties are reselected by GCV for this many sweeps, then frozen.
  int reselect_sweeps = 5;
};

// Gauss-Seidel backfitting of y on the columns of design. A non-converged fit
// is returned with converged() == false rather than thrown.
AdditiveSurface fit_additive(const RealMatrix& design, const RealVector& y,
                             const BackfitOptions& opts = {});

enum class VarianceKind { constant, smooth };

VarianceKind parse_variance_kind(const std::string& name);
std::string to_string(VarianceKind kind);

// Strictly positive variance model. The smooth kind stores a fit of
// log(e^2 + floor) and evaluates exp of it.
class VarianceSurface {
 public:
  static constexpr double kFloor = 1e-12;
  using LogModel = std::variant<std::monostate, SmoothingSpline, AdditiveSurface>;

  VarianceSurface() = default;
  static VarianceSurface constant(double value);
  static VarianceSurface smooth(LogModel model);

  VarianceKind kind() const { return kind_; }
  double constant_value() const { return constant_; }
  const LogModel& log_model() const { return log_model_; }

  double value(const RealVector& theta) const;

 private:
  VarianceKind kind_ = VarianceKind::constant;
  double constant_ = 1.0;
  LogModel log_model_;
};

VarianceSurface fit_variance(const RealMatrix& design, const RealVector& residuals,
                             VarianceKind kind);

}  // namespace qlabc
