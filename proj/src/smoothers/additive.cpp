#include <algorithm>
#include <cmath>
#include <sstream>

#include "qlabc/error.hpp"
#include "qlabc/smoothers.hpp"

namespace qlabc {

AdditiveSurface::AdditiveSurface(double intercept, std::vector<SmoothingSpline> components,
                                 bool converged, int sweeps)
    : intercept_(intercept), components_(std::move(components)), converged_(converged),
      sweeps_(sweeps) {}

double AdditiveSurface::value(const RealVector& theta) const {
  if (theta.size() != input_dim()) throw DimensionMismatch("additive surface: wrong input dim");
  double v = intercept_;
  for (Eigen::Index j = 0; j < theta.size(); ++j) v += components_[j].value(theta[j]);
  return v;
}

double AdditiveSurface::value_extended(const RealVector& theta) const {
  if (theta.size() != input_dim()) throw DimensionMismatch("additive surface: wrong input dim");
  double v = intercept_;
  for (Eigen::Index j = 0; j < theta.size(); ++j) v += components_[j].value_extended(theta[j]);
  return v;
}

RealVector AdditiveSurface::gradient(const RealVector& theta) const {
  if (theta.size() != input_dim()) throw DimensionMismatch("additive surface: wrong input dim");
  RealVector g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) g[j] = components_[j].derivative(theta[j]);
  return g;
}

AdditiveSurface fit_additive(const RealMatrix& design, const RealVector& y,
                             const BackfitOptions& opts) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) throw DimensionMismatch("fit_additive: design rows and response differ");
  if (n < 10) throw InsufficientData("fit_additive needs at least 10 rows");

  std::vector<SplineGrouping> groups;
  groups.reserve(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(design.col(j).data(), design.col(j).data() + n);
    groups.push_back(SplineGrouping::from(col));
    if (groups.back().unique_x.size() < 10) {
      std::ostringstream os;
      os << "fit_additive: design column " << j << " has only " << groups.back().unique_x.size()
         << " distinct values (need 10)";
      throw InsufficientData(os.str());
    }
  }

  const double intercept = y.mean();
  std::vector<RealVector> fitted(p, RealVector::Zero(n));
  std::vector<SmoothingSpline> comps(p);
  std::vector<Penalty> frozen(p);
  RealVector total = RealVector::Zero(n);  // sum of all component fits

  bool converged = false;
  int sweep = 0;
  std::vector<double> partial(n);
  while (sweep < opts.max_sweeps && !converged) {
    ++sweep;
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) partial[i] = y[i] - intercept - (total[i] - fitted[j][i]);
      const Penalty pen = sweep > opts.reselect_sweeps ? frozen[j] : Penalty{};
      SmoothingSpline s = fit_spline_grouped(groups[j], partial, pen);
      if (sweep <= opts.reselect_sweeps) {
        // A zero penalty comes from a constant partial residual; keep GCV then.
        frozen[j] = s.penalty() > 0.0 ? Penalty{s.penalty()} : Penalty{};
      }

      const auto& g = groups[j];
      std::vector<double> at_unique(g.unique_x.size());
      for (std::size_t k = 0; k < at_unique.size(); ++k) at_unique[k] = s.value(g.unique_x[k]);
      RealVector fj(n);
      for (Eigen::Index i = 0; i < n; ++i) fj[i] = at_unique[g.group[i]];
      const double centre = fj.mean();
      fj.array() -= centre;
      s.shift(-centre);

      max_change = std::max(max_change, (fj - fitted[j]).cwiseAbs().maxCoeff());
      total += fj - fitted[j];
      fitted[j] = std::move(fj);
      comps[j] = std::move(s);
    }
    converged = max_change < opts.tolerance;
  }
  return AdditiveSurface(intercept, std::move(comps), converged, sweep);
}

}  // namespace qlabc
