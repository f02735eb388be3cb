#include <cmath>
#include <numbers>
#include <sstream>

#include "qlabc/error.hpp"
#include "qlabc/numerics.hpp"

namespace qlabc {

Box::Box(RealVector lower, RealVector upper) : lo(std::move(lower)), hi(std::move(upper)) {
  if (lo.size() != hi.size()) throw DimensionMismatch("box bounds differ in dimension");
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || !(lo[j] < hi[j])) {
      std::ostringstream os;
      os << "invalid box along coordinate " << j << ": [" << lo[j] << ", " << hi[j] << "]";
      throw ConfigError(os.str());
    }
  }
}

bool Box::contains(const RealVector& x) const {
  if (x.size() != lo.size()) return false;
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (!(x[j] >= lo[j] && x[j] <= hi[j])) return false;
  return true;
}

RealVector Box::clamp(const RealVector& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

bool all_finite(const RealVector& v) { return v.allFinite(); }

RealMatrix cholesky_factor(const RealMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("cholesky_factor needs a square matrix");
  const Eigen::Index n = m.rows();
  const double scale = std::max(std::abs(m.diagonal().sum()), m.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-10 * std::max(1.0, scale))
        throw NotPositiveDefinite("cholesky_factor: matrix is not symmetric");

  const double pivot_floor = 1e-12 * m.diagonal().sum() / static_cast<double>(n);
  RealMatrix l = RealMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > pivot_floor) || !(d > 0.0)) {
      std::ostringstream os;
      os << "cholesky_factor: pivot " << j << " = " << d << " is not positive";
      throw NotPositiveDefinite(os.str());
    }
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

RealVector sample_mvn(const RealVector& mean, const RealMatrix& chol_lower, RandomStream& rng) {
  if (chol_lower.rows() != mean.size() || chol_lower.cols() != mean.size())
    throw DimensionMismatch("sample_mvn: mean and factor dimensions differ");
  RealVector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + chol_lower.triangularView<Eigen::Lower>() * z;
}

double mvn_logpdf(const RealVector& x, const RealVector& mean, const RealMatrix& chol_lower) {
  if (x.size() != mean.size() || chol_lower.rows() != mean.size())
    throw DimensionMismatch("mvn_logpdf: dimensions differ");
  const RealVector z = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det = chol_lower.diagonal().array().log().sum();
  const double p = static_cast<double>(x.size());
  return -0.5 * z.squaredNorm() - log_det - 0.5 * p * std::log(2.0 * std::numbers::pi);
}

}  // namespace qlabc
