#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "qlabc/error.hpp"
#include "qlabc/models.hpp"

namespace qlabc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Marginal Marginal::normal(double mean, double sd) {
  if (!(sd > 0.0)) throw ConfigError("normal prior needs sd > 0");
  return {Kind::normal, mean, sd};
}

Marginal Marginal::uniform(double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("uniform prior needs hi > lo");
  return {Kind::uniform, lo, hi};
}

Marginal Marginal::log_exponential(double rate) {
  if (!(rate > 0.0)) throw ConfigError("exponential prior needs rate > 0");
  return {Kind::log_exponential, rate, 0.0};
}

double Marginal::log_pdf(double x) const {
  switch (kind) {
    case Kind::normal: {
      const double z = (x - a) / b;
      return -0.5 * z * z - std::log(b) - 0.5 * std::log(2.0 * M_PI);
    }
    case Kind::uniform:
      return (x >= a && x <= b) ? -std::log(b - a) : -kInf;
    case Kind::log_exponential:
      // X = e^x ~ Exp(rate): density rate e^x exp(-rate e^x).
      return std::log(a) + x - a * std::exp(x);
  }
  return -kInf;
}

double Marginal::cdf(double x) const {
  switch (kind) {
    case Kind::normal:
      return boost::math::cdf(boost::math::normal(a, b), x);
    case Kind::uniform:
      return x <= a ? 0.0 : x >= b ? 1.0 : (x - a) / (b - a);
    case Kind::log_exponential:
      return -std::expm1(-a * std::exp(x));
  }
  return 0.0;
}

double Marginal::quantile(double u) const {
  switch (kind) {
    case Kind::normal:
      return boost::math::quantile(boost::math::normal(a, b), u);
    case Kind::uniform:
      return a + u * (b - a);
    case Kind::log_exponential:
      return std::log(-std::log1p(-u) / a);
  }
  return 0.0;
}

Prior::Prior(std::vector<Marginal> marginals) : marginals_(std::move(marginals)) {}

Prior Prior::truncated(const Box& box) const {
  if (box.dim() != dim()) throw DimensionMismatch("prior truncation box has the wrong dimension");
  Prior out = *this;
  out.box_ = box;
  out.truncated_ = true;
  for (Eigen::Index j = 0; j < dim(); ++j) {
    const auto& m = marginals_[j];
    if (!(m.cdf(box.hi[j]) - m.cdf(box.lo[j]) > 0.0))
      throw ConfigError("prior has no mass inside the truncation box");
  }
  return out;
}

double Prior::log_density(const RealVector& theta) const {
  if (theta.size() != dim()) throw DimensionMismatch("prior: wrong parameter dimension");
  if (truncated_ && !box_.contains(theta)) return -kInf;
  double lp = 0.0;
  for (Eigen::Index j = 0; j < dim(); ++j) lp += marginals_[j].log_pdf(theta[j]);
  return lp;
}

RealVector Prior::sample(RandomStream& rng) const {
  RealVector theta(dim());
  for (Eigen::Index j = 0; j < dim(); ++j) {
    const auto& m = marginals_[j];
    double lo = 0.0, hi = 1.0;
    if (truncated_) {
      lo = m.cdf(box_.lo[j]);
      hi = m.cdf(box_.hi[j]);
    }
    double x = m.quantile(lo + (hi - lo) * rng.uniform());
    if (truncated_) x = std::clamp(x, box_.lo[j], box_.hi[j]);
    theta[j] = x;
  }
  return theta;
}

double Prior::cdf(Eigen::Index j, double x) const {
  const auto& m = marginals_[j];
  if (!truncated_) return m.cdf(x);
  if (x <= box_.lo[j]) return 0.0;
  if (x >= box_.hi[j]) return 1.0;
  const double lo = m.cdf(box_.lo[j]), hi = m.cdf(box_.hi[j]);
  return (m.cdf(x) - lo) / (hi - lo);
}

}  // namespace qlabc
