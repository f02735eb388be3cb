#include <cmath>

#include "qlabc/abc.hpp"
#include "qlabc/error.hpp"

namespace qlabc {

namespace {

// try_inverse(s, hint) is deterministic, so each hint reaches one branch of
// a folded surrogate. A point off that branch cannot be proposed from the
// hint and gets density zero; this keeps the MH ratio reversible.
bool on_branch(const SurrogateModel& m, const RealVector& to, const RealVector& hint) {
  const auto back = m.try_inverse(m.forward(to), hint);
  if (!back) return false;
  const Box& box = m.domain();
  for (Eigen::Index k = 0; k < to.size(); ++k)
    if (std::abs((*back)[k] - to[k]) > 1e-4 * (box.hi[k] - box.lo[k])) return false;
  return true;
}

}  // namespace

RealVector Proposal::initial_state(const RealVector&) const {
  throw InitFailed("this proposal cannot derive a starting point from s_obs; give an explicit init");
}

QLProposal::QLProposal(std::shared_ptr<const SurrogateModel> surrogate, double scale)
    : surrogate_(std::move(surrogate)), scale_(scale) {
  if (!surrogate_) throw ConfigError("QL proposal needs a surrogate");
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw ConfigError("proposal scale must be positive");
}

std::optional<RealVector> QLProposal::propose(const RealVector& from, RandomStream& rng) const {
  const SurrogateModel& m = *surrogate_;
  const RealVector mean = m.forward(from);
  const RealVector f_star = sample_mvn(mean, scale_ * m.variance_chol(from), rng);
  return m.try_inverse(f_star, from);
}

double QLProposal::log_density(const RealVector& to, const RealVector& from) const {
  const SurrogateModel& m = *surrogate_;
  if (!m.in_domain(to) || !m.in_domain(from)) return -kInfinity;
  const double logdet = m.jacobian_logdet(to);
  if (!std::isfinite(logdet) || !on_branch(m, to, from)) return -kInfinity;
  return mvn_logpdf(m.forward(to), m.forward(from), scale_ * m.variance_chol(from)) + logdet;
}

RealVector QLProposal::initial_state(const RealVector& s_obs) const {
  auto theta = surrogate_->try_inverse(s_obs);
  if (!theta)
    throw InitFailed("s_obs is outside the fitted image, so f^-1(s_obs) does not exist; widen the pilot box "
                     "or give an explicit init");
  return *theta;
}

QLImportance::QLImportance(std::shared_ptr<const SurrogateModel> surrogate, RealVector s_obs, double scale)
    : surrogate_(std::move(surrogate)), s_obs_(std::move(s_obs)) {
  if (!surrogate_) throw ConfigError("QL importance proposal needs a surrogate");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("proposal scale must be positive");
  if (s_obs_.size() != surrogate_->dim()) throw DimensionMismatch("s_obs has the wrong dimension");
  // Outside the fitted image the variance is taken at the lattice point whose
  // fitted value is nearest to s_obs.
  auto c = surrogate_->try_inverse(s_obs_);
  inverse_exists_ = c.has_value();
  center_ = c ? *c : surrogate_->closest_lattice_point(s_obs_);
  chol_ = scale * surrogate_->variance_chol(center_);
}

std::optional<RealVector> QLImportance::draw(RandomStream& rng) const {
  return surrogate_->try_inverse(sample_mvn(s_obs_, chol_, rng), center_);
}

double QLImportance::log_density(const RealVector& theta) const {
  const SurrogateModel& m = *surrogate_;
  if (!m.in_domain(theta)) return -kInfinity;
  const double logdet = m.jacobian_logdet(theta);
  if (!std::isfinite(logdet) || !on_branch(m, theta, center_)) return -kInfinity;
  return mvn_logpdf(m.forward(theta), s_obs_, chol_) + logdet;
}

RealVector QLImportance::initial_state(const RealVector&) const {
  if (!inverse_exists_) throw InitFailed("s_obs is outside the fitted image; give an explicit init");
  return center_;
}

GaussianRandomWalk::GaussianRandomWalk(const RealMatrix& covariance) : chol_(cholesky_factor(covariance)) {}

std::optional<RealVector> GaussianRandomWalk::propose(const RealVector& from, RandomStream& rng) const {
  return sample_mvn(from, chol_, rng);
}

double GaussianRandomWalk::log_density(const RealVector& to, const RealVector& from) const {
  return mvn_logpdf(to, from, chol_);
}

}  // namespace qlabc
