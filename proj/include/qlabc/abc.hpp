#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qlabc/models.hpp"
#include "qlabc/numerics.hpp"
#include "qlabc/surrogate.hpp"

namespace qlabc {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Proposals

class Proposal {
 public:
  virtual ~Proposal() = default;

  virtual Eigen::Index dim() const = 0;
  // A draw from q(. | from), or nullopt when the draw has no preimage (the
  // chain treats that as a rejection).
  virtual std::optional<RealVector> propose(const RealVector& from, RandomStream& rng) const = 0;
  // log q(to | from); -inf where the move is impossible.
  virtual double log_density(const RealVector& to, const RealVector& from) const = 0;
  // Starting point implied by the observed statistics. The default throws
  // InitFailed.
  virtual RealVector initial_state(const RealVector& s_obs) const;
};

// Random-walk quasi-likelihood proposal: f* ~ N(f(from), c^2 Sigma(from)),
// theta* = f^-1(f*), with density N(f(to); f(from), c^2 Sigma(from)) |J(to)|.
class QLProposal : public Proposal {
 public:
  explicit QLProposal(std::shared_ptr<const SurrogateModel> surrogate, double scale = 1.0);

  Eigen::Index dim() const override { return surrogate_->dim(); }
  std::optional<RealVector> propose(const RealVector& from, RandomStream& rng) const override;
  double log_density(const RealVector& to, const RealVector& from) const override;
  RealVector initial_state(const RealVector& s_obs) const override;

  const SurrogateModel& surrogate() const { return *surrogate_; }
  double scale() const { return scale_; }

 private:
  std::shared_ptr<const SurrogateModel> surrogate_;
  double scale_;
};

// Independence version centred at s_obs: f* ~ N(s_obs, c^2 Sigma_c). Sigma_c
// is the variance at f^-1(s_obs) (the constant Sigma in constant mode). Used
// for importance sampling, epsilon selection and independence MH.
class QLImportance : public Proposal {
 public:
  QLImportance(std::shared_ptr<const SurrogateModel> surrogate, RealVector s_obs, double scale = 1.0);

  Eigen::Index dim() const override { return surrogate_->dim(); }
  std::optional<RealVector> draw(RandomStream& rng) const;
  double log_density(const RealVector& theta) const;
  std::optional<RealVector> propose(const RealVector&, RandomStream& rng) const override { return draw(rng); }
  double log_density(const RealVector& to, const RealVector&) const override { return log_density(to); }
  RealVector initial_state(const RealVector& s_obs) const override;

  const SurrogateModel& surrogate() const { return *surrogate_; }
  const RealVector& s_obs() const { return s_obs_; }
  const RealVector& center() const { return center_; }
  bool inverse_exists() const { return inverse_exists_; }

 private:
  std::shared_ptr<const SurrogateModel> surrogate_;
  RealVector s_obs_;
  RealVector center_;
  bool inverse_exists_ = true;
  RealMatrix chol_;
};

// Plain Gaussian random walk with a fixed covariance.
class GaussianRandomWalk : public Proposal {
 public:
  explicit GaussianRandomWalk(const RealMatrix& covariance);

  Eigen::Index dim() const override { return chol_.rows(); }
  std::optional<RealVector> propose(const RealVector& from, RandomStream& rng) const override;
  double log_density(const RealVector& to, const RealVector& from) const override;

 private:
  RealMatrix chol_;
};

// ---------------------------------------------------------------------------
// Distances

struct DistanceSpec {
  enum class Kind { euclidean, pedigree_weighted };
  Kind kind = Kind::euclidean;
  RealVector s_obs;
  std::vector<std::uint8_t> genotypes;  // pedigree_weighted only

  static DistanceSpec euclidean(RealVector s_obs);
  static DistanceSpec pedigree_weighted(RealVector s_obs, std::vector<std::uint8_t> genotypes);
};

// Euclidean norm of s - s_obs, times 1 - (matching genotypes)/n for the
// pedigree kind.
double distance(const DistanceSpec& spec, const RealVector& s,
                const std::vector<std::uint8_t>& genotypes = {});
double distance(const DistanceSpec& spec, const SimOutput& out);

// ---------------------------------------------------------------------------
// ABC-MCMC

struct ChainConfig {
  std::size_t iterations = 10000;
  double epsilon = kInfinity;
  std::optional<RealVector> init;  // nullopt: start from the observation
  std::uint64_t master_seed = 1;
  std::uint64_t stream = streams::kChain;
  std::size_t thinning = 1;
};

// One row per recorded iteration (every thinning-th). accepted[t] is true when
// any move was accepted since the previous recorded row; distances and log
// densities are those of the recorded iteration, NaN when the proposal was
// rejected before simulating.
struct ChainOutput {
  RealVector initial;
  RealMatrix states;
  std::vector<std::size_t> iterations;
  std::vector<bool> accepted;
  std::vector<double> distances;
  std::vector<double> logq_forward;
  std::vector<double> logq_reverse;
  double acceptance_rate = 0.0;  // over all iterations
  std::size_t simulations = 0;
  std::size_t outside_image = 0;

  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

ChainOutput abc_mcmc(const Simulator& sim, const Prior& prior, const Proposal& proposal,
                     const DistanceSpec& dist, const ChainConfig& cfg);

// ---------------------------------------------------------------------------
// Rejection and importance sampling

struct RejectionSample {
  RealMatrix thetas;
  std::vector<double> distances;
  std::size_t simulations = 0;
  double epsilon = 0.0;

  double acceptance_fraction() const {
    return simulations ? static_cast<double>(thetas.rows()) / static_cast<double>(simulations) : 0.0;
  }
};

// Keeps prior draws with rho < epsilon.
RejectionSample abc_rejection(const Simulator& sim, const Prior& prior, double epsilon, std::size_t n,
                              const DistanceSpec& dist, RandomStream& rng);
// Keeps the `keep` draws closest to s_obs; epsilon is the largest kept distance.
RejectionSample abc_rejection_nearest(const Simulator& sim, const Prior& prior, std::size_t n,
                                      std::size_t keep, const DistanceSpec& dist, RandomStream& rng);

struct WeightedSample {
  RealMatrix thetas;
  std::vector<double> weights;  // normalised to sum 1
  std::vector<double> distances;
  std::size_t simulations = 0;
  std::size_t outside_image = 0;
  std::size_t accepted = 0;

  // Kish effective sample size of the weights.
  double ess() const;
  RealVector mean() const;
  // Delta-method standard error of the self-normalised mean.
  RealVector mean_se() const;
};

// n draws theta_i = f^-1(s_obs + z sigma) (failed inversions are redrawn),
// weights pi(theta_i) 1{rho_i < epsilon} / q(theta_i). Throws AllWeightsZero.
WeightedSample abc_importance_sampling(const QLImportance& proposal, const Simulator& sim,
                                       const Prior& prior, double epsilon, std::size_t n,
                                       const DistanceSpec& dist, RandomStream& rng);

struct EpsilonChoice {
  double epsilon = 0.0;
  double quantile = 0.0;
  std::vector<double> distances;  // sorted
  // Order-statistic standard error of the quantile.
  double standard_error = 0.0;
};

EpsilonChoice select_epsilon(const QLImportance& proposal, const Simulator& sim, double q, std::size_t n,
                             const DistanceSpec& dist, RandomStream& rng);
// Same rule on the distances of an epsilon = inf chain of n iterations; for
// observations whose f^-1(s_obs) does not exist. Skipped steps do not count.
EpsilonChoice select_epsilon_chain(const Simulator& sim, const Prior& prior, const Proposal& proposal, double q,
                                   std::size_t n, const DistanceSpec& dist, const ChainConfig& cfg);

struct RateSearch {
  double epsilon = 0.0;
  double rate = 0.0;
  int rounds = 0;
  bool in_band = false;
};

// Bisection on epsilon (over quantiles of the distances seen by an epsilon =
// inf trial chain) until a trial chain's acceptance rate is within
// [lo_rate, hi_rate]. Trials reuse cfg's seed and stream.
RateSearch tune_epsilon_rate(const Simulator& sim, const Prior& prior, const Proposal& proposal,
                             const DistanceSpec& dist, const ChainConfig& cfg, double lo_rate = 0.2,
                             double hi_rate = 0.4, std::size_t trial_iterations = 3000,
                             int max_rounds = 30);

// ---------------------------------------------------------------------------
// Summaries

// log(#{theta_j > 0} / #{theta_j < 0}) over states after the burn-in fraction.
double log_bayes_factor(const RealMatrix& states, Eigen::Index j, double burn_in = 0.1);
double log_bayes_factor(const ChainOutput& chain, Eigen::Index j, double burn_in = 0.1);

// Max |int_{c0}^theta A(t) Psi(s_obs; t) dt - (K(theta) - K(c0))| over the
// grid, K = -(f - s_obs)^2 / (2 sigma^2), c0 = min(grid), composite Simpson
// with `panels` panels per integral. sigma^2 is multiplied by sigma2_scale.
double verify_proposition1(const SurrogateModel& m, double s_obs, const std::vector<double>& grid,
                           int panels = 10000, double sigma2_scale = 1.0);

double autocorrelation(const std::vector<double>& x, std::size_t lag);
// Geyer initial positive sequence estimate; 1 for a constant series.
double effective_sample_size(const std::vector<double>& x);
double sample_quantile(std::vector<double> x, double p);

struct CoordinateSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double lag1 = 0.0;
  double ess = 0.0;
  double mean_se = 0.0;  // sd / sqrt(ess)
};

struct ChainSummary {
  std::size_t total_states = 0;
  std::size_t kept_states = 0;
  double acceptance_rate = 0.0;
  std::vector<CoordinateSummary> coords;
};

ChainSummary diagnostics(const ChainOutput& chain, double burn_in = 0.1);
ChainSummary diagnostics(const RealMatrix& states, double acceptance_rate, double burn_in = 0.1);

// Kolmogorov-Smirnov distance between a sample and a CDF.
double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf);

}  // namespace qlabc
