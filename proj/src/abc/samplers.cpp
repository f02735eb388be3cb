#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qlabc/abc.hpp"
#include "qlabc/error.hpp"

namespace qlabc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_dims(const Simulator& sim, const Prior& prior, const DistanceSpec& dist, Eigen::Index p) {
  if (sim.dim() != p || prior.dim() != p || dist.s_obs.size() != p) {
    std::ostringstream os;
    os << "dimension mismatch: simulator " << sim.dim() << ", prior " << prior.dim() << ", s_obs "
       << dist.s_obs.size() << ", proposal " << p;
    throw DimensionMismatch(os.str());
  }
}

// Draw from the s_obs-centred proposal until it lands in the image.
RealVector draw_centred(const QLImportance& q, RandomStream& rng, std::size_t& outside, std::size_t budget) {
  for (std::size_t attempt = 0; attempt < budget; ++attempt) {
    if (auto theta = q.draw(rng)) return *theta;
    ++outside;
  }
  throw OutsideImage("the s_obs-centred proposal keeps falling outside the fitted image; widen the pilot box");
}

}  // namespace

// ---------------------------------------------------------------------------

DistanceSpec DistanceSpec::euclidean(RealVector s_obs) {
  DistanceSpec d;
  d.kind = Kind::euclidean;
  d.s_obs = std::move(s_obs);
  return d;
}

DistanceSpec DistanceSpec::pedigree_weighted(RealVector s_obs, std::vector<std::uint8_t> genotypes) {
  DistanceSpec d;
  d.kind = Kind::pedigree_weighted;
  d.s_obs = std::move(s_obs);
  d.genotypes = std::move(genotypes);
  if (d.genotypes.empty()) throw ConfigError("pedigree-weighted distance needs observed genotypes");
  return d;
}

double distance(const DistanceSpec& spec, const RealVector& s, const std::vector<std::uint8_t>& genotypes) {
  if (s.size() != spec.s_obs.size()) throw DimensionMismatch("distance: statistic dimensions differ");
  const double norm = (s - spec.s_obs).norm();
  if (spec.kind == DistanceSpec::Kind::euclidean) return norm;
  if (genotypes.size() != spec.genotypes.size())
    throw DimensionMismatch("distance: genotype vectors differ in length");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < genotypes.size(); ++i) matches += genotypes[i] == spec.genotypes[i];
  return norm * (1.0 - static_cast<double>(matches) / static_cast<double>(genotypes.size()));
}

double distance(const DistanceSpec& spec, const SimOutput& out) { return distance(spec, out.stats, out.genotypes); }

// ---------------------------------------------------------------------------

ChainOutput abc_mcmc(const Simulator& sim, const Prior& prior, const Proposal& proposal,
                     const DistanceSpec& dist, const ChainConfig& cfg) {
  const Eigen::Index p = proposal.dim();
  check_dims(sim, prior, dist, p);
  if (cfg.iterations < 1) throw ConfigError("chain needs at least one iteration");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (cfg.thinning < 1 || cfg.thinning > cfg.iterations)
    throw ConfigError("thinning must be between 1 and the number of iterations");

  RealVector current = cfg.init ? *cfg.init : proposal.initial_state(dist.s_obs);
  if (current.size() != p) throw DimensionMismatch("initial state has the wrong dimension");
  double lp_current = prior.log_density(current);
  if (!std::isfinite(lp_current)) throw InitFailed("initial state has zero prior density");

  RandomStream rng(cfg.master_seed, cfg.stream);
  ChainOutput out;
  out.initial = current;
  const std::size_t rows = cfg.iterations / cfg.thinning;
  out.states.resize(static_cast<Eigen::Index>(rows), p);
  out.iterations.reserve(rows);
  out.accepted.reserve(rows);
  out.distances.reserve(rows);
  out.logq_forward.reserve(rows);
  out.logq_reverse.reserve(rows);

  std::size_t n_accepted = 0;
  bool moved_since_record = false;
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    double rho = kNaN, lq_fwd = kNaN, lq_rev = kNaN;
    bool accept = false;
    const auto candidate = proposal.propose(current, rng);
    if (!candidate) {
      ++out.outside_image;
    } else {
      const double lp_new = prior.log_density(*candidate);
      if (lp_new > -kInfinity) {
        const SimOutput s = sim.simulate(*candidate, rng);
        ++out.simulations;
        rho = distance(dist, s);
        lq_fwd = proposal.log_density(*candidate, current);
        lq_rev = proposal.log_density(current, *candidate);
        const double u = rng.uniform();
        if (rho < cfg.epsilon && std::isfinite(lq_fwd)) {
          const double log_ratio = (lp_new + lq_rev) - (lp_current + lq_fwd);
          accept = std::log(u) < log_ratio;
        }
        if (accept) {
          current = *candidate;
          lp_current = lp_new;
        }
      }
    }
    n_accepted += accept;
    moved_since_record = moved_since_record || accept;
    if (t % cfg.thinning == 0) {
      out.states.row(static_cast<Eigen::Index>(out.iterations.size())) = current.transpose();
      out.iterations.push_back(t);
      out.accepted.push_back(moved_since_record);
      out.distances.push_back(rho);
      out.logq_forward.push_back(lq_fwd);
      out.logq_reverse.push_back(lq_rev);
      moved_since_record = false;
    }
  }
  out.acceptance_rate = static_cast<double>(n_accepted) / static_cast<double>(cfg.iterations);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct PriorDraws {
  RealMatrix thetas;
  std::vector<double> distances;
};

PriorDraws simulate_from_prior(const Simulator& sim, const Prior& prior, std::size_t n, const DistanceSpec& dist,
                               RandomStream& rng) {
  check_dims(sim, prior, dist, prior.dim());
  PriorDraws d;
  d.thetas.resize(static_cast<Eigen::Index>(n), prior.dim());
  d.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RealVector theta = prior.sample(rng);
    d.thetas.row(static_cast<Eigen::Index>(i)) = theta.transpose();
    d.distances[i] = distance(dist, sim.simulate(theta, rng));
  }
  return d;
}

RejectionSample select_rows(const PriorDraws& d, const std::vector<std::size_t>& keep, std::size_t n) {
  RejectionSample r;
  r.simulations = n;
  r.thetas.resize(static_cast<Eigen::Index>(keep.size()), d.thetas.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    r.thetas.row(static_cast<Eigen::Index>(k)) = d.thetas.row(static_cast<Eigen::Index>(keep[k]));
    r.distances.push_back(d.distances[keep[k]]);
  }
  return r;
}

}  // namespace

RejectionSample abc_rejection(const Simulator& sim, const Prior& prior, double epsilon, std::size_t n,
                              const DistanceSpec& dist, RandomStream& rng) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  const PriorDraws d = simulate_from_prior(sim, prior, n, dist, rng);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (d.distances[i] < epsilon) keep.push_back(i);
  RejectionSample r = select_rows(d, keep, n);
  r.epsilon = epsilon;
  return r;
}

RejectionSample abc_rejection_nearest(const Simulator& sim, const Prior& prior, std::size_t n,
                                      std::size_t keep, const DistanceSpec& dist, RandomStream& rng) {
  if (keep < 1 || keep > n) throw ConfigError("rejection must keep between 1 and n draws");
  const PriorDraws d = simulate_from_prior(sim, prior, n, dist, rng);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d.distances[a] < d.distances[b]; });
  order.resize(keep);
  RejectionSample r = select_rows(d, order, n);
  r.epsilon = r.distances.back();
  return r;
}

// ---------------------------------------------------------------------------

double WeightedSample::ess() const {
  double s2 = 0.0;
  for (double w : weights) s2 += w * w;
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

RealVector WeightedSample::mean() const {
  RealVector m = RealVector::Zero(thetas.cols());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) m += weights[i] * thetas.row(i).transpose();
  return m;
}

RealVector WeightedSample::mean_se() const {
  const RealVector m = mean();
  RealVector v = RealVector::Zero(thetas.cols());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i)
    v += (weights[i] * weights[i]) * (thetas.row(i).transpose() - m).cwiseAbs2();
  return v.cwiseSqrt();
}

WeightedSample abc_importance_sampling(const QLImportance& proposal, const Simulator& sim,
                                       const Prior& prior, double epsilon, std::size_t n,
                                       const DistanceSpec& dist, RandomStream& rng) {
  check_dims(sim, prior, dist, proposal.dim());
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (n < 1) throw ConfigError("importance sampling needs at least one draw");
  WeightedSample out;
  out.thetas.resize(static_cast<Eigen::Index>(n), proposal.dim());
  out.distances.resize(n);
  std::vector<double> logw(n, -kInfinity);
  const std::size_t budget = 100 * n + 1000;
  for (std::size_t i = 0; i < n; ++i) {
    const RealVector theta = draw_centred(proposal, rng, out.outside_image, budget);
    out.thetas.row(static_cast<Eigen::Index>(i)) = theta.transpose();
    out.distances[i] = distance(dist, sim.simulate(theta, rng));
    ++out.simulations;
    if (!(out.distances[i] < epsilon)) continue;
    const double lp = prior.log_density(theta);
    const double lq = proposal.log_density(theta);
    if (lp > -kInfinity && std::isfinite(lq)) {
      logw[i] = lp - lq;
      ++out.accepted;
    }
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  if (!(top > -kInfinity)) {
    std::ostringstream os;
    os << "no importance draw passed epsilon = " << epsilon << " (" << n << " draws); increase epsilon or n";
    throw AllWeightsZero(os.str());
  }
  out.weights.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += out.weights[i] = std::exp(logw[i] - top);
  for (double& w : out.weights) w /= total;
  return out;
}

namespace {

void finish_choice(EpsilonChoice& c) {
  std::sort(c.distances.begin(), c.distances.end());
  const double q = c.quantile;
  c.epsilon = sample_quantile(c.distances, q);
  // Discrete statistics put the quantile on an attained distance; acceptance
  // is rho < epsilon, so step past it or those draws could never be accepted.
  if (std::binary_search(c.distances.begin(), c.distances.end(), c.epsilon))
    c.epsilon = std::nextafter(c.epsilon, kInfinity);
  // Half the spread of the order statistics one binomial sd either side.
  const double nn = static_cast<double>(c.distances.size());
  const double delta = std::sqrt(nn * q * (1.0 - q)) / nn;
  c.standard_error =
      0.5 * (sample_quantile(c.distances, std::min(1.0, q + delta)) - sample_quantile(c.distances, std::max(0.0, q - delta)));
}

}  // namespace

EpsilonChoice select_epsilon(const QLImportance& proposal, const Simulator& sim, double q, std::size_t n,
                             const DistanceSpec& dist, RandomStream& rng) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("epsilon quantile must lie in (0, 1)");
  if (n < 2) throw ConfigError("epsilon selection needs at least two draws");
  if (sim.dim() != proposal.dim() || dist.s_obs.size() != proposal.dim())
    throw DimensionMismatch("epsilon selection: dimensions differ");
  EpsilonChoice c;
  c.quantile = q;
  c.distances.reserve(n);
  std::size_t outside = 0;
  const std::size_t budget = 100 * n + 1000;
  for (std::size_t i = 0; i < n; ++i) {
    const RealVector theta = draw_centred(proposal, rng, outside, budget);
    c.distances.push_back(distance(dist, sim.simulate(theta, rng)));
  }
  finish_choice(c);
  return c;
}

EpsilonChoice select_epsilon_chain(const Simulator& sim, const Prior& prior, const Proposal& proposal, double q,
                                   std::size_t n, const DistanceSpec& dist, const ChainConfig& cfg) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("epsilon quantile must lie in (0, 1)");
  if (n < 2) throw ConfigError("epsilon selection needs at least two draws");
  ChainConfig probe = cfg;
  probe.iterations = n;
  probe.thinning = 1;
  probe.epsilon = kInfinity;
  const ChainOutput chain = abc_mcmc(sim, prior, proposal, dist, probe);
  EpsilonChoice c;
  c.quantile = q;
  for (double r : chain.distances)
    if (std::isfinite(r)) c.distances.push_back(r);
  if (c.distances.size() < 2) throw SimulationError("probe chain produced fewer than two simulations");
  finish_choice(c);
  return c;
}

RateSearch tune_epsilon_rate(const Simulator& sim, const Prior& prior, const Proposal& proposal,
                             const DistanceSpec& dist, const ChainConfig& cfg, double lo_rate, double hi_rate,
                             std::size_t trial_iterations, int max_rounds) {
  if (!(lo_rate > 0.0 && lo_rate < hi_rate && hi_rate < 1.0))
    throw ConfigError("acceptance-rate band must satisfy 0 < lo < hi < 1");
  ChainConfig trial = cfg;
  trial.iterations = trial_iterations;
  trial.thinning = 1;
  trial.epsilon = kInfinity;
  const ChainOutput probe = abc_mcmc(sim, prior, proposal, dist, trial);
  std::vector<double> d;
  for (double r : probe.distances)
    if (std::isfinite(r)) d.push_back(r);
  if (d.empty()) throw SimulationError("trial chain produced no simulations; check the proposal and the prior");
  std::sort(d.begin(), d.end());

  RateSearch best;
  best.epsilon = kInfinity;
  best.rate = probe.acceptance_rate;
  best.rounds = 1;
  const double target = 0.5 * (lo_rate + hi_rate);
  const double tight = 0.25 * (hi_rate - lo_rate);
  if (probe.acceptance_rate < lo_rate) return best;

  double lo = 0.0, hi = 1.0;
  for (int round = 0; round < max_rounds; ++round) {
    const double u = 0.5 * (lo + hi);
    trial.epsilon = sample_quantile(d, u);
    if (std::binary_search(d.begin(), d.end(), trial.epsilon) || !(trial.epsilon > 0.0))
      trial.epsilon = std::nextafter(trial.epsilon, kInfinity);
    const double rate = abc_mcmc(sim, prior, proposal, dist, trial).acceptance_rate;
    ++best.rounds;
    if (std::abs(rate - target) < std::abs(best.rate - target)) {
      best.epsilon = trial.epsilon;
      best.rate = rate;
    }
    if (std::abs(rate - target) <= tight) break;
    (rate < target ? lo : hi) = u;
  }
  best.in_band = best.rate >= lo_rate && best.rate <= hi_rate;
  return best;
}

}  // namespace qlabc
