#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "qlabc/numerics.hpp"

namespace qlabc {

// ---------------------------------------------------------------------------
// Priors

// One independent prior coordinate.
struct Marginal {
  enum class Kind { normal, uniform, log_exponential };
  Kind kind = Kind::uniform;
  // normal: (mean, sd); uniform: (lo, hi); log_exponential: (rate, unused),
  // the law of log(X) for X ~ Exp(rate).
  double a = 0.0;
  double b = 1.0;

  static Marginal normal(double mean, double sd);
  static Marginal uniform(double lo, double hi);
  static Marginal log_exponential(double rate);

  double log_pdf(double x) const;
  double cdf(double x) const;
  double quantile(double u) const;

  bool operator==(const Marginal&) const = default;
};

// Product prior, optionally truncated to a box. log_density is normalised
// only up to the truncation constant, which cancels in every ratio.
class Prior {
 public:
  Prior() = default;
  explicit Prior(std::vector<Marginal> marginals);

  Eigen::Index dim() const { return static_cast<Eigen::Index>(marginals_.size()); }
  const std::vector<Marginal>& marginals() const { return marginals_; }

  Prior truncated(const Box& box) const;
  const Box* truncation() const { return truncated_ ? &box_ : nullptr; }

  // -inf outside the support or the truncation box.
  double log_density(const RealVector& theta) const;
  RealVector sample(RandomStream& rng) const;
  // Marginal CDF of coordinate j, after truncation.
  double cdf(Eigen::Index j, double x) const;

 private:
  std::vector<Marginal> marginals_;
  Box box_;
  bool truncated_ = false;
};

// ---------------------------------------------------------------------------
// Simulators

struct SimOutput {
  RealVector stats;
  // Simulated genotypes of the observed individuals (pedigree model only).
  std::vector<std::uint8_t> genotypes;
};

class Simulator {
 public:
  virtual ~Simulator() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index dim() const = 0;
  // Default pilot box; finite.
  virtual Box box() const = 0;
  virtual Prior prior() const = 0;
  virtual int sample_size() const = 0;
  virtual SimOutput simulate(const RealVector& theta, RandomStream& rng) const = 0;
};

using SimulatorPtr = std::shared_ptr<const Simulator>;

// Wraps an arbitrary function; used for synthetic models and tests.
class FunctionSimulator : public Simulator {
 public:
  using Fn = std::function<RealVector(const RealVector&, RandomStream&)>;
  FunctionSimulator(std::string name, Box box, Prior prior, Fn fn);

  std::string name() const override { return name_; }
  Eigen::Index dim() const override { return box_.dim(); }
  Box box() const override { return box_; }
  Prior prior() const override { return prior_; }
  int sample_size() const override { return 0; }
  SimOutput simulate(const RealVector& theta, RandomStream& rng) const override;

 private:
  std::string name_;
  Box box_;
  Prior prior_;
  Fn fn_;
};

// --- coalescent ------------------------------------------------------------

// Total branch length T_n = sum_{j=2}^n j W_j, W_j ~ Exp(mean 2 / (j (j-1))).
double simulate_tree_length(int n, RandomStream& rng);
// s = log(S' + 1) with S' | T_n ~ Poisson(exp(theta) T_n / 2).
double simulate_coalescent(double theta, int n, RandomStream& rng);
// Raw segregating-site count S'.
std::uint64_t simulate_segregating_sites(double theta, int n, RandomStream& rng);

class CoalescentModel : public Simulator {
 public:
  explicit CoalescentModel(int n = 100);
  std::string name() const override { return "coalescent"; }
  Eigen::Index dim() const override { return 1; }
  Box box() const override;
  Prior prior() const override;
  int sample_size() const override { return n_; }
  SimOutput simulate(const RealVector& theta, RandomStream& rng) const override;

 private:
  int n_;
};

// Density on a grid with trapezoid-rule helpers.
struct GriddedDensity {
  std::vector<double> x;
  std::vector<double> density;

  double integral() const;
  double mean() const;
  double quantile(double p) const;
  double mode() const;
};

// Parametric approximation pi_ap(theta | s'_obs) on theta = log(theta'): prior
// times the Poisson likelihood averaged over K simulated tree lengths.
GriddedDensity coalescent_parametric_posterior(std::uint64_t s_obs, int n, const Prior& prior,
                                               const std::vector<double>& theta_grid, int K,
                                               RandomStream& rng);
// Closed-form marginal P(S' = s | theta') for n = 2:
// theta'^s / (1 + theta')^(s + 1).
double coalescent_n2_likelihood(std::uint64_t s, double theta_prime);

// --- gamma -----------------------------------------------------------------

// Shape exp(theta_1), scale exp(-theta_2); returns (log mean, log sd) with the
// n - 1 denominator.
RealVector gamma_statistics(const std::vector<double>& sample);
RealVector simulate_gamma(const RealVector& theta, int n, RandomStream& rng);

class GammaModel : public Simulator {
 public:
  explicit GammaModel(int n = 10);
  std::string name() const override { return "gamma"; }
  Eigen::Index dim() const override { return 2; }
  Box box() const override;
  Prior prior() const override;
  int sample_size() const override { return n_; }
  SimOutput simulate(const RealVector& theta, RandomStream& rng) const override;

 private:
  int n_;
};

// --- g-and-k ---------------------------------------------------------------

// y = theta_1 + e^theta_2 (1 + 0.8 tanh(theta_3 z / 2)) (1 + z^2)^(e^theta_4 - 1/2).
double gk_transform(const RealVector& theta, double z);
std::vector<double> gk_sample(const RealVector& theta, int n, RandomStream& rng);
// Linear interpolation between order statistics, h = (n - 1) p.
double empirical_quantile(const std::vector<double>& sorted, double p);
// (median, log IQR, Bowley skewness, log of the 95% range). Sorts in place.
RealVector gk_statistics(std::vector<double>& sample);

class GkModel : public Simulator {
 public:
  explicit GkModel(int n = 1000);
  std::string name() const override { return "gk"; }
  Eigen::Index dim() const override { return 4; }
  Box box() const override;
  Prior prior() const override;
  int sample_size() const override { return n_; }
  SimOutput simulate(const RealVector& theta, RandomStream& rng) const override;

 private:
  int n_;
};

// --- pedigree --------------------------------------------------------------

// Genotype as the count of A alleles.
enum class Genotype : std::uint8_t { aa = 0, het = 1, AA = 2 };

Genotype parse_genotype(const std::string& text);
std::string to_string(Genotype g);

struct Individual {
  std::string id;
  int mother = -1;  // index into Pedigree::people, -1 for a founder
  int father = -1;
  bool observed = false;
  int phenotype = -1;  // 1 affected, 0 healthy, -1 missing
};

struct Pedigree {
  // Parents always precede their children.
  std::vector<Individual> people;
  std::vector<int> observed;  // indices of observed individuals, file order
  std::vector<std::string> snp_names;
  // snps[k][i]: genotype of observed individual i at SNP k.
  std::vector<std::vector<Genotype>> snps;

  std::size_t observed_count() const { return observed.size(); }
  std::vector<int> phenotypes() const;
};

// Tab-separated: header "id mother father observed phenotype [snp...]".
Pedigree parse_pedigree(std::istream& in, const std::string& source = "<stream>");
Pedigree read_pedigree(const std::string& path);

// Child genotype under random allele segregation.
Genotype mendel_child(Genotype mother, Genotype father, RandomStream& rng);

// s_k = log((1 + #{Y = 1, X = k}) / (2 + #{X = k})) for k = aa, het, AA.
RealVector pedigree_statistics(const std::vector<int>& phenotypes,
                               const std::vector<Genotype>& genotypes);

// Phenotype logit: theta_1 1{het} + theta_2 1{aa} + theta_3 1{AA}.
double pedigree_logit(const RealVector& theta, Genotype g);

struct PedigreeDraw {
  RealVector stats;
  std::vector<Genotype> genotypes;  // observed individuals
  std::vector<int> phenotypes;      // observed individuals
};
PedigreeDraw simulate_pedigree(const RealVector& theta, const Pedigree& ped, RandomStream& rng);

class PedigreeModel : public Simulator {
 public:
  explicit PedigreeModel(std::shared_ptr<const Pedigree> ped);
  std::string name() const override { return "pedigree"; }
  Eigen::Index dim() const override { return 3; }
  Box box() const override;
  Prior prior() const override;
  int sample_size() const override { return static_cast<int>(ped_->observed_count()); }
  SimOutput simulate(const RealVector& theta, RandomStream& rng) const override;

  const Pedigree& pedigree() const { return *ped_; }

 private:
  std::shared_ptr<const Pedigree> ped_;
};

// ---------------------------------------------------------------------------
// Registry

struct ModelParams {
  std::string name;
  int n = 0;  // 0 selects the model default
  std::string pedigree_file;
};

std::vector<std::string> model_names();
SimulatorPtr make_simulator(const ModelParams& params);

}  // namespace qlabc
