#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qlabc/abc.hpp"
#include "qlabc/models.hpp"
#include "qlabc/surrogate.hpp"

namespace qlabc::cli {

// Everything a run needs. Zero / empty fields are resolved from the model by
// resolve(); the resolved form is what gets echoed to config.json.
struct RunConfig {
  // model
  std::string model = "gamma";
  int n = 0;
  std::string pedigree_file;
  int snp = 1;  // pedigree: 1-based SNP column that supplies s_obs

  // observed statistics: explicit, or simulated at a parameter value
  std::vector<double> s_obs;
  std::vector<double> simulate_at;

  // pilot and surrogate
  std::vector<double> box_lo;
  std::vector<double> box_hi;
  int points_per_dim = 0;
  unsigned threads = 1;
  std::string variance = "smooth";

  // prior; empty means the model prior. Always truncated to the pilot box.
  std::vector<Marginal> prior;

  // epsilon rule: fixed (value = epsilon), quantile (value = q) or rate
  std::string epsilon_rule = "quantile";
  double epsilon_value = 0.1;
  std::size_t epsilon_draws = 10000;
  double rate_lo = 0.2;
  double rate_hi = 0.4;
  std::size_t rate_trial_iterations = 3000;

  // chain
  std::size_t iterations = 10000;
  std::vector<double> init;  // empty: f^-1(s_obs)
  std::size_t thinning = 1;
  double burn_in = 0.1;
  std::string proposal = "random-walk";  // or independence
  double proposal_scale = 1.0;

  // rejection keeps the nearest keep_fraction of its draws unless the rule is fixed
  std::size_t rejection_draws = 100000;
  double rejection_keep = 0.01;
  std::size_t importance_draws = 10000;

  std::uint64_t seed = 1;
  std::string output_dir = "qlabc-out";

  bool operator==(const RunConfig&) const = default;
};

// JSON config. Unknown keys, wrong types and invalid values are ConfigError.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);

// Bundled data file (QLABC_DATA_DIR overrides the build-time location).
std::string bundled_data_path(const std::string& name);

// Resolved configuration plus the objects derived from it.
struct Context {
  RunConfig cfg;
  SimulatorPtr sim;
  PilotDesign design;
  Prior prior;             // truncated to the pilot box
  RealVector s_obs;        // empty when the config supplies none
  std::vector<std::uint8_t> observed_genotypes;  // pedigree only

  bool has_observation() const { return s_obs.size() > 0; }
  DistanceSpec distance() const;
};

// Fills model-dependent defaults and validates the result.
Context make_context(const RunConfig& cfg);

using Log = std::vector<std::string>;

struct EpsilonResult {
  double epsilon = 0.0;
  std::string rule;
  double standard_error = 0.0;  // quantile rule
  double trial_rate = 0.0;      // rate rule
};

struct SampleResult {
  ChainOutput chain;
  ChainSummary summary;
  EpsilonResult epsilon;
};

// Each command writes its outputs (and config.json, <command>.log) into
// cfg.output_dir and appends human-readable lines to log.
PilotData cmd_pilot(const Context& ctx, Log& log);
SurrogateModel cmd_fit(const Context& ctx, const PilotData& data, Log& log);
EpsilonResult cmd_epsilon(const Context& ctx, const SurrogateModel& m, Log& log);
SampleResult cmd_sample(const Context& ctx, const SurrogateModel& m, Log& log);
RejectionSample cmd_reject(const Context& ctx, Log& log);
WeightedSample cmd_is(const Context& ctx, const SurrogateModel& m, Log& log);
double cmd_verify(const Context& ctx, const SurrogateModel& m, Log& log);

// File writers shared by the commands.
void write_trace_csv(const std::string& path, const ChainOutput& chain);
std::string diagnostics_text(const ChainSummary& s, const ChainOutput& chain, const EpsilonResult& eps);
std::string quantile_table_csv(const ChainSummary& s);
std::string fit_report(const Context& ctx, const SurrogateModel& m);

// ---------------------------------------------------------------------------
// Benchmarks. Each returns its results and, when out_dir is non-empty, writes
// CSV files into it.

struct CoalescentOptions {
  std::vector<double> theta_primes{2, 3, 4, 5, 6, 7, 8, 9, 10};
  int n = 100;
  int pilot_points = 1000;
  std::size_t iterations = 20000;
  double epsilon_quantile = 0.1;
  std::size_t epsilon_draws = 5000;
  int oracle_draws = 100000;
  double rejection_keep = 0.01;
  std::uint64_t seed = 1;
};

struct CoalescentRow {
  double theta_prime = 0.0;
  std::uint64_t segregating_sites = 0;
  double epsilon = 0.0;
  std::size_t budget = 0;  // simulations spent by ABC-QL, matched by rejection
  std::vector<double> q_oracle, q_ql, q_rejection;  // at CoalescentBenchmark::probs
  std::vector<double> rel_ql, rel_rejection;
};

struct CoalescentBenchmark {
  std::vector<double> probs{0.025, 0.5, 0.975};
  std::vector<CoalescentRow> rows;
  // Spearman correlation of max_p |rel. diff.| with theta'.
  double spearman_ql = 0.0;
  double spearman_rejection = 0.0;
};

CoalescentBenchmark benchmark_coalescent(const CoalescentOptions& opt, const std::string& out_dir = "");

struct GammaOptions {
  RealVector s_obs = (RealVector(2) << -0.12, -0.26).finished();
  int n = 10;
  int pilot_points = 100;
  std::size_t iterations = 100000;
  double epsilon_quantile = 0.1;
  std::size_t epsilon_draws = 10000;
  int oracle_grid = 400;
  std::size_t rejection_draws = 400000;
  std::size_t importance_draws = 50000;
  int contour_grid = 40;
  std::uint64_t seed = 1;
};

struct MethodEstimate {
  std::string method;
  RealVector mean;
  RealVector se;
  std::size_t simulations = 0;
};

struct GammaBenchmark {
  double epsilon = 0.0;
  RealVector oracle_mean;
  MethodEstimate ql, rejection, importance;
  double ql_acceptance_rate = 0.0;
};

// Exact posterior mean for a gamma sample on an m x m midpoint grid over the
// box, with the given prior.
RealVector gamma_oracle_mean(const std::vector<double>& sample, const Prior& prior, const Box& box, int m);
// Ten-point (or n-point) sample whose log mean and log sd equal s_obs exactly:
// moment-matched gamma quantiles at (i - 1/2) / n, affinely adjusted.
std::vector<double> gamma_synthetic_sample(const RealVector& s_obs, int n);

GammaBenchmark benchmark_gamma(const GammaOptions& opt, const std::string& out_dir = "");

struct GkOptions {
  int replicates = 10;
  int n = 1000;
  int pilot_points = 10;
  std::size_t iterations = 50000;
  double epsilon_quantile = 0.1;
  std::size_t epsilon_draws = 5000;
  std::uint64_t seed = 1;
};

struct GkReplicate {
  RealVector truth, mean, lo, hi;
  double epsilon = 0.0;
  std::string epsilon_rule = "quantile";  // or probe-chain when f^-1(s_obs) does not exist
  double acceptance_rate = 0.0;
};

struct GkBenchmark {
  std::vector<GkReplicate> replicates;
  std::vector<int> covered;  // per coordinate
};

GkBenchmark benchmark_gk(const GkOptions& opt, const std::string& out_dir = "");

struct PedigreeOptions {
  std::string pedigree_file;  // empty: bundled toy pedigree
  int pilot_points = 30;
  int repetitions = 10;
  std::size_t iterations = 100000;
  std::size_t probe_iterations = 5000;
  double rate_lo = 0.2;
  double rate_hi = 0.4;
  std::uint64_t seed = 1;
};

struct PedigreeRun {
  std::string snp;
  int repetition = 0;
  RealVector log_bf;
  double epsilon = 0.0;
  std::string epsilon_rule = "mh-rate";
  double acceptance_rate = 0.0;
};

struct PedigreeBenchmark {
  std::vector<PedigreeRun> runs;
};

PedigreeBenchmark benchmark_pedigree(const PedigreeOptions& opt, const std::string& out_dir = "");

// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace qlabc::cli
