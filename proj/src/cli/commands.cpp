#include <cmath>
#include <filesystem>
#include <memory>
#include <sstream>

#include "qlabc/cli.hpp"
#include "qlabc/error.hpp"
#include "qlabc/io.hpp"

namespace qlabc::cli {

namespace fs = std::filesystem;

namespace {

RealVector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const RealVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const RealVector& v) { return {v.data(), v.data() + v.size()}; }

std::string join(const RealVector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

int default_points(const std::string& model, Eigen::Index p) {
  if (model == "gamma") return 100;
  return default_points_per_dim(p);
}

std::string out_path(const Context& ctx, const std::string& name) {
  return (fs::path(ctx.cfg.output_dir) / name).string();
}

// Writes config.json and the command log next to the outputs.
void prepare_output(const Context& ctx, Log& log) {
  if (!fs::exists(ctx.cfg.output_dir)) log.push_back("created output directory " + ctx.cfg.output_dir);
  write_file_atomic(out_path(ctx, "config.json"), config_to_json(ctx.cfg));
}

void write_log(const Context& ctx, const std::string& command, const Log& log) {
  std::string text;
  for (const auto& line : log) text += line + "\n";
  write_file_atomic(out_path(ctx, command + ".log"), text);
}

void require_observation(const Context& ctx) {
  if (!ctx.has_observation())
    throw ConfigError("this command needs observed statistics: set observed.s_obs or observed.simulate_at");
}

void check_compatible(const Context& ctx, const SurrogateModel& m) {
  if (m.dim() != ctx.sim->dim() || (!m.model_name().empty() && m.model_name() != ctx.sim->name()))
    throw SchemaMismatch("surrogate was fitted for model '" + m.model_name() + "' (p = " + std::to_string(m.dim()) +
                         ") but the config selects '" + ctx.sim->name() + "'; rerun fit with this config");
}

std::shared_ptr<const SurrogateModel> share(const SurrogateModel& m) {
  return std::make_shared<const SurrogateModel>(m);
}

std::unique_ptr<Proposal> make_proposal(const Context& ctx, std::shared_ptr<const SurrogateModel> m) {
  if (ctx.cfg.proposal == "independence")
    return std::make_unique<QLImportance>(std::move(m), ctx.s_obs, ctx.cfg.proposal_scale);
  return std::make_unique<QLProposal>(std::move(m), ctx.cfg.proposal_scale);
}

ChainConfig chain_config(const Context& ctx) {
  ChainConfig c;
  c.iterations = ctx.cfg.iterations;
  c.master_seed = ctx.cfg.seed;
  c.thinning = ctx.cfg.thinning;
  if (!ctx.cfg.init.empty()) c.init = to_vector(ctx.cfg.init);
  return c;
}

EpsilonResult choose_epsilon(const Context& ctx, std::shared_ptr<const SurrogateModel> m, Log& log) {
  EpsilonResult r;
  r.rule = ctx.cfg.epsilon_rule;
  if (r.rule == "fixed") {
    r.epsilon = ctx.cfg.epsilon_value;
  } else if (r.rule == "quantile") {
    const QLImportance q(m, ctx.s_obs);
    RandomStream rng(ctx.cfg.seed, streams::kEpsilon);
    const EpsilonChoice c =
        select_epsilon(q, *ctx.sim, ctx.cfg.epsilon_value, ctx.cfg.epsilon_draws, ctx.distance(), rng);
    r.epsilon = c.epsilon;
    r.standard_error = c.standard_error;
  } else {
    const auto prop = make_proposal(ctx, m);
    const RateSearch s = tune_epsilon_rate(*ctx.sim, ctx.prior, *prop, ctx.distance(), chain_config(ctx),
                                           ctx.cfg.rate_lo, ctx.cfg.rate_hi, ctx.cfg.rate_trial_iterations);
    r.epsilon = s.epsilon;
    r.trial_rate = s.rate;
    if (!s.in_band)
      log.push_back("warning: acceptance-rate search ended at rate " + format_double(s.rate) + " outside [" +
                    format_double(ctx.cfg.rate_lo) + ", " + format_double(ctx.cfg.rate_hi) + "]");
  }
  log.push_back("epsilon (" + r.rule + "): " + format_double(r.epsilon));
  return r;
}

}  // namespace

DistanceSpec Context::distance() const {
  if (!observed_genotypes.empty()) return DistanceSpec::pedigree_weighted(s_obs, observed_genotypes);
  return DistanceSpec::euclidean(s_obs);
}

Context make_context(const RunConfig& input) {
  Context ctx;
  RunConfig& c = ctx.cfg;
  c = input;
  if (c.model == "pedigree" && c.pedigree_file.empty()) c.pedigree_file = bundled_data_path("toy_pedigree.tsv");
  ctx.sim = make_simulator({c.model, c.n, c.pedigree_file});
  const Eigen::Index p = ctx.sim->dim();
  if (c.model != "pedigree") c.n = ctx.sim->sample_size();

  auto check_dim = [p](const std::vector<double>& v, const char* what) {
    if (!v.empty() && static_cast<Eigen::Index>(v.size()) != p)
      throw ConfigError(std::string(what) + " has " + std::to_string(v.size()) + " entries, the model has p = " +
                        std::to_string(p));
  };
  check_dim(c.box_lo, "pilot.lo");
  check_dim(c.box_hi, "pilot.hi");
  check_dim(c.s_obs, "observed.s_obs");
  check_dim(c.simulate_at, "observed.simulate_at");
  check_dim(c.init, "chain.init");
  if (!c.prior.empty() && static_cast<Eigen::Index>(c.prior.size()) != p)
    throw ConfigError("prior has " + std::to_string(c.prior.size()) + " marginals, the model has p = " +
                      std::to_string(p));

  const Box model_box = ctx.sim->box();
  if (c.box_lo.empty()) c.box_lo = to_std(model_box.lo);
  if (c.box_hi.empty()) c.box_hi = to_std(model_box.hi);
  if (c.points_per_dim == 0) c.points_per_dim = default_points(c.model, p);
  ctx.design = PilotDesign(Box(to_vector(c.box_lo), to_vector(c.box_hi)), c.points_per_dim);
  if (c.prior.empty()) c.prior = ctx.sim->prior().marginals();
  ctx.prior = Prior(c.prior).truncated(ctx.design.box());

  if (c.s_obs.empty() && !c.simulate_at.empty()) {
    RandomStream rng(c.seed, streams::kObserved);
    const SimOutput out = ctx.sim->simulate(to_vector(c.simulate_at), rng);
    c.s_obs = to_std(out.stats);
    ctx.observed_genotypes = out.genotypes;
  }
  if (c.model == "pedigree") {
    const auto& ped = static_cast<const PedigreeModel&>(*ctx.sim).pedigree();
    if (c.snp > static_cast<int>(ped.snps.size()))
      throw ConfigError("model.snp = " + std::to_string(c.snp) + " but " + c.pedigree_file + " has " +
                        std::to_string(ped.snps.size()) + " SNP columns");
    const auto& g = ped.snps[static_cast<std::size_t>(c.snp - 1)];
    if (c.s_obs.empty()) c.s_obs = to_std(pedigree_statistics(ped.phenotypes(), g));
    if (ctx.observed_genotypes.empty())
      for (Genotype x : g) ctx.observed_genotypes.push_back(static_cast<std::uint8_t>(x));
  }
  if (!c.s_obs.empty()) ctx.s_obs = to_vector(c.s_obs);
  if (!c.init.empty() && !ctx.design.box().contains(to_vector(c.init)))
    throw ConfigError("chain.init lies outside the pilot box");
  return ctx;
}

// ---------------------------------------------------------------------------

PilotData cmd_pilot(const Context& ctx, Log& log) {
  prepare_output(ctx, log);
  const PilotData data = run_pilot(ctx.design, *ctx.sim, ctx.cfg.seed, ctx.cfg.threads);
  const std::string path = out_path(ctx, "pilot.csv");
  write_pilot_csv(path, data);
  log.push_back("pilot: " + std::to_string(data.thetas.rows()) + " rows, seed " + std::to_string(ctx.cfg.seed) +
                ", wrote " + path);
  write_log(ctx, "pilot", log);
  return data;
}

std::string fit_report(const Context& ctx, const SurrogateModel& m) {
  std::ostringstream os;
  os << "model: " << m.model_name() << "\n";
  os << "variance: " << to_string(m.variance_kind()) << "\n";
  os << "points_per_dim: " << m.design().points_per_dim() << "\n";
  os << "lattice_points: " << m.design().total_points() << "\n";
  for (std::size_t j = 0; j < m.r_squared().size(); ++j)
    os << "r_squared_" << j + 1 << ": " << format_double(m.r_squared()[j]) << "\n";
  os << "monotone: " << (m.monotonicity().monotone ? "true" : "false") << "\n";
  for (const auto& [a, b] : m.monotonicity().flat_regions)
    os << "flat_region: " << format_double(a) << " " << format_double(b) << "\n";
  for (const auto& w : m.warnings()) os << "warning: " << w << "\n";
  if (ctx.has_observation()) {
    os << "s_obs: " << join(ctx.s_obs) << "\n";
    if (auto w = coverage_warning(m, ctx.s_obs))
      os << "warning: " << *w << "\n";
    else
      os << "coverage: s_obs is inside the fitted image\n";
  }
  return os.str();
}

SurrogateModel cmd_fit(const Context& ctx, const PilotData& data, Log& log) {
  prepare_output(ctx, log);
  SurrogateModel m = fit_surrogate(data, ctx.design, parse_variance_kind(ctx.cfg.variance));
  m.set_model_name(ctx.sim->name());
  save_surrogate(out_path(ctx, "surrogate.json"), m);
  const std::string report = fit_report(ctx, m);
  write_file_atomic(out_path(ctx, "fit_report.txt"), report);
  std::istringstream in(report);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("r_squared", 0) == 0 || line.rfind("warning", 0) == 0) log.push_back(line);
  log.push_back("fit: wrote " + out_path(ctx, "surrogate.json"));
  write_log(ctx, "fit", log);
  return m;
}

EpsilonResult cmd_epsilon(const Context& ctx, const SurrogateModel& m, Log& log) {
  require_observation(ctx);
  check_compatible(ctx, m);
  prepare_output(ctx, log);
  const EpsilonResult r = choose_epsilon(ctx, share(m), log);
  std::ostringstream os;
  os << "rule: " << r.rule << "\n";
  os << "epsilon: " << format_double(r.epsilon) << "\n";
  if (r.rule == "quantile") {
    os << "quantile: " << format_double(ctx.cfg.epsilon_value) << "\n";
    os << "draws: " << ctx.cfg.epsilon_draws << "\n";
    os << "standard_error: " << format_double(r.standard_error) << "\n";
  }
  if (r.rule == "rate") os << "trial_rate: " << format_double(r.trial_rate) << "\n";
  write_file_atomic(out_path(ctx, "epsilon.txt"), os.str());
  write_log(ctx, "epsilon", log);
  return r;
}

void write_trace_csv(const std::string& path, const ChainOutput& chain) {
  const Eigen::Index p = chain.states.cols();
  std::string out = "iter";
  for (Eigen::Index j = 0; j < p; ++j) out += ",theta_" + std::to_string(j + 1);
  out += ",accepted,rho,logq_fwd,logq_rev\n";
  for (std::size_t t = 0; t < chain.size(); ++t) {
    out += std::to_string(chain.iterations[t]);
    for (Eigen::Index j = 0; j < p; ++j) out += "," + format_double(chain.states(static_cast<Eigen::Index>(t), j));
    out += chain.accepted[t] ? ",1," : ",0,";
    out += format_double(chain.distances[t]) + "," + format_double(chain.logq_forward[t]) + "," +
           format_double(chain.logq_reverse[t]) + "\n";
  }
  write_file_atomic(path, out);
}

std::string diagnostics_text(const ChainSummary& s, const ChainOutput& chain, const EpsilonResult& eps) {
  std::ostringstream os;
  os << "epsilon_rule: " << eps.rule << "\n";
  os << "epsilon: " << format_double(eps.epsilon) << "\n";
  os << "iterations: " << (chain.iterations.empty() ? 0 : chain.iterations.back()) << "\n";
  os << "recorded_states: " << s.total_states << "\n";
  os << "summary_states: " << s.kept_states << "\n";
  os << "acceptance_rate: " << format_double(s.acceptance_rate) << "\n";
  os << "simulations: " << chain.simulations << "\n";
  os << "outside_image: " << chain.outside_image << "\n";
  for (std::size_t j = 0; j < s.coords.size(); ++j) {
    const CoordinateSummary& c = s.coords[j];
    const std::string k = "theta_" + std::to_string(j + 1);
    os << k << ".mean: " << format_double(c.mean) << "\n";
    os << k << ".sd: " << format_double(c.sd) << "\n";
    os << k << ".q025: " << format_double(c.q025) << "\n";
    os << k << ".q50: " << format_double(c.q50) << "\n";
    os << k << ".q975: " << format_double(c.q975) << "\n";
    os << k << ".lag1: " << format_double(c.lag1) << "\n";
    os << k << ".ess: " << format_double(c.ess) << "\n";
    os << k << ".mean_se: " << format_double(c.mean_se) << "\n";
  }
  return os.str();
}

std::string quantile_table_csv(const ChainSummary& s) {
  std::string out = "coordinate,mean,sd,q025,q50,q975,lag1,ess,mean_se\n";
  for (std::size_t j = 0; j < s.coords.size(); ++j) {
    const CoordinateSummary& c = s.coords[j];
    out += "theta_" + std::to_string(j + 1);
    for (double v : {c.mean, c.sd, c.q025, c.q50, c.q975, c.lag1, c.ess, c.mean_se}) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

SampleResult cmd_sample(const Context& ctx, const SurrogateModel& m, Log& log) {
  require_observation(ctx);
  check_compatible(ctx, m);
  prepare_output(ctx, log);
  const auto shared = share(m);
  SampleResult r;
  const auto prop = make_proposal(ctx, shared);
  ChainConfig cc = chain_config(ctx);
  // Resolve the starting point first so a missing f^-1(s_obs) reports as InitFailed.
  if (!cc.init) cc.init = prop->initial_state(ctx.s_obs);
  r.epsilon = choose_epsilon(ctx, shared, log);
  cc.epsilon = r.epsilon.epsilon;
  r.chain = abc_mcmc(*ctx.sim, ctx.prior, *prop, ctx.distance(), cc);
  r.summary = diagnostics(r.chain, ctx.cfg.burn_in);
  write_trace_csv(out_path(ctx, "trace.csv"), r.chain);
  write_file_atomic(out_path(ctx, "diagnostics.txt"), diagnostics_text(r.summary, r.chain, r.epsilon));
  write_file_atomic(out_path(ctx, "quantiles.csv"), quantile_table_csv(r.summary));
  log.push_back("sample: " + std::to_string(ctx.cfg.iterations) + " iterations, acceptance rate " +
                format_double(r.chain.acceptance_rate) + ", wrote " + out_path(ctx, "trace.csv"));
  write_log(ctx, "sample", log);
  return r;
}

RejectionSample cmd_reject(const Context& ctx, Log& log) {
  require_observation(ctx);
  prepare_output(ctx, log);
  RandomStream rng(ctx.cfg.seed, streams::kRejection);
  const std::size_t n = ctx.cfg.rejection_draws;
  RejectionSample r;
  if (ctx.cfg.epsilon_rule == "fixed") {
    r = abc_rejection(*ctx.sim, ctx.prior, ctx.cfg.epsilon_value, n, ctx.distance(), rng);
  } else {
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ctx.cfg.rejection_keep * n)));
    r = abc_rejection_nearest(*ctx.sim, ctx.prior, n, keep, ctx.distance(), rng);
  }
  std::string out;
  for (Eigen::Index j = 0; j < r.thetas.cols(); ++j) out += "theta_" + std::to_string(j + 1) + ",";
  out += "rho\n";
  for (Eigen::Index i = 0; i < r.thetas.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.thetas.cols(); ++j) out += format_double(r.thetas(i, j)) + ",";
    out += format_double(r.distances[static_cast<std::size_t>(i)]) + "\n";
  }
  write_file_atomic(out_path(ctx, "rejection.csv"), out);
  const ChainSummary s = diagnostics(r.thetas, r.acceptance_fraction(), 0.0);
  std::string summary = "epsilon: " + format_double(r.epsilon) + "\nsimulations: " + std::to_string(r.simulations) +
                        "\naccepted: " + std::to_string(r.thetas.rows()) + "\n";
  for (std::size_t j = 0; j < s.coords.size(); ++j)
    summary += "theta_" + std::to_string(j + 1) + ".mean: " + format_double(s.coords[j].mean) + "\n";
  write_file_atomic(out_path(ctx, "rejection.txt"), summary);
  log.push_back("reject: kept " + std::to_string(r.thetas.rows()) + " of " + std::to_string(n) + " draws, epsilon " +
                format_double(r.epsilon));
  write_log(ctx, "reject", log);
  return r;
}

WeightedSample cmd_is(const Context& ctx, const SurrogateModel& m, Log& log) {
  require_observation(ctx);
  check_compatible(ctx, m);
  prepare_output(ctx, log);
  const auto shared = share(m);
  const EpsilonResult eps = choose_epsilon(ctx, shared, log);
  const QLImportance q(shared, ctx.s_obs, ctx.cfg.proposal_scale);
  RandomStream rng(ctx.cfg.seed, streams::kImportance);
  const WeightedSample w =
      abc_importance_sampling(q, *ctx.sim, ctx.prior, eps.epsilon, ctx.cfg.importance_draws, ctx.distance(), rng);
  std::string out;
  for (Eigen::Index j = 0; j < w.thetas.cols(); ++j) out += "theta_" + std::to_string(j + 1) + ",";
  out += "weight,rho\n";
  for (Eigen::Index i = 0; i < w.thetas.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.thetas.cols(); ++j) out += format_double(w.thetas(i, j)) + ",";
    out += format_double(w.weights[static_cast<std::size_t>(i)]) + "," +
           format_double(w.distances[static_cast<std::size_t>(i)]) + "\n";
  }
  write_file_atomic(out_path(ctx, "importance.csv"), out);
  const RealVector mean = w.mean(), se = w.mean_se();
  std::string summary = "epsilon: " + format_double(eps.epsilon) + "\ndraws: " + std::to_string(w.simulations) +
                        "\naccepted: " + std::to_string(w.accepted) + "\nweight_ess: " + format_double(w.ess()) + "\n";
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    summary += "theta_" + std::to_string(j + 1) + ".mean: " + format_double(mean[j]) + "\n";
    summary += "theta_" + std::to_string(j + 1) + ".mean_se: " + format_double(se[j]) + "\n";
  }
  write_file_atomic(out_path(ctx, "importance.txt"), summary);
  log.push_back("is: " + std::to_string(w.accepted) + " of " + std::to_string(w.simulations) +
                " draws inside epsilon, weight ESS " + format_double(w.ess()));
  write_log(ctx, "is", log);
  return w;
}

double cmd_verify(const Context& ctx, const SurrogateModel& m, Log& log) {
  require_observation(ctx);
  check_compatible(ctx, m);
  if (m.dim() != 1 || m.variance_kind() != VarianceKind::constant)
    throw ConfigError("verify needs a p = 1 surrogate fitted with surrogate.variance = constant");
  prepare_output(ctx, log);
  std::vector<double> grid;
  const double lo = m.domain().lo[0], hi = m.domain().hi[0];
  for (int i = 0; i <= 200; ++i) grid.push_back(i == 200 ? hi : lo + (hi - lo) * i / 200.0);
  const double err = verify_proposition1(m, ctx.s_obs[0], grid);
  write_file_atomic(out_path(ctx, "verify.txt"), "grid_points: 201\npanels: 10000\nmax_abs_discrepancy: " +
                                                     format_double(err) + "\n");
  log.push_back("verify: max abs discrepancy " + format_double(err));
  write_log(ctx, "verify", log);
  return err;
}

}  // namespace qlabc::cli
