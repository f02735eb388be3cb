#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <boost/math/distributions/gamma.hpp>

#include "qlabc/cli.hpp"
#include "qlabc/error.hpp"
#include "qlabc/io.hpp"

namespace qlabc::cli {

namespace fs = std::filesystem;

namespace {

void write_bundle(const std::string& dir, const std::string& name, const std::string& contents) {
  if (dir.empty()) return;
  write_file_atomic((fs::path(dir) / name).string(), contents);
}

std::string fmt(double x) { return format_double(x); }

std::shared_ptr<const SurrogateModel> fit_model(const Simulator& sim, const Box& box, int m, VarianceKind kind,
                                              std::uint64_t seed) {
  const PilotDesign design(box, m);
  const PilotData data = run_pilot(design, sim, seed, 1);
  SurrogateModel fit = fit_surrogate(data, design, kind);
  fit.set_model_name(sim.name());
  return std::make_shared<const SurrogateModel>(std::move(fit));
}

std::vector<double> column(const RealMatrix& x, Eigen::Index j, std::size_t start = 0) {
  std::vector<double> out;
  for (auto t = static_cast<Eigen::Index>(start); t < x.rows(); ++t) out.push_back(x(t, j));
  return out;
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionMismatch("spearman needs equal-length inputs");
  if (x.size() < 2) return 0.0;
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Coalescent: posterior quantiles of theta' against the parametric oracle.

CoalescentBenchmark benchmark_coalescent(const CoalescentOptions& opt, const std::string& out_dir) {
  CoalescentBenchmark b;
  const CoalescentModel sim(opt.n);
  const Box box = sim.box();
  const Prior prior = sim.prior().truncated(box);
  const auto model = fit_model(sim, box, opt.pilot_points, VarianceKind::smooth, opt.seed);

  double harmonic = 0.0;
  for (int i = 1; i < opt.n; ++i) harmonic += 1.0 / i;
  std::vector<double> grid;
  for (int i = 0; i <= 1300; ++i) grid.push_back(-4.0 + 0.006 * i);

  std::string table = "theta_prime,segregating_sites,epsilon,budget,p,q_oracle,q_ql,q_rejection,rel_ql,rel_rejection\n";
  std::vector<double> tp, worst_ql, worst_rej;
  for (std::size_t r = 0; r < opt.theta_primes.size(); ++r) {
    CoalescentRow row;
    row.theta_prime = opt.theta_primes[r];
    // Observed count: E[S'] = theta' * sum_{i<n} 1/i, rounded.
    row.segregating_sites = static_cast<std::uint64_t>(std::llround(row.theta_prime * harmonic));
    const RealVector s_obs = RealVector::Constant(1, std::log(static_cast<double>(row.segregating_sites) + 1.0));
    const DistanceSpec dist = DistanceSpec::euclidean(s_obs);
    const std::uint64_t stream = streams::kReplicateBase + r;

    RandomStream oracle_rng(opt.seed, streams::kOracle + 16 * r);
    const GriddedDensity oracle =
        coalescent_parametric_posterior(row.segregating_sites, opt.n, prior, grid, opt.oracle_draws, oracle_rng);

    const QLImportance q(model, s_obs);
    RandomStream eps_rng(opt.seed, stream);
    const EpsilonChoice eps = select_epsilon(q, sim, opt.epsilon_quantile, opt.epsilon_draws, dist, eps_rng);
    row.epsilon = eps.epsilon;

    const QLProposal prop(model);
    ChainConfig cc;
    cc.iterations = opt.iterations;
    cc.epsilon = eps.epsilon;
    cc.master_seed = opt.seed;
    cc.stream = stream + (std::uint64_t{1} << 20);
    const ChainOutput chain = abc_mcmc(sim, prior, prop, dist, cc);
    row.budget = static_cast<std::size_t>(opt.pilot_points) + opt.epsilon_draws + chain.simulations;

    RandomStream rej_rng(opt.seed, stream + (std::uint64_t{2} << 20));
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.rejection_keep * row.budget)));
    const RejectionSample rej = abc_rejection_nearest(sim, prior, row.budget, keep, dist, rej_rng);

    const std::size_t burn = chain.size() / 10;
    const std::vector<double> ql = column(chain.states, 0, burn), rj = column(rej.thetas, 0);
    double wq = 0.0, wr = 0.0;
    for (double p : b.probs) {
      const double q0 = std::exp(oracle.quantile(p));
      const double q1 = std::exp(sample_quantile(ql, p));
      const double q2 = std::exp(sample_quantile(rj, p));
      row.q_oracle.push_back(q0);
      row.q_ql.push_back(q1);
      row.q_rejection.push_back(q2);
      row.rel_ql.push_back((q1 - q0) / q0);
      row.rel_rejection.push_back((q2 - q0) / q0);
      wq = std::max(wq, std::abs(row.rel_ql.back()));
      wr = std::max(wr, std::abs(row.rel_rejection.back()));
      table += fmt(row.theta_prime) + "," + std::to_string(row.segregating_sites) + "," + fmt(row.epsilon) + "," +
               std::to_string(row.budget) + "," + fmt(p) + "," + fmt(q0) + "," + fmt(q1) + "," + fmt(q2) + "," +
               fmt(row.rel_ql.back()) + "," + fmt(row.rel_rejection.back()) + "\n";
    }
    tp.push_back(row.theta_prime);
    worst_ql.push_back(wq);
    worst_rej.push_back(wr);
    b.rows.push_back(std::move(row));
  }
  b.spearman_ql = spearman(worst_ql, tp);
  b.spearman_rejection = spearman(worst_rej, tp);
  write_bundle(out_dir, "coalescent_quantiles.csv", table);
  write_bundle(out_dir, "coalescent_summary.csv",
               "method,spearman_max_abs_rel_diff_vs_theta_prime\nql," + fmt(b.spearman_ql) + "\nrejection," +
                   fmt(b.spearman_rejection) + "\n");
  return b;
}

// ---------------------------------------------------------------------------
// Gamma: three estimators against a quadrature oracle.

std::vector<double> gamma_synthetic_sample(const RealVector& s_obs, int n) {
  if (s_obs.size() != 2) throw DimensionMismatch("gamma statistics are two-dimensional");
  if (n < 2) throw ConfigError("synthetic gamma sample needs n >= 2");
  const double mean = std::exp(s_obs[0]), sd = std::exp(s_obs[1]);
  const boost::math::gamma_distribution<double> law(mean * mean / (sd * sd), sd * sd / mean);
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) y[i] = boost::math::quantile(law, (i + 0.5) / n);
  double m = std::accumulate(y.begin(), y.end(), 0.0) / n, ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  const double scale = sd / std::sqrt(ss / (n - 1));
  for (double& v : y) {
    v = mean + (v - m) * scale;
    if (!(v > 0.0)) throw DegenerateSample("synthetic gamma sample is not positive");
  }
  return y;
}

namespace {

// Unnormalised log posterior of (log shape, -log scale) on an m x m midpoint grid.
RealMatrix gamma_log_posterior_grid(const std::vector<double>& y, const Prior& prior, const Box& box, int m) {
  double sum = 0.0, sum_log = 0.0;
  for (double v : y) {
    sum += v;
    sum_log += std::log(v);
  }
  const double n = static_cast<double>(y.size());
  RealMatrix lp(m, m);
  const RealVector h = box.width() / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      RealVector t(2);
      t << box.lo[0] + (i + 0.5) * h[0], box.lo[1] + (j + 0.5) * h[1];
      const double k = std::exp(t[0]), rate = std::exp(t[1]);
      lp(i, j) = (k - 1.0) * sum_log - rate * sum + n * k * t[1] - n * std::lgamma(k) + prior.log_density(t);
    }
  return lp;
}

RealMatrix normalised(const RealMatrix& lp, const Box& box) {
  const int m = static_cast<int>(lp.rows());
  RealMatrix d = (lp.array() - lp.maxCoeff()).exp().matrix();
  const double cell = box.width()[0] * box.width()[1] / (m * m);
  return d / (d.sum() * cell);
}

}  // namespace

RealVector gamma_oracle_mean(const std::vector<double>& sample, const Prior& prior, const Box& box, int m) {
  const RealMatrix d = normalised(gamma_log_posterior_grid(sample, prior, box, m), box);
  const RealVector h = box.width() / m;
  RealVector mean = RealVector::Zero(2);
  double total = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      mean[0] += d(i, j) * (box.lo[0] + (i + 0.5) * h[0]);
      mean[1] += d(i, j) * (box.lo[1] + (j + 0.5) * h[1]);
      total += d(i, j);
    }
  return mean / total;
}

GammaBenchmark benchmark_gamma(const GammaOptions& opt, const std::string& out_dir) {
  GammaBenchmark b;
  const GammaModel sim(opt.n);
  const Box box = sim.box();
  const Prior prior = sim.prior().truncated(box);
  const DistanceSpec dist = DistanceSpec::euclidean(opt.s_obs);
  const auto model = fit_model(sim, box, opt.pilot_points, VarianceKind::smooth, opt.seed);

  const std::vector<double> sample = gamma_synthetic_sample(opt.s_obs, opt.n);
  b.oracle_mean = gamma_oracle_mean(sample, prior, box, opt.oracle_grid);

  const QLImportance q(model, opt.s_obs);
  RandomStream eps_rng(opt.seed, streams::kEpsilon);
  b.epsilon = select_epsilon(q, sim, opt.epsilon_quantile, opt.epsilon_draws, dist, eps_rng).epsilon;

  const QLProposal prop(model);
  ChainConfig cc;
  cc.iterations = opt.iterations;
  cc.epsilon = b.epsilon;
  cc.master_seed = opt.seed;
  const ChainOutput chain = abc_mcmc(sim, prior, prop, dist, cc);
  const ChainSummary cs = diagnostics(chain, 0.1);
  b.ql_acceptance_rate = chain.acceptance_rate;
  b.ql = {"ql-mcmc", RealVector(2), RealVector(2), chain.simulations};
  for (int j = 0; j < 2; ++j) {
    b.ql.mean[j] = cs.coords[j].mean;
    b.ql.se[j] = cs.coords[j].mean_se;
  }

  RandomStream rej_rng(opt.seed, streams::kRejection);
  const RejectionSample rej = abc_rejection(sim, prior, b.epsilon, opt.rejection_draws, dist, rej_rng);
  if (rej.thetas.rows() < 2) throw InsufficientData("rejection kept fewer than two draws at the benchmark epsilon");
  b.rejection = {"rejection", rej.thetas.colwise().mean().transpose(), RealVector(2), rej.simulations};
  for (int j = 0; j < 2; ++j) {
    const auto c = rej.thetas.col(j).array() - b.rejection.mean[j];
    const double k = static_cast<double>(rej.thetas.rows());
    b.rejection.se[j] = std::sqrt(c.square().sum() / (k - 1.0) / k);
  }

  RandomStream is_rng(opt.seed, streams::kImportance);
  const WeightedSample w = abc_importance_sampling(q, sim, prior, b.epsilon, opt.importance_draws, dist, is_rng);
  b.importance = {"importance", w.mean(), w.mean_se(), w.simulations};

  std::string means = "method,mean_1,mean_2,se_1,se_2,simulations\n";
  means += "oracle," + fmt(b.oracle_mean[0]) + "," + fmt(b.oracle_mean[1]) + ",0,0,0\n";
  for (const MethodEstimate* e : {&b.ql, &b.rejection, &b.importance})
    means += e->method + "," + fmt(e->mean[0]) + "," + fmt(e->mean[1]) + "," + fmt(e->se[0]) + "," + fmt(e->se[1]) +
             "," + std::to_string(e->simulations) + "\n";
  write_bundle(out_dir, "gamma_means.csv", means);
  write_bundle(out_dir, "gamma_summary.csv",
               "epsilon,ql_acceptance_rate\n" + fmt(b.epsilon) + "," + fmt(b.ql_acceptance_rate) + "\n");

  if (!out_dir.empty()) {
    // Contour grid: oracle density against a Gaussian kernel estimate from the chain.
    const int m = opt.contour_grid;
    const RealMatrix oracle = normalised(gamma_log_posterior_grid(sample, prior, box, m), box);
    const std::size_t burn = chain.size() / 10;
    const std::size_t stride = std::max<std::size_t>(1, (chain.size() - burn) / 10000);
    std::vector<RealVector> pts;
    for (std::size_t t = burn; t < chain.size(); t += stride)
      pts.push_back(chain.states.row(static_cast<Eigen::Index>(t)).transpose());
    const double npts = static_cast<double>(pts.size());
    RealVector bw(2);
    for (int j = 0; j < 2; ++j) bw[j] = std::max(cs.coords[j].sd, 1e-3) * std::pow(npts, -1.0 / 6.0);
    const RealVector h = box.width() / m;
    std::string grid = "theta_1,theta_2,oracle_density,ql_density\n";
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double x = box.lo[0] + (i + 0.5) * h[0], y = box.lo[1] + (j + 0.5) * h[1];
        double k = 0.0;
        for (const RealVector& p : pts) {
          const double u = (x - p[0]) / bw[0], v = (y - p[1]) / bw[1];
          k += std::exp(-0.5 * (u * u + v * v));
        }
        k /= npts * 2.0 * M_PI * bw[0] * bw[1];
        grid += fmt(x) + "," + fmt(y) + "," + fmt(oracle(i, j)) + "," + fmt(k) + "\n";
      }
    write_bundle(out_dir, "gamma_contour.csv", grid);
  }
  return b;
}

// ---------------------------------------------------------------------------
// g-and-k: credible-interval coverage over prior-drawn replicates.

GkBenchmark benchmark_gk(const GkOptions& opt, const std::string& out_dir) {
  GkBenchmark b;
  const GkModel sim(opt.n);
  const Box box = sim.box();
  const Prior prior = sim.prior().truncated(box);
  const auto model = fit_model(sim, box, opt.pilot_points, VarianceKind::smooth, opt.seed);
  b.covered.assign(4, 0);
  std::vector<double> sq_err(4, 0.0);

  std::string table = "replicate,coordinate,truth,mean,lo,hi,covered,epsilon,epsilon_rule,acceptance_rate\n";
  for (int r = 0; r < opt.replicates; ++r) {
    const std::uint64_t stream = streams::kReplicateBase + static_cast<std::uint64_t>(r);
    RandomStream rng(opt.seed, stream);
    GkReplicate rep;
    rep.truth = prior.sample(rng);
    const RealVector s_obs = sim.simulate(rep.truth, rng).stats;
    const DistanceSpec dist = DistanceSpec::euclidean(s_obs);

    const QLProposal prop(model);
    ChainConfig cc;
    cc.iterations = opt.iterations;
    cc.master_seed = opt.seed;
    cc.init = model->try_inverse(s_obs).value_or(model->closest_lattice_point(s_obs));
    const QLImportance q(model, s_obs);
    if (q.inverse_exists()) {
      rep.epsilon = select_epsilon(q, sim, opt.epsilon_quantile, opt.epsilon_draws, dist, rng).epsilon;
    } else {
      // The additive fit does not reach s_obs: take the quantile along an
      // epsilon = inf probe chain instead.
      cc.stream = stream + (std::uint64_t{3} << 20);
      rep.epsilon = select_epsilon_chain(sim, prior, prop, opt.epsilon_quantile, opt.epsilon_draws, dist, cc).epsilon;
      rep.epsilon_rule = "probe-chain";
    }
    cc.epsilon = rep.epsilon;
    cc.stream = stream + (std::uint64_t{1} << 20);
    const ChainOutput chain = abc_mcmc(sim, prior, prop, dist, cc);
    rep.acceptance_rate = chain.acceptance_rate;
    const ChainSummary s = diagnostics(chain, 0.1);
    rep.mean.resize(4);
    rep.lo.resize(4);
    rep.hi.resize(4);
    for (int j = 0; j < 4; ++j) {
      rep.mean[j] = s.coords[j].mean;
      rep.lo[j] = s.coords[j].q025;
      rep.hi[j] = s.coords[j].q975;
      const bool in = rep.lo[j] <= rep.truth[j] && rep.truth[j] <= rep.hi[j];
      b.covered[j] += in;
      sq_err[j] += (rep.mean[j] - rep.truth[j]) * (rep.mean[j] - rep.truth[j]);
      table += std::to_string(r + 1) + "," + std::to_string(j + 1) + "," + fmt(rep.truth[j]) + "," +
               fmt(rep.mean[j]) + "," + fmt(rep.lo[j]) + "," + fmt(rep.hi[j]) + "," + (in ? "1" : "0") + "," +
               fmt(rep.epsilon) + "," + rep.epsilon_rule + "," + fmt(rep.acceptance_rate) + "\n";
    }
    b.replicates.push_back(std::move(rep));
  }
  std::string mse = "coordinate,mse,covered,replicates\n";
  for (int j = 0; j < 4; ++j)
    mse += std::to_string(j + 1) + "," + fmt(sq_err[j] / std::max(opt.replicates, 1)) + "," +
           std::to_string(b.covered[j]) + "," + std::to_string(opt.replicates) + "\n";
  write_bundle(out_dir, "gk_replicates.csv", table);
  write_bundle(out_dir, "gk_mse.csv", mse);
  return b;
}

// ---------------------------------------------------------------------------
// Pedigree: sign Bayes factors per SNP with the acceptance-rate epsilon rule.

PedigreeBenchmark benchmark_pedigree(const PedigreeOptions& opt, const std::string& out_dir) {
  PedigreeBenchmark b;
  const std::string file = opt.pedigree_file.empty() ? bundled_data_path("toy_pedigree.tsv") : opt.pedigree_file;
  const auto ped = std::make_shared<const Pedigree>(read_pedigree(file));
  const PedigreeModel sim(ped);
  const Box box = sim.box();
  const Prior prior = sim.prior().truncated(box);
  // The pilot residuals of the screening statistics show no trend in theta.
  const auto model = fit_model(sim, box, opt.pilot_points, VarianceKind::constant, opt.seed);
  const QLProposal prop(model);
  const std::vector<int> phen = ped->phenotypes();
  static const char* names[3] = {"het", "aa", "AA"};

  std::string table = "snp,repetition,coordinate,log_bf,epsilon,epsilon_rule,acceptance_rate\n";
  for (std::size_t k = 0; k < ped->snps.size(); ++k) {
    const RealVector s_obs = pedigree_statistics(phen, ped->snps[k]);
    std::vector<std::uint8_t> g;
    for (Genotype x : ped->snps[k]) g.push_back(static_cast<std::uint8_t>(x));
    const DistanceSpec dist = DistanceSpec::pedigree_weighted(s_obs, g);
    // Screening statistics often sit outside the fitted image (e.g. every aa
    // carrier affected); start such chains at the nearest lattice point.
    const RealVector init = model->try_inverse(s_obs).value_or(model->closest_lattice_point(s_obs));
    for (int r = 0; r < opt.repetitions; ++r) {
      ChainConfig cc;
      cc.iterations = opt.iterations;
      cc.master_seed = opt.seed;
      cc.stream = streams::kReplicateBase + k * 4096 + static_cast<std::uint64_t>(r);
      cc.init = init;
      const RateSearch rs = tune_epsilon_rate(sim, prior, prop, dist, cc, opt.rate_lo, opt.rate_hi);
      cc.epsilon = rs.epsilon;
      std::string rule = "mh-rate";
      if (!std::isfinite(rs.epsilon)) {
        // The chain accepts less than rate_lo even at epsilon = inf, so no
        // tolerance reaches the band. Target the ABC acceptance instead:
        // P(rho < epsilon) = 0.3 among the simulations of an epsilon = inf chain.
        cc.epsilon = select_epsilon_chain(sim, prior, prop, 0.5 * (opt.rate_lo + opt.rate_hi), opt.probe_iterations,
                                          dist, cc)
                         .epsilon;
        rule = "abc-rate";
      }
      const ChainOutput chain = abc_mcmc(sim, prior, prop, dist, cc);
      PedigreeRun run;
      run.snp = k < ped->snp_names.size() ? ped->snp_names[k] : "snp" + std::to_string(k + 1);
      run.repetition = r + 1;
      run.epsilon = cc.epsilon;
      run.epsilon_rule = rule;
      run.acceptance_rate = chain.acceptance_rate;
      run.log_bf.resize(3);
      for (int j = 0; j < 3; ++j) {
        run.log_bf[j] = log_bayes_factor(chain, j, 0.1);
        table += run.snp + "," + std::to_string(run.repetition) + "," + names[j] + "," + fmt(run.log_bf[j]) + "," +
                 fmt(run.epsilon) + "," + run.epsilon_rule + "," + fmt(run.acceptance_rate) + "\n";
      }
      b.runs.push_back(std::move(run));
    }
  }
  write_bundle(out_dir, "pedigree_logbf.csv", table);
  return b;
}

}  // namespace qlabc::cli
