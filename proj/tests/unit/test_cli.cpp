#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qlabc/cli.hpp"
#include "qlabc/error.hpp"
#include "qlabc/io.hpp"

using namespace qlabc;
using namespace qlabc::cli;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qlabc-unit-" + name);
  fs::remove_all(p);
  return p.string();
}

RunConfig gamma_config(const std::string& out) {
  RunConfig c;
  c.model = "gamma";
  c.s_obs = {-0.12, -0.26};
  c.iterations = 2000;
  c.epsilon_draws = 1000;
  c.output_dir = out;
  return c;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

bool has_line_starting(const std::string& text, const std::string& prefix) {
  return text.rfind(prefix, 0) == 0 || text.find("\n" + prefix) != std::string::npos;
}

}  // namespace

TEST_CASE("config: defaults resolved and echoed config re-parses to an equal RunConfig") {
  const Context ctx = make_context(parse_config(R"({"model": {"name": "gk"}, "observed": {"simulate_at": [3, 0, 2, -0.6931471805599453]}})"));
  CHECK(ctx.cfg.n == 1000);
  CHECK(ctx.cfg.points_per_dim == 10);
  CHECK(ctx.cfg.box_lo.size() == 4);
  CHECK(ctx.cfg.prior.size() == 4);
  CHECK(ctx.cfg.s_obs.size() == 4);
  const RunConfig back = parse_config(config_to_json(ctx.cfg));
  CHECK(back == ctx.cfg);
  // Resolving again is a fixed point.
  CHECK(make_context(back).cfg == ctx.cfg);
}

TEST_CASE("config: every kind of prior round trips") {
  RunConfig c;
  c.model = "pedigree";
  c.prior = {Marginal::normal(0.5, 2.0), Marginal::uniform(-3.0, 4.0), Marginal::log_exponential(1.5)};
  CHECK(parse_config(config_to_json(c)) == c);
}

TEST_CASE("config: unknown keys, wrong types and invalid values are hard errors") {
  CHECK_THROWS_AS(parse_config(R"({"modle": {"name": "gamma"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"chain": {"iterations": 10, "iteratons": 5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"prior": [{"kind": "normal", "mu": 0}]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"chain": {"iterations": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"epsilon": {"rule": "magic"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"epsilon": {"rule": "quantile", "value": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  try {
    parse_config(R"({"chain": {"iterations": 10, "iteratons": 5}})", "run.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("run.json") != std::string::npos);
    CHECK(msg.find("chain.iteratons") != std::string::npos);
  }
  CHECK_THROWS_AS(make_context(parse_config(R"({"model": {"name": "gamma"}, "observed": {"s_obs": [1]}})")),
                  ConfigError);
  CHECK_THROWS_AS(make_context(parse_config(R"({"model": {"name": "noodle"}})")), ConfigError);
}

TEST_CASE("cmd_pilot: gamma default config gives a 10^4-row CSV, reruns are byte-identical") {
  const std::string out = scratch("pilot");
  RunConfig c;
  c.output_dir = out;
  const Context ctx = make_context(c);
  Log log;
  const PilotData data = cmd_pilot(ctx, log);
  CHECK(data.thetas.rows() == 10000);
  const std::string first = read_file(out + "/pilot.csv");
  CHECK(count_lines(first) == 10002);  // seed comment + header + rows
  CHECK(log.front().find("created output directory") != std::string::npos);
  CHECK(log.back().find("10000 rows") != std::string::npos);
  CHECK(log.back().find("seed 1") != std::string::npos);

  Log again;
  cmd_pilot(ctx, again);
  CHECK(read_file(out + "/pilot.csv") == first);
  CHECK(again.front().find("created output directory") == std::string::npos);
  CHECK(parse_config(read_file(out + "/config.json")) == ctx.cfg);
}

TEST_CASE("cmd_fit: coalescent report flags the flat region at small theta") {
  RunConfig c;
  c.model = "coalescent";
  c.output_dir = scratch("fit-coal");
  const Context ctx = make_context(c);
  Log log;
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  REQUIRE_FALSE(m.monotonicity().flat_regions.empty());
  CHECK(m.monotonicity().flat_regions.front().first == doctest::Approx(-8.0));
  CHECK(m.monotonicity().flat_regions.front().second < 0.0);
  const std::string report = read_file(c.output_dir + "/fit_report.txt");
  CHECK(has_line_starting(report, "flat_region: "));
}

TEST_CASE("cmd_fit: noiseless linear synthetic model has R^2 above 0.9999") {
  Context ctx;
  ctx.cfg.model = "linear";
  ctx.cfg.variance = "constant";
  ctx.cfg.output_dir = scratch("fit-linear");
  const Box box(RealVector::Constant(2, -1.0), RealVector::Constant(2, 1.0));
  ctx.sim = std::make_shared<FunctionSimulator>(
      "linear", box, Prior({Marginal::uniform(-1, 1), Marginal::uniform(-1, 1)}),
      [](const RealVector& t, RandomStream&) {
        RealVector s(2);
        s << 2.0 * t[0] - t[1] + 1.0, 0.5 * t[1];
        return s;
      });
  ctx.design = PilotDesign(box, 15);
  ctx.prior = ctx.sim->prior().truncated(box);
  Log log;
  const PilotData data = run_pilot(ctx.design, *ctx.sim, 1, 1);
  const SurrogateModel m = cmd_fit(ctx, data, log);
  for (double r2 : m.r_squared()) CHECK(r2 > 0.9999);
  const std::string report = read_file(ctx.cfg.output_dir + "/fit_report.txt");
  CHECK(report.find("r_squared_1: ") != std::string::npos);
}

TEST_CASE("cmd_fit: s_obs outside the fitted image produces a coverage warning") {
  RunConfig c = gamma_config(scratch("fit-coverage"));
  c.s_obs = {5.0, 5.0};
  const Context ctx = make_context(c);
  Log log;
  cmd_fit(ctx, cmd_pilot(ctx, log), log);
  const std::string report = read_file(c.output_dir + "/fit_report.txt");
  CHECK(report.find("warning: ") != std::string::npos);
  CHECK(report.find("coverage: s_obs is inside") == std::string::npos);

  c.s_obs = {-0.12, -0.26};
  c.output_dir = scratch("fit-coverage-ok");
  const Context ok = make_context(c);
  Log log2;
  cmd_fit(ok, cmd_pilot(ok, log2), log2);
  CHECK(read_file(c.output_dir + "/fit_report.txt").find("coverage: s_obs is inside") != std::string::npos);
}

TEST_CASE("cmd_sample: gamma end to end reports acceptance rate and a quantile table") {
  const Context ctx = make_context(gamma_config(scratch("sample")));
  Log log;
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  const SampleResult r = cmd_sample(ctx, m, log);
  CHECK(r.chain.size() == 2000);
  const std::string diag = read_file(ctx.cfg.output_dir + "/diagnostics.txt");
  CHECK(has_line_starting(diag, "acceptance_rate: "));
  CHECK(has_line_starting(diag, "theta_2.q975: "));
  const std::string q = read_file(ctx.cfg.output_dir + "/quantiles.csv");
  CHECK(count_lines(q) == 3);
  CHECK(count_lines(read_file(ctx.cfg.output_dir + "/trace.csv")) == 2001);
  CHECK(r.epsilon.rule == "quantile");
  CHECK(r.epsilon.epsilon > 0.0);
}

TEST_CASE("cmd_sample: T = 1 gives a single-row trace") {
  RunConfig c = gamma_config(scratch("sample-t1"));
  c.iterations = 1;
  const Context ctx = make_context(c);
  Log log;
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  const SampleResult r = cmd_sample(ctx, m, log);
  CHECK(r.chain.size() == 1);
  CHECK(count_lines(read_file(c.output_dir + "/trace.csv")) == 2);
}

TEST_CASE("cmd_sample: acceptance-rate rule lands in [0.2, 0.4]") {
  RunConfig c = gamma_config(scratch("sample-rate"));
  c.epsilon_rule = "rate";
  c.iterations = 5000;
  c.proposal_scale = 0.5;
  const Context ctx = make_context(c);
  Log log;
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  const SampleResult r = cmd_sample(ctx, m, log);
  CHECK(std::isfinite(r.epsilon.epsilon));
  CHECK(r.chain.acceptance_rate >= 0.2);
  CHECK(r.chain.acceptance_rate <= 0.4);
}

TEST_CASE("cmd_sample: InitFailed when s_obs is outside the image, SchemaMismatch for a foreign surrogate") {
  RunConfig c = gamma_config(scratch("sample-fail"));
  c.s_obs = {5.0, 5.0};
  const Context ctx = make_context(c);
  Log log;
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  CHECK_THROWS_AS(cmd_sample(ctx, m, log), InitFailed);

  RunConfig k;
  k.model = "coalescent";
  k.s_obs = {2.0};
  k.output_dir = scratch("sample-foreign");
  CHECK_THROWS_AS(cmd_sample(make_context(k), m, log), SchemaMismatch);
}

TEST_CASE("pipeline: separate pilot, fit and sample steps equal the fused run bit for bit") {
  RunConfig c = gamma_config(scratch("fused"));
  const Context fused = make_context(c);
  Log log;
  const PilotData data = cmd_pilot(fused, log);
  const SampleResult a = cmd_sample(fused, cmd_fit(fused, data, log), log);

  c.output_dir = scratch("steps");
  const Context steps = make_context(c);
  Log log2;
  cmd_pilot(steps, log2);
  cmd_fit(steps, read_pilot_csv(c.output_dir + "/pilot.csv"), log2);
  const SampleResult b = cmd_sample(steps, load_surrogate(c.output_dir + "/surrogate.json"), log2);

  CHECK(a.chain.states == b.chain.states);
  for (const char* f : {"pilot.csv", "surrogate.json", "fit_report.txt", "trace.csv", "diagnostics.txt", "quantiles.csv"})
    CHECK_MESSAGE(read_file(fused.cfg.output_dir + "/" + f) == read_file(c.output_dir + "/" + f), f);
}

TEST_CASE("cmd_reject and cmd_is write their samples") {
  RunConfig c = gamma_config(scratch("reject-is"));
  c.rejection_draws = 5000;
  c.importance_draws = 500;
  const Context ctx = make_context(c);
  Log log;
  const RejectionSample r = cmd_reject(ctx, log);
  CHECK(r.thetas.rows() == 50);
  CHECK(count_lines(read_file(c.output_dir + "/rejection.csv")) == 51);
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  const WeightedSample w = cmd_is(ctx, m, log);
  CHECK(w.accepted > 0);
  CHECK(count_lines(read_file(c.output_dir + "/importance.csv")) == static_cast<std::size_t>(w.thetas.rows()) + 1);
}

TEST_CASE("cmd_verify: constant-variance coalescent surrogate satisfies the identity") {
  RunConfig c;
  c.model = "coalescent";
  c.variance = "constant";
  c.s_obs = {2.0};
  c.output_dir = scratch("verify");
  const Context ctx = make_context(c);
  Log log;
  const SurrogateModel m = cmd_fit(ctx, cmd_pilot(ctx, log), log);
  CHECK(cmd_verify(ctx, m, log) < 1e-6);

  RunConfig g = gamma_config(scratch("verify-gamma"));
  const Context gctx = make_context(g);
  const SurrogateModel gm = cmd_fit(gctx, cmd_pilot(gctx, log), log);
  CHECK_THROWS_AS(cmd_verify(gctx, gm, log), ConfigError);
}

TEST_CASE("pedigree context reads s_obs and genotypes from the bundled file") {
  RunConfig c;
  c.model = "pedigree";
  c.snp = 2;
  const Context ctx = make_context(c);
  CHECK(ctx.s_obs.size() == 3);
  CHECK(ctx.observed_genotypes.size() == 10);
  CHECK(ctx.distance().kind == DistanceSpec::Kind::pedigree_weighted);
  c.snp = 3;
  CHECK_THROWS_AS(make_context(c), ConfigError);
}

TEST_CASE("spearman correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 1, 2}, {1, 2, 3}) == doctest::Approx(std::sqrt(0.75)));
  CHECK(spearman({1, 1, 1}, {1, 2, 3}) == 0.0);
}

TEST_CASE("gamma benchmark helpers: synthetic sample hits s_obs, oracle converges in the grid") {
  const RealVector s_obs = (RealVector(2) << -0.12, -0.26).finished();
  const auto y = gamma_synthetic_sample(s_obs, 10);
  const RealVector s = gamma_statistics(y);
  CHECK(s[0] == doctest::Approx(s_obs[0]).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(s_obs[1]).epsilon(1e-12));
  const GammaModel sim(10);
  const Prior prior = sim.prior().truncated(sim.box());
  const RealVector a = gamma_oracle_mean(y, prior, sim.box(), 200);
  const RealVector b = gamma_oracle_mean(y, prior, sim.box(), 400);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-3);
}
