#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "qlabc/cli.hpp"
#include "qlabc/error.hpp"

namespace fs = std::filesystem;
using namespace qlabc;
using namespace qlabc::cli;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  std::optional<double> epsilon;
  std::optional<std::string> out;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "JSON config file (defaults apply when omitted)");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--iterations", o.iterations, "chain length T");
  app->add_option("--epsilon", o.epsilon, "fixed tolerance (switches the epsilon rule to fixed)");
  app->add_option("--out", o.out, "output directory");
}

Context context(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.iterations) {
    if (*o.iterations < 1) throw ConfigError("--iterations must be at least 1");
    cfg.iterations = *o.iterations;
    cfg.thinning = std::min(cfg.thinning, cfg.iterations);
  }
  if (o.epsilon) {
    if (!(*o.epsilon > 0.0)) throw ConfigError("--epsilon must be positive");
    cfg.epsilon_rule = "fixed";
    cfg.epsilon_value = *o.epsilon;
  }
  if (o.out) cfg.output_dir = *o.out;
  return make_context(cfg);
}

std::string in_out(const Context& ctx, const std::string& given, const char* name) {
  return given.empty() ? (fs::path(ctx.cfg.output_dir) / name).string() : given;
}

void print(const Log& log) {
  for (const auto& line : log) std::cout << line << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qlabc: ABC-MCMC with a quasi-likelihood proposal"};
  app.require_subcommand(1);
  Overrides o;
  std::string pilot_file, surrogate_file, bench_name;

  auto* pilot = app.add_subcommand("pilot", "simulate the pilot lattice");
  auto* fit = app.add_subcommand("fit", "fit the surrogate to a pilot CSV");
  auto* epsilon = app.add_subcommand("epsilon", "choose the tolerance");
  auto* sample = app.add_subcommand("sample", "run the ABC-MCMC chain");
  auto* reject = app.add_subcommand("reject", "plain ABC rejection");
  auto* is = app.add_subcommand("is", "ABC importance sampling with the QL proposal");
  auto* verify = app.add_subcommand("verify", "check the quasi-likelihood / normal kernel identity (p = 1)");
  auto* run = app.add_subcommand("run", "pilot, fit and sample in one invocation");
  auto* bench = app.add_subcommand("benchmark", "reproduce a benchmark: coalescent, gamma, gk or pedigree");
  for (auto* sub : {pilot, fit, epsilon, sample, reject, is, verify, run}) add_overrides(sub, o);
  fit->add_option("--pilot", pilot_file, "pilot CSV (default: <out>/pilot.csv)");
  for (auto* sub : {epsilon, sample, is, verify})
    sub->add_option("--surrogate", surrogate_file, "surrogate file (default: <out>/surrogate.json)");
  bench->add_option("name", bench_name, "benchmark name")
      ->required()
      ->check(CLI::IsMember({"coalescent", "gamma", "gk", "pedigree"}));
  bench->add_option("--seed", o.seed, "master seed");
  bench->add_option("--iterations", o.iterations, "chain length T");
  bench->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    Log log;
    if (*bench) {
      const std::string out = o.out.value_or("qlabc-benchmark-" + bench_name);
      fs::create_directories(out);
      const std::uint64_t seed = o.seed.value_or(1);
      if (bench_name == "coalescent") {
        CoalescentOptions opt;
        opt.seed = seed;
        if (o.iterations) opt.iterations = *o.iterations;
        const auto b = benchmark_coalescent(opt, out);
        std::cout << "coalescent: " << b.rows.size() << " theta' values, spearman ql " << b.spearman_ql
                  << ", rejection " << b.spearman_rejection << "\n";
      } else if (bench_name == "gamma") {
        GammaOptions opt;
        opt.seed = seed;
        if (o.iterations) opt.iterations = *o.iterations;
        const auto b = benchmark_gamma(opt, out);
        std::cout << "gamma: oracle mean (" << b.oracle_mean[0] << ", " << b.oracle_mean[1] << "), ql mean ("
                  << b.ql.mean[0] << ", " << b.ql.mean[1] << ")\n";
      } else if (bench_name == "gk") {
        GkOptions opt;
        opt.seed = seed;
        if (o.iterations) opt.iterations = *o.iterations;
        const auto b = benchmark_gk(opt, out);
        std::cout << "gk: coverage";
        for (int c : b.covered) std::cout << " " << c << "/" << opt.replicates;
        std::cout << "\n";
      } else {
        PedigreeOptions opt;
        opt.seed = seed;
        if (o.iterations) opt.iterations = *o.iterations;
        const auto b = benchmark_pedigree(opt, out);
        std::cout << "pedigree: " << b.runs.size() << " chains\n";
      }
      std::cout << "wrote " << out << "\n";
      return 0;
    }

    const Context ctx = context(o);
    if (*pilot) {
      cmd_pilot(ctx, log);
    } else if (*fit) {
      cmd_fit(ctx, read_pilot_csv(in_out(ctx, pilot_file, "pilot.csv")), log);
    } else if (*run) {
      const PilotData data = cmd_pilot(ctx, log);
      const SurrogateModel m = cmd_fit(ctx, data, log);
      cmd_sample(ctx, m, log);
    } else if (*reject) {
      cmd_reject(ctx, log);
    } else {
      const SurrogateModel m = load_surrogate(in_out(ctx, surrogate_file, "surrogate.json"));
      if (*epsilon) cmd_epsilon(ctx, m, log);
      if (*sample) cmd_sample(ctx, m, log);
      if (*is) cmd_is(ctx, m, log);
      if (*verify) cmd_verify(ctx, m, log);
    }
    print(log);
    return 0;
  } catch (const InitFailed& e) {
    std::cerr << "error: " << e.what()
              << "\nhint: s_obs may lie outside the fitted image; set chain.init or widen the pilot box\n";
    return e.exit_code();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
