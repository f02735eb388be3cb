#include <cstdlib>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "qlabc/cli.hpp"
#include "qlabc/error.hpp"
#include "qlabc/io.hpp"

#ifndef QLABC_DEFAULT_DATA_DIR
#define QLABC_DEFAULT_DATA_DIR "data"
#endif

namespace qlabc::cli {

using nlohmann::json;

namespace {

// Reads the keys of one config section and rejects anything left over.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + path(key) + "' has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

Marginal marginal_from(const json& j, const std::string& where) {
  Section s(j, where);
  std::string kind;
  s.get("kind", kind);
  Marginal m;
  if (kind == "normal") {
    double mean = 0.0, sd = 1.0;
    s.get("mean", mean);
    s.get("sd", sd);
    m = Marginal::normal(mean, sd);
  } else if (kind == "uniform") {
    double lo = 0.0, hi = 1.0;
    s.get("lo", lo);
    s.get("hi", hi);
    m = Marginal::uniform(lo, hi);
  } else if (kind == "log-exponential") {
    double rate = 1.0;
    s.get("rate", rate);
    m = Marginal::log_exponential(rate);
  } else {
    throw ConfigError(where + ".kind must be normal, uniform or log-exponential");
  }
  s.finish();
  return m;
}

json marginal_json(const Marginal& m) {
  switch (m.kind) {
    case Marginal::Kind::normal:
      return {{"kind", "normal"}, {"mean", m.a}, {"sd", m.b}};
    case Marginal::Kind::uniform:
      return {{"kind", "uniform"}, {"lo", m.a}, {"hi", m.b}};
    case Marginal::Kind::log_exponential:
      break;
  }
  return {{"kind", "log-exponential"}, {"rate", m.a}};
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": not valid JSON: " + e.what());
  }
  RunConfig c;
  try {
    Section top(j, "");
    if (const json* m = top.sub("model")) {
      Section s(*m, "model");
      s.get("name", c.model);
      s.get("n", c.n);
      s.get("pedigree_file", c.pedigree_file);
      s.get("snp", c.snp);
      s.finish();
    }
    if (const json* o = top.sub("observed")) {
      Section s(*o, "observed");
      s.get("s_obs", c.s_obs);
      s.get("simulate_at", c.simulate_at);
      s.finish();
    }
    if (const json* p = top.sub("pilot")) {
      Section s(*p, "pilot");
      s.get("lo", c.box_lo);
      s.get("hi", c.box_hi);
      s.get("points_per_dim", c.points_per_dim);
      s.get("threads", c.threads);
      s.finish();
    }
    if (const json* v = top.sub("surrogate")) {
      Section s(*v, "surrogate");
      s.get("variance", c.variance);
      s.finish();
    }
    if (const json* pr = top.sub("prior")) {
      if (!pr->is_array()) throw ConfigError("config key 'prior' must be a list of marginals");
      for (std::size_t i = 0; i < pr->size(); ++i)
        c.prior.push_back(marginal_from(pr->at(i), "prior[" + std::to_string(i) + "]"));
    }
    if (const json* e = top.sub("epsilon")) {
      Section s(*e, "epsilon");
      s.get("rule", c.epsilon_rule);
      s.get("value", c.epsilon_value);
      s.get("draws", c.epsilon_draws);
      s.get("rate_lo", c.rate_lo);
      s.get("rate_hi", c.rate_hi);
      s.get("trial_iterations", c.rate_trial_iterations);
      s.finish();
    }
    if (const json* ch = top.sub("chain")) {
      Section s(*ch, "chain");
      s.get("iterations", c.iterations);
      if (const json* init = s.sub("init")) {
        if (init->is_string()) {
          if (*init != "observation") throw ConfigError("chain.init must be \"observation\" or a list");
        } else {
          s.get("init", c.init);
        }
      }
      s.get("thinning", c.thinning);
      s.get("burn_in", c.burn_in);
      s.get("proposal", c.proposal);
      s.get("scale", c.proposal_scale);
      s.finish();
    }
    if (const json* r = top.sub("rejection")) {
      Section s(*r, "rejection");
      s.get("draws", c.rejection_draws);
      s.get("keep_fraction", c.rejection_keep);
      s.finish();
    }
    if (const json* is = top.sub("importance")) {
      Section s(*is, "importance");
      s.get("draws", c.importance_draws);
      s.finish();
    }
    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);
    top.finish();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }

  try {
    check(c.epsilon_rule == "fixed" || c.epsilon_rule == "quantile" || c.epsilon_rule == "rate",
          "epsilon.rule must be fixed, quantile or rate");
    if (c.epsilon_rule == "fixed") check(c.epsilon_value > 0.0, "a fixed epsilon must be positive");
    if (c.epsilon_rule == "quantile") check(c.epsilon_value > 0.0 && c.epsilon_value < 1.0, "epsilon quantile must lie in (0, 1)");
    check(c.rate_lo > 0.0 && c.rate_lo < c.rate_hi && c.rate_hi < 1.0, "need 0 < rate_lo < rate_hi < 1");
    check(c.epsilon_draws >= 2, "epsilon.draws must be at least 2");
    check(c.iterations >= 1, "chain.iterations must be at least 1");
    check(c.thinning >= 1 && c.thinning <= c.iterations, "chain.thinning must be in [1, iterations]");
    check(c.burn_in >= 0.0 && c.burn_in < 1.0, "chain.burn_in must lie in [0, 1)");
    check(c.proposal == "random-walk" || c.proposal == "independence",
          "chain.proposal must be random-walk or independence");
    check(c.proposal_scale > 0.0, "chain.scale must be positive");
    check(c.rejection_keep > 0.0 && c.rejection_keep <= 1.0, "rejection.keep_fraction must lie in (0, 1]");
    check(c.rejection_draws >= 1 && c.importance_draws >= 1, "draw counts must be positive");
    check(c.points_per_dim == 0 || c.points_per_dim >= 2, "pilot.points_per_dim must be at least 2");
    check(c.variance == "constant" || c.variance == "smooth", "surrogate.variance must be constant or smooth");
    check(c.snp >= 1, "model.snp is 1-based");
    check(c.n >= 0, "model.n must be non-negative");
    check(!c.output_dir.empty(), "output_dir must not be empty");
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

std::string config_to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"name", c.model}, {"n", c.n}, {"pedigree_file", c.pedigree_file}, {"snp", c.snp}};
  j["observed"] = {{"s_obs", c.s_obs}, {"simulate_at", c.simulate_at}};
  j["pilot"] = {{"lo", c.box_lo}, {"hi", c.box_hi}, {"points_per_dim", c.points_per_dim}, {"threads", c.threads}};
  j["surrogate"] = {{"variance", c.variance}};
  json prior = json::array();
  for (const auto& m : c.prior) prior.push_back(marginal_json(m));
  j["prior"] = prior;
  j["epsilon"] = {{"rule", c.epsilon_rule},
                  {"value", c.epsilon_value},
                  {"draws", c.epsilon_draws},
                  {"rate_lo", c.rate_lo},
                  {"rate_hi", c.rate_hi},
                  {"trial_iterations", c.rate_trial_iterations}};
  j["chain"] = {{"iterations", c.iterations},
                {"init", c.init.empty() ? json("observation") : json(c.init)},
                {"thinning", c.thinning},
                {"burn_in", c.burn_in},
                {"proposal", c.proposal},
                {"scale", c.proposal_scale}};
  j["rejection"] = {{"draws", c.rejection_draws}, {"keep_fraction", c.rejection_keep}};
  j["importance"] = {{"draws", c.importance_draws}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

std::string bundled_data_path(const std::string& name) {
  const char* env = std::getenv("QLABC_DATA_DIR");
  const std::filesystem::path dir = env && *env ? env : QLABC_DEFAULT_DATA_DIR;
  return (dir / name).string();
}

}  // namespace qlabc::cli
