#include "qlabc/error.hpp"
#include "qlabc/models.hpp"

namespace qlabc {

FunctionSimulator::FunctionSimulator(std::string name, Box box, Prior prior, Fn fn)
    : name_(std::move(name)), box_(std::move(box)), prior_(std::move(prior)), fn_(std::move(fn)) {
  if (prior_.dim() != box_.dim()) throw DimensionMismatch("function simulator: prior and box differ");
}

SimOutput FunctionSimulator::simulate(const RealVector& theta, RandomStream& rng) const {
  return {fn_(theta, rng), {}};
}

std::vector<std::string> model_names() { return {"coalescent", "gamma", "gk", "pedigree"}; }

SimulatorPtr make_simulator(const ModelParams& params) {
  const std::string& name = params.name;
  if (name == "coalescent") return std::make_shared<CoalescentModel>(params.n > 0 ? params.n : 100);
  if (name == "gamma") return std::make_shared<GammaModel>(params.n > 0 ? params.n : 10);
  if (name == "gk") return std::make_shared<GkModel>(params.n > 0 ? params.n : 1000);
  if (name == "pedigree") {
    if (params.pedigree_file.empty()) throw ConfigError("pedigree model needs a pedigree file");
    auto ped = std::make_shared<const Pedigree>(read_pedigree(params.pedigree_file));
    return std::make_shared<PedigreeModel>(std::move(ped));
  }
  throw ConfigError("unknown model '" + name + "' (expected coalescent, gamma, gk or pedigree)");
}

}  // namespace qlabc
