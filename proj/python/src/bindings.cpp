#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qlabc/abc.hpp"
#include "qlabc/cli.hpp"
#include "qlabc/error.hpp"
#include "qlabc/models.hpp"
#include "qlabc/surrogate.hpp"

namespace py = pybind11;
using namespace qlabc;

namespace {

using SurrogatePtr = std::shared_ptr<const SurrogateModel>;

Box box_or_default(const Simulator& sim, const std::optional<RealVector>& lo, const std::optional<RealVector>& hi) {
  if (lo.has_value() != hi.has_value()) throw ConfigError("give both box bounds or neither");
  return lo ? Box(*lo, *hi) : sim.box();
}

SurrogatePtr fit(const Simulator& sim, int points_per_dim, const std::string& variance, std::uint64_t seed,
                 const std::optional<RealVector>& lo, const std::optional<RealVector>& hi) {
  if (variance != "smooth" && variance != "constant") throw ConfigError("variance must be smooth or constant");
  const Box box = box_or_default(sim, lo, hi);
  const int m = points_per_dim > 0 ? points_per_dim : default_points_per_dim(box.dim());
  const PilotDesign design(box, m);
  SurrogateModel model = fit_surrogate(run_pilot(design, sim, seed, 1), design,
                                       variance == "smooth" ? VarianceKind::smooth : VarianceKind::constant);
  model.set_model_name(sim.name());
  return std::make_shared<const SurrogateModel>(std::move(model));
}

py::dict chain_dict(const ChainOutput& c) {
  py::dict d;
  d["initial"] = c.initial;
  d["states"] = c.states;
  d["iterations"] = c.iterations;
  d["accepted"] = c.accepted;
  d["distances"] = c.distances;
  d["acceptance_rate"] = c.acceptance_rate;
  d["simulations"] = c.simulations;
  d["outside_image"] = c.outside_image;
  return d;
}

py::dict mcmc(const Simulator& sim, const SurrogatePtr& surrogate, const RealVector& s_obs, double epsilon,
              std::size_t iterations, std::uint64_t seed, const std::optional<RealVector>& init, double scale,
              std::size_t thinning) {
  if (!surrogate) throw ConfigError("abc_mcmc needs a surrogate");
  const QLProposal prop(surrogate, scale);
  ChainConfig cc;
  cc.iterations = iterations;
  cc.epsilon = epsilon;
  cc.master_seed = seed;
  cc.thinning = thinning;
  cc.init = init;
  const Prior prior = sim.prior().truncated(surrogate->domain());
  ChainOutput out;
  {
    py::gil_scoped_release release;
    out = abc_mcmc(sim, prior, prop, DistanceSpec::euclidean(s_obs), cc);
  }
  return chain_dict(out);
}

// Pilot, fit and sample from a JSON config, writing the usual output files.
py::dict run(const std::string& config_json) {
  const cli::Context ctx = cli::make_context(cli::parse_config(config_json));
  cli::Log log;
  cli::SampleResult r;
  {
    py::gil_scoped_release release;
    const PilotData data = cli::cmd_pilot(ctx, log);
    const SurrogateModel m = cli::cmd_fit(ctx, data, log);
    r = cli::cmd_sample(ctx, m, log);
  }
  py::dict d = chain_dict(r.chain);
  d["epsilon"] = r.epsilon.epsilon;
  d["epsilon_rule"] = r.epsilon.rule;
  d["log"] = log;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ABC-MCMC with a quasi-likelihood proposal built from a pilot run";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<SchemaMismatch>(m, "SchemaMismatch", error.ptr());
  py::register_exception<InitFailed>(m, "InitFailed", error.ptr());
  py::register_exception<OutOfDomain>(m, "OutOfDomain", error.ptr());

  m.def("model_names", &model_names);

  py::class_<Simulator, std::shared_ptr<Simulator>>(m, "Simulator")
      .def_property_readonly("name", &Simulator::name)
      .def_property_readonly("dim", &Simulator::dim)
      .def_property_readonly("sample_size", &Simulator::sample_size)
      .def_property_readonly("box",
                             [](const Simulator& s) {
                               const Box b = s.box();
                               return py::make_tuple(b.lo, b.hi);
                             })
      .def(
          "simulate",
          [](const Simulator& s, const RealVector& theta, std::uint64_t seed, std::uint64_t stream) {
            if (theta.size() != s.dim()) throw DimensionMismatch("theta has the wrong dimension");
            RandomStream rng(seed, stream);
            return s.simulate(theta, rng).stats;
          },
          py::arg("theta"), py::arg("seed") = 1, py::arg("stream") = 0);

  m.def(
      "make_simulator",
      [](const std::string& name, int n, const std::string& pedigree_file) {
        ModelParams p{name, n, pedigree_file};
        if (name == "pedigree" && pedigree_file.empty()) p.pedigree_file = cli::bundled_data_path("toy_pedigree.tsv");
        return std::const_pointer_cast<Simulator>(make_simulator(p));
      },
      py::arg("name"), py::arg("n") = 0, py::arg("pedigree_file") = "");

  py::class_<SurrogateModel, std::shared_ptr<SurrogateModel>>(m, "Surrogate")
      .def_property_readonly("dim", &SurrogateModel::dim)
      .def_property_readonly("model_name", &SurrogateModel::model_name)
      .def_property_readonly("box",
                             [](const SurrogateModel& s) { return py::make_tuple(s.domain().lo, s.domain().hi); })
      .def("forward", &SurrogateModel::forward, py::arg("theta"))
      .def("inverse", &SurrogateModel::try_inverse, py::arg("s"), py::arg("hint") = std::nullopt,
           "Preimage of s inside the box, or None when there is none.")
      .def("jacobian", &SurrogateModel::jacobian, py::arg("theta"))
      .def("jacobian_logdet", &SurrogateModel::jacobian_logdet, py::arg("theta"))
      .def("variance", &SurrogateModel::variance_at, py::arg("theta"))
      .def("coverage_warning", [](const SurrogateModel& s, const RealVector& s_obs) { return coverage_warning(s, s_obs); })
      .def("save", [](const SurrogateModel& s, const std::string& path) { save_surrogate(path, s); });

  m.def(
      "fit_surrogate",
      [](const Simulator& sim, int points_per_dim, const std::string& variance, std::uint64_t seed,
         const std::optional<RealVector>& lo, const std::optional<RealVector>& hi) {
        py::gil_scoped_release release;
        return std::const_pointer_cast<SurrogateModel>(fit(sim, points_per_dim, variance, seed, lo, hi));
      },
      py::arg("simulator"), py::arg("points_per_dim") = 0, py::arg("variance") = "smooth", py::arg("seed") = 1,
      py::arg("box_lo") = std::nullopt, py::arg("box_hi") = std::nullopt);
  m.def(
      "load_surrogate", [](const std::string& path) { return std::make_shared<SurrogateModel>(load_surrogate(path)); },
      py::arg("path"));

  m.def(
      "abc_mcmc",
      [](const Simulator& sim, const std::shared_ptr<SurrogateModel>& s, const RealVector& s_obs, double epsilon,
         std::size_t iterations, std::uint64_t seed, const std::optional<RealVector>& init, double scale,
         std::size_t thinning) { return mcmc(sim, s, s_obs, epsilon, iterations, seed, init, scale, thinning); },
      py::arg("simulator"), py::arg("surrogate"), py::arg("s_obs"),
      py::arg("epsilon") = std::numeric_limits<double>::infinity(), py::arg("iterations") = 10000,
      py::arg("seed") = 1, py::arg("init") = std::nullopt, py::arg("proposal_scale") = 1.0, py::arg("thinning") = 1);

  m.def(
      "abc_rejection",
      [](const Simulator& sim, const RealVector& s_obs, double epsilon, std::size_t n, std::uint64_t seed) {
        RandomStream rng(seed, streams::kRejection);
        RejectionSample r;
        {
          py::gil_scoped_release release;
          r = abc_rejection(sim, sim.prior().truncated(sim.box()), epsilon, n, DistanceSpec::euclidean(s_obs), rng);
        }
        py::dict d;
        d["thetas"] = r.thetas;
        d["distances"] = r.distances;
        d["simulations"] = r.simulations;
        return d;
      },
      py::arg("simulator"), py::arg("s_obs"), py::arg("epsilon"), py::arg("n") = 10000, py::arg("seed") = 1);

  m.def(
      "log_bayes_factor",
      [](const RealMatrix& states, Eigen::Index j, double burn_in) { return log_bayes_factor(states, j, burn_in); },
      py::arg("states"), py::arg("coordinate"), py::arg("burn_in") = 0.1);
  m.def(
      "verify_proposition1",
      [](const SurrogateModel& s, double s_obs, const std::vector<double>& grid, int panels) {
        return verify_proposition1(s, s_obs, grid, panels, 1.0);
      },
      py::arg("surrogate"), py::arg("s_obs"), py::arg("grid"), py::arg("panels") = 10000);

  m.def(
      "normalize_config", [](const std::string& text) { return cli::config_to_json(cli::parse_config(text)); },
      py::arg("config_json"));
  m.def("run", &run, py::arg("config_json"));
}
