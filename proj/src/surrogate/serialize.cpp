#include <json.hpp>

#include "qlabc/error.hpp"
#include "qlabc/surrogate.hpp"

namespace qlabc {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "qlabc-surrogate";

json vec_json(const RealVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RealVector vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const RealVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const RealMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

RealMatrix mat_from(const json& j, Eigen::Index cols) {
  RealMatrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const RealVector r = vec_from(j.at(static_cast<std::size_t>(i)));
    if (r.size() != cols) throw SchemaMismatch("surrogate table row has the wrong width");
    m.row(i) = r.transpose();
  }
  return m;
}

json spline_json(const SmoothingSpline& s) {
  json coef = json::array();
  for (const auto& c : s.coefficients()) coef.push_back({c[0], c[1], c[2], c[3]});
  return {{"knots", s.knots()}, {"coefficients", coef}, {"penalty", s.penalty()}, {"edf", s.edf()}};
}

SmoothingSpline spline_from(const json& j) {
  std::vector<SmoothingSpline::Cubic> coef;
  for (const auto& c : j.at("coefficients")) coef.push_back(c.get<SmoothingSpline::Cubic>());
  return SmoothingSpline(j.at("knots").get<std::vector<double>>(), std::move(coef),
                         j.at("penalty").get<double>(), j.at("edf").get<double>());
}

json additive_json(const AdditiveSurface& a) {
  json comps = json::array();
  for (const auto& c : a.components()) comps.push_back(spline_json(c));
  return {{"intercept", a.intercept()}, {"components", comps}, {"converged", a.converged()},
          {"sweeps", a.sweeps()}};
}

AdditiveSurface additive_from(const json& j) {
  std::vector<SmoothingSpline> comps;
  for (const auto& c : j.at("components")) comps.push_back(spline_from(c));
  return AdditiveSurface(j.at("intercept").get<double>(), std::move(comps), j.at("converged").get<bool>(),
                         j.at("sweeps").get<int>());
}

json variance_json(const VarianceSurface& v) {
  if (v.kind() == VarianceKind::constant) return {{"kind", "constant"}, {"value", v.constant_value()}};
  json model;
  if (const auto* s = std::get_if<SmoothingSpline>(&v.log_model()))
    model = {{"type", "spline"}, {"spline", spline_json(*s)}};
  else if (const auto* a = std::get_if<AdditiveSurface>(&v.log_model()))
    model = {{"type", "additive"}, {"additive", additive_json(*a)}};
  return {{"kind", "smooth"}, {"log_model", model}};
}

VarianceSurface variance_from(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "constant") return VarianceSurface::constant(j.at("value").get<double>());
  if (kind != "smooth") throw SchemaMismatch("unknown variance kind '" + kind + "'");
  const json& model = j.at("log_model");
  const auto type = model.at("type").get<std::string>();
  if (type == "spline") return VarianceSurface::smooth(spline_from(model.at("spline")));
  if (type == "additive") return VarianceSurface::smooth(additive_from(model.at("additive")));
  throw SchemaMismatch("unknown log-variance model '" + type + "'");
}

}  // namespace

std::string serialize_surrogate(const SurrogateModel& m) {
  const Eigen::Index p = m.dim();
  json j;
  j["format"] = kFormat;
  j["schema_version"] = SurrogateModel::kSchemaVersion;
  j["model"] = m.model_name_;
  j["dim"] = p;
  j["design"] = {{"lo", vec_json(m.domain().lo)},
                 {"hi", vec_json(m.domain().hi)},
                 {"points_per_dim", m.design_.points_per_dim()}};
  j["variance_mode"] = to_string(m.variance_kind_);
  if (p == 1) {
    j["forward"] = {{"type", "spline"}, {"spline", spline_json(m.scalar_forward_)}};
  } else {
    json surfaces = json::array();
    for (const auto& a : m.additive_forward_) surfaces.push_back(additive_json(a));
    j["forward"] = {{"type", "additive"}, {"surfaces", surfaces}};
  }
  json var = json::array();
  for (const auto& v : m.variance_) var.push_back(variance_json(v));
  j["variance"] = var;
  if (p > 1 && m.variance_kind_ == VarianceKind::constant) j["sigma"] = mat_json(m.sigma_);
  j["tables"] = {{"forward", mat_json(m.forward_table_)}, {"jacobian", mat_json(m.jacobian_table_)}};
  j["r_squared"] = m.r2_;
  json flat = json::array();
  for (const auto& [a, b] : m.monotonicity_.flat_regions) flat.push_back({a, b});
  j["monotonicity"] = {{"monotone", m.monotonicity_.monotone},
                       {"sign", m.monotonicity_.sign},
                       {"flat_regions", flat}};
  j["warnings"] = m.warnings_;
  return j.dump(1) + "\n";
}

SurrogateModel deserialize_surrogate(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("surrogate file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kFormat)
      throw SchemaMismatch("not a surrogate file (missing format tag)");
    const int version = j.at("schema_version").get<int>();
    if (version != SurrogateModel::kSchemaVersion)
      throw SchemaMismatch("surrogate schema version " + std::to_string(version) + " but this build reads version " +
                           std::to_string(SurrogateModel::kSchemaVersion));
    SurrogateModel m;
    m.model_name_ = j.at("model").get<std::string>();
    const auto p = j.at("dim").get<Eigen::Index>();
    const json& d = j.at("design");
    m.design_ = PilotDesign(Box(vec_from(d.at("lo")), vec_from(d.at("hi"))), d.at("points_per_dim").get<int>());
    if (m.design_.dim() != p) throw SchemaMismatch("design dimension disagrees with dim");
    m.variance_kind_ = parse_variance_kind(j.at("variance_mode").get<std::string>());

    const json& fwd = j.at("forward");
    if (p == 1) {
      if (fwd.at("type") != "spline") throw SchemaMismatch("p = 1 surrogate needs a spline forward map");
      m.scalar_forward_ = spline_from(fwd.at("spline"));
    } else {
      if (fwd.at("type") != "additive") throw SchemaMismatch("p > 1 surrogate needs additive forward maps");
      for (const auto& a : fwd.at("surfaces")) m.additive_forward_.push_back(additive_from(a));
      if (static_cast<Eigen::Index>(m.additive_forward_.size()) != p)
        throw SchemaMismatch("wrong number of forward surfaces");
    }
    for (const auto& v : j.at("variance")) m.variance_.push_back(variance_from(v));
    if (p > 1 && m.variance_kind_ == VarianceKind::constant) {
      m.sigma_ = mat_from(j.at("sigma"), p);
      if (m.sigma_.rows() != p) throw SchemaMismatch("sigma has the wrong size");
    } else if (static_cast<Eigen::Index>(m.variance_.size()) != p) {
      throw SchemaMismatch("wrong number of variance surfaces");
    }
    const json& t = j.at("tables");
    m.forward_table_ = mat_from(t.at("forward"), p);
    m.jacobian_table_ = p == 1 ? RealMatrix(0, 0) : mat_from(t.at("jacobian"), p * p);
    const auto rows = static_cast<Eigen::Index>(m.design_.total_points());
    if (m.forward_table_.rows() != rows || (p > 1 && m.jacobian_table_.rows() != rows))
      throw SchemaMismatch("lattice tables do not match the design size");
    m.r2_ = j.at("r_squared").get<std::vector<double>>();
    const json& mono = j.at("monotonicity");
    m.monotonicity_.monotone = mono.at("monotone").get<bool>();
    m.monotonicity_.sign = mono.at("sign").get<int>();
    for (const auto& r : mono.at("flat_regions")) m.monotonicity_.flat_regions.push_back({r.at(0), r.at(1)});
    m.warnings_ = j.at("warnings").get<std::vector<std::string>>();
    m.finish_setup();
    return m;
  } catch (const json::exception& e) {
    throw SchemaMismatch(std::string("malformed surrogate file: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaMismatch(std::string("malformed surrogate file: ") + e.what());
  }
}

void save_surrogate(const std::string& path, const SurrogateModel& m) {
  write_file_atomic(path, serialize_surrogate(m));
}

SurrogateModel load_surrogate(const std::string& path) {
  try {
    return deserialize_surrogate(read_file(path));
  } catch (const SchemaMismatch& e) {
    throw SchemaMismatch(path + ": " + e.what());
  }
}

}  // namespace qlabc
