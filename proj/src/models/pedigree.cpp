#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "qlabc/error.hpp"
#include "qlabc/models.hpp"

namespace qlabc {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}

bool is_na(const std::string& s) { return s == "NA" || s.empty(); }

bool parse_flag(const std::string& s, const std::string& where) {
  if (s == "1" || s == "yes" || s == "true" || s == "TRUE") return true;
  if (s == "0" || s == "no" || s == "false" || s == "FALSE") return false;
  throw ConfigError(where + ": observed flag must be 0/1, got '" + s + "'");
}

int parse_phenotype(const std::string& s, const std::string& where) {
  if (is_na(s)) return -1;
  if (s == "1" || s == "affected") return 1;
  if (s == "0" || s == "healthy") return 0;
  throw ConfigError(where + ": phenotype must be affected, healthy or NA, got '" + s + "'");
}

}  // namespace

Genotype parse_genotype(const std::string& text) {
  if (text == "aa" || text == "0") return Genotype::aa;
  if (text == "aA" || text == "Aa" || text == "het" || text == "1") return Genotype::het;
  if (text == "AA" || text == "2") return Genotype::AA;
  throw ConfigError("unknown genotype '" + text + "' (expected aa, aA, Aa or AA)");
}

std::string to_string(Genotype g) {
  switch (g) {
    case Genotype::aa: return "aa";
    case Genotype::het: return "aA";
    case Genotype::AA: return "AA";
  }
  return "?";
}

std::vector<int> Pedigree::phenotypes() const {
  std::vector<int> y;
  y.reserve(observed.size());
  for (int i : observed) y.push_back(people[i].phenotype);
  return y;
}

Pedigree parse_pedigree(std::istream& in, const std::string& source) {
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_tabs(line);
    break;
  }
  const std::vector<std::string> required = {"id", "mother", "father", "observed", "phenotype"};
  if (header.size() < required.size() ||
      !std::equal(required.begin(), required.end(), header.begin()))
    throw ConfigError(source + ": header must start with id, mother, father, observed, phenotype");
  const std::size_t n_snp = header.size() - required.size();

  struct Row {
    std::string id, mother, father;
    bool observed;
    int phenotype;
    std::vector<std::string> snps;
    int line;
  };
  std::vector<Row> rows;
  std::map<std::string, std::size_t> by_id;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (f.size() != header.size())
      throw ConfigError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(f.size()));
    Row r{f[0], f[1], f[2], parse_flag(f[3], where), parse_phenotype(f[4], where),
          std::vector<std::string>(f.begin() + 5, f.end()), line_no};
    if (is_na(r.id)) throw ConfigError(where + ": missing id");
    if (by_id.count(r.id)) throw ConfigError(where + ": duplicate id '" + r.id + "'");
    if (is_na(r.mother) != is_na(r.father))
      throw ConfigError(where + ": '" + r.id + "' has exactly one parent; need both or neither");
    if (r.observed && r.phenotype < 0)
      throw ConfigError(where + ": observed individual '" + r.id + "' has no phenotype");
    by_id[r.id] = rows.size();
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError(source + ": no individuals");

  for (const auto& r : rows) {
    for (const auto* parent : {&r.mother, &r.father}) {
      if (!is_na(*parent) && !by_id.count(*parent))
        throw ConfigError(source + ":" + std::to_string(r.line) + ": parent '" + *parent +
                          "' of '" + r.id + "' is not in the tree");
      if (*parent == r.id) throw ConfigError(source + ": '" + r.id + "' is its own parent");
    }
  }

  // Topological order, parents first; a cycle leaves nodes unplaced.
  std::vector<int> placed(rows.size(), -1);
  Pedigree ped;
  bool progress = true;
  while (progress && ped.people.size() < rows.size()) {
    progress = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (placed[i] >= 0) continue;
      const auto& r = rows[i];
      int m = -1, f = -1;
      if (!is_na(r.mother)) {
        m = placed[by_id[r.mother]];
        f = placed[by_id[r.father]];
        if (m < 0 || f < 0) continue;
      }
      placed[i] = static_cast<int>(ped.people.size());
      ped.people.push_back({r.id, m, f, r.observed, r.phenotype});
      progress = true;
    }
  }
  if (ped.people.size() < rows.size()) throw ConfigError(source + ": ancestry graph has a cycle");

  ped.snp_names.assign(header.begin() + 5, header.end());
  ped.snps.assign(n_snp, {});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].observed) continue;
    ped.observed.push_back(placed[i]);
    for (std::size_t k = 0; k < n_snp; ++k) {
      const auto& g = rows[i].snps[k];
      if (is_na(g))
        throw ConfigError(source + ":" + std::to_string(rows[i].line) + ": observed '" +
                          rows[i].id + "' lacks a genotype for " + ped.snp_names[k]);
      ped.snps[k].push_back(parse_genotype(g));
    }
  }
  if (ped.observed.empty()) throw ConfigError(source + ": no observed individuals");
  return ped;
}

Pedigree read_pedigree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pedigree file '" + path + "'");
  return parse_pedigree(in, path);
}

Genotype mendel_child(Genotype mother, Genotype father, RandomStream& rng) {
  // A parent with k copies of A transmits A with probability k / 2.
  auto transmit = [&](Genotype g) -> int {
    const int k = static_cast<int>(g);
    if (k == 0) return 0;
    if (k == 2) return 1;
    return rng.bernoulli(0.5) ? 1 : 0;
  };
  const int a = transmit(mother);
  const int b = transmit(father);
  return static_cast<Genotype>(a + b);
}

RealVector pedigree_statistics(const std::vector<int>& phenotypes,
                               const std::vector<Genotype>& genotypes) {
  if (phenotypes.size() != genotypes.size())
    throw DimensionMismatch("pedigree statistics: phenotype and genotype counts differ");
  double affected[3] = {0, 0, 0}, total[3] = {0, 0, 0};
  for (std::size_t i = 0; i < genotypes.size(); ++i) {
    const int k = static_cast<int>(genotypes[i]);
    total[k] += 1.0;
    if (phenotypes[i] == 1) affected[k] += 1.0;
  }
  RealVector s(3);
  for (int k = 0; k < 3; ++k) s[k] = std::log((1.0 + affected[k]) / (2.0 + total[k]));
  return s;
}

double pedigree_logit(const RealVector& theta, Genotype g) {
  switch (g) {
    case Genotype::het: return theta[0];
    case Genotype::aa: return theta[1];
    case Genotype::AA: return theta[2];
  }
  return 0.0;
}

PedigreeDraw simulate_pedigree(const RealVector& theta, const Pedigree& ped, RandomStream& rng) {
  if (theta.size() != 3) throw DimensionMismatch("pedigree model takes three parameters");
  std::vector<Genotype> g(ped.people.size());
  for (std::size_t i = 0; i < ped.people.size(); ++i) {
    const auto& p = ped.people[i];
    if (p.mother < 0)
      g[i] = static_cast<Genotype>(rng.index(3));
    else
      g[i] = mendel_child(g[p.mother], g[p.father], rng);
  }
  PedigreeDraw out;
  out.genotypes.reserve(ped.observed.size());
  out.phenotypes.reserve(ped.observed.size());
  for (int i : ped.observed) {
    const double eta = pedigree_logit(theta, g[i]);
    const double prob = 1.0 / (1.0 + std::exp(-eta));
    out.genotypes.push_back(g[i]);
    out.phenotypes.push_back(rng.bernoulli(prob) ? 1 : 0);
  }
  out.stats = pedigree_statistics(out.phenotypes, out.genotypes);
  return out;
}

PedigreeModel::PedigreeModel(std::shared_ptr<const Pedigree> ped) : ped_(std::move(ped)) {
  if (!ped_) throw ConfigError("pedigree model needs a pedigree");
}

Box PedigreeModel::box() const {
  return Box(RealVector::Constant(3, -10.0), RealVector::Constant(3, 10.0));
}

Prior PedigreeModel::prior() const {
  return Prior(std::vector<Marginal>(3, Marginal::uniform(-10.0, 10.0)));
}

SimOutput PedigreeModel::simulate(const RealVector& theta, RandomStream& rng) const {
  auto d = simulate_pedigree(theta, *ped_, rng);
  SimOutput out;
  out.stats = std::move(d.stats);
  out.genotypes.reserve(d.genotypes.size());
  for (Genotype x : d.genotypes) out.genotypes.push_back(static_cast<std::uint8_t>(x));
  return out;
}

}  // namespace qlabc
