#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "qlabc/error.hpp"
#include "qlabc/surrogate.hpp"

namespace qlabc {

PilotDesign::PilotDesign(Box box, int points_per_dim) : box_(std::move(box)), m_(points_per_dim) {
  if (m_ < 2) throw ConfigError("pilot design needs at least 2 points per dimension");
  const Eigen::Index p = box_.dim();
  total_ = 1;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (total_ > (std::size_t{1} << 40) / static_cast<std::size_t>(m_))
      throw ConfigError("pilot lattice too large");
    total_ *= static_cast<std::size_t>(m_);
    std::vector<double> a(m_);
    for (int i = 0; i < m_; ++i)
      a[i] = box_.lo[j] + (box_.hi[j] - box_.lo[j]) * static_cast<double>(i) / (m_ - 1);
    a.back() = box_.hi[j];
    axes_.push_back(std::move(a));
  }
}

std::vector<int> PilotDesign::unflatten(std::size_t index) const {
  const Eigen::Index p = dim();
  std::vector<int> pos(p);
  for (Eigen::Index j = p; j-- > 0;) {
    pos[j] = static_cast<int>(index % static_cast<std::size_t>(m_));
    index /= static_cast<std::size_t>(m_);
  }
  return pos;
}

std::size_t PilotDesign::flatten(const std::vector<int>& pos) const {
  std::size_t index = 0;
  for (int k : pos) index = index * static_cast<std::size_t>(m_) + static_cast<std::size_t>(k);
  return index;
}

RealVector PilotDesign::point(std::size_t index) const {
  const auto pos = unflatten(index);
  RealVector x(dim());
  for (Eigen::Index j = 0; j < dim(); ++j) x[j] = axes_[j][pos[j]];
  return x;
}

int default_points_per_dim(Eigen::Index p) {
  if (p <= 1) return 1000;
  if (p <= 3) return 30;
  return 10;
}

PilotData run_pilot(const PilotDesign& design, const Simulator& sim, std::uint64_t master_seed,
                    unsigned threads) {
  const Eigen::Index p = design.dim();
  if (p != sim.dim()) throw DimensionMismatch("pilot design and simulator dimensions differ");
  const Box sbox = sim.box();
  for (Eigen::Index j = 0; j < p; ++j)
    if (design.box().lo[j] < sbox.lo[j] || design.box().hi[j] > sbox.hi[j])
      throw ConfigError("pilot box exceeds the parameter box of model '" + sim.name() + "'");

  const std::size_t total = design.total_points();
  PilotData data;
  data.master_seed = master_seed;
  data.thetas.resize(static_cast<Eigen::Index>(total), p);
  data.stats.resize(static_cast<Eigen::Index>(total), p);

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = total;
  std::string err_text;

  auto worker = [&] {
    for (std::size_t m = next++; m < total; m = next++) {
      const RealVector theta = design.point(m);
      const auto row = static_cast<Eigen::Index>(m);
      data.thetas.row(row) = theta.transpose();
      try {
        RandomStream rng(master_seed, m);
        const SimOutput out = sim.simulate(theta, rng);
        if (out.stats.size() != p) throw DimensionMismatch("simulator returned the wrong statistic dimension");
        data.stats.row(row) = out.stats.transpose();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (m < err_index) {
          err_index = m;
          std::ostringstream os;
          os << "pilot point " << m << " theta = (";
          for (Eigen::Index j = 0; j < p; ++j) os << (j ? ", " : "") << format_double(theta[j]);
          os << "): " << e.what();
          err_text = os.str();
        }
      }
    }
  };

  unsigned n_threads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, total));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err_index < total) throw SimulationError(err_text);
  return data;
}

void write_pilot_csv(const std::string& path, const PilotData& data) {
  const Eigen::Index p = data.thetas.cols();
  std::string out = "# seed=" + std::to_string(data.master_seed) + "\n";
  for (Eigen::Index j = 0; j < p; ++j) out += (j ? ",theta_" : "theta_") + std::to_string(j + 1);
  for (Eigen::Index j = 0; j < p; ++j) out += ",s_" + std::to_string(j + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < data.thetas.rows(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) out += (j ? "," : "") + format_double(data.thetas(i, j));
    for (Eigen::Index j = 0; j < p; ++j) out += "," + format_double(data.stats(i, j));
    out += '\n';
  }
  write_file_atomic(path, out);
}

PilotData read_pilot_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  PilotData data;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# seed=", 0) == 0) {
      data.master_seed = std::stoull(line.substr(7));
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    header = split(line, ',');
    break;
  }
  if (header.empty() || header.size() % 2 != 0)
    throw SchemaMismatch(path + ": pilot header must be theta_1..theta_p,s_1..s_p");
  const std::size_t p = header.size() / 2;
  for (std::size_t j = 0; j < p; ++j)
    if (header[j] != "theta_" + std::to_string(j + 1) || header[p + j] != "s_" + std::to_string(j + 1))
      throw SchemaMismatch(path + ": pilot header must be theta_1..theta_p,s_1..s_p");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != header.size()) throw SchemaMismatch(where + ": wrong number of fields");
    std::vector<double> r(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) r[k] = parse_double(f[k], where);
    rows.push_back(std::move(r));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto pp = static_cast<Eigen::Index>(p);
  data.thetas.resize(n, pp);
  data.stats.resize(n, pp);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < pp; ++j) {
      data.thetas(i, j) = rows[i][j];
      data.stats(i, j) = rows[i][p + j];
    }
  return data;
}

}  // namespace qlabc
