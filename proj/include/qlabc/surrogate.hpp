#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlabc/io.hpp"
#include "qlabc/models.hpp"
#include "qlabc/numerics.hpp"
#include "qlabc/smoothers.hpp"

namespace qlabc {

// Regular lattice over a box: M points for p = 1, M^p for p > 1. Index order
// is row-major with the last coordinate varying fastest.
class PilotDesign {
 public:
  PilotDesign() = default;
  PilotDesign(Box box, int points_per_dim);

  const Box& box() const { return box_; }
  int points_per_dim() const { return m_; }
  Eigen::Index dim() const { return box_.dim(); }
  std::size_t total_points() const { return total_; }

  const std::vector<double>& axis(Eigen::Index j) const { return axes_[j]; }
  RealVector point(std::size_t index) const;
  // Per-coordinate lattice position of a flat index.
  std::vector<int> unflatten(std::size_t index) const;
  std::size_t flatten(const std::vector<int>& pos) const;

 private:
  Box box_;
  int m_ = 0;
  std::size_t total_ = 0;
  std::vector<std::vector<double>> axes_;
};

// Default points per dimension: 1000 for p = 1, 30 for p = 2..3, 10 beyond.
int default_points_per_dim(Eigen::Index p);

struct PilotData {
  RealMatrix thetas;
  RealMatrix stats;
  std::uint64_t master_seed = 0;
};

// One simulation per lattice point, point m drawing from stream m. threads = 0
// uses the hardware concurrency.
PilotData run_pilot(const PilotDesign& design, const Simulator& sim, std::uint64_t master_seed,
                    unsigned threads = 0);

// CSV with header theta_1..theta_p,s_1..s_p; the seed goes in a leading
// "# seed=" comment.
void write_pilot_csv(const std::string& path, const PilotData& data);
PilotData read_pilot_csv(const std::string& path);

// Regions of a scalar surrogate where the derivative changes sign or is close
// to zero relative to its largest magnitude.
struct MonotonicityReport {
  bool monotone = true;
  int sign = 1;  // dominant sign of the derivative
  std::vector<std::pair<double, double>> flat_regions;
};

class SurrogateModel {
 public:
  static constexpr int kSchemaVersion = 1;

  SurrogateModel() = default;

  Eigen::Index dim() const { return design_.dim(); }
  const Box& domain() const { return design_.box(); }
  const PilotDesign& design() const { return design_; }
  VarianceKind variance_kind() const { return variance_kind_; }
  const std::string& model_name() const { return model_name_; }
  void set_model_name(std::string name) { model_name_ = std::move(name); }

  bool in_domain(const RealVector& theta) const { return domain().contains(theta); }

  // Throw OutOfDomain outside the pilot box.
  RealVector forward(const RealVector& theta) const;
  // Analytic derivative (p = 1) or the interpolated lattice Jacobian.
  RealMatrix jacobian(const RealVector& theta) const;
  // Richardson Jacobian of the fitted surfaces, without the table.
  RealMatrix jacobian_direct(const RealVector& theta) const;
  // log |f'(theta)| or log |det J(theta)| from the analytic derivative of the
  // fitted surfaces; -inf where the Jacobian vanishes.
  double jacobian_logdet(const RealVector& theta) const;
  RealMatrix variance_at(const RealVector& theta) const;
  // Cholesky factor of variance_at, cached for the constant mode.
  RealMatrix variance_chol(const RealVector& theta) const;

  // Solution of forward(theta) = s inside the box with residual below 1e-6.
  std::optional<RealVector> try_inverse(const RealVector& s,
                                        const std::optional<RealVector>& hint = std::nullopt) const;
  // As try_inverse, throwing OutsideImage.
  RealVector inverse(const RealVector& s, const std::optional<RealVector>& hint = std::nullopt) const;
  // Lattice point whose fitted value is nearest to s.
  RealVector closest_lattice_point(const RealVector& s) const { return design_.point(nearest_lattice_index(s)); }

  // Fit diagnostics.
  const std::vector<double>& r_squared() const { return r2_; }
  const MonotonicityReport& monotonicity() const { return monotonicity_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Fitted pieces, exposed for reports and serialization.
  const SmoothingSpline& scalar_forward() const { return scalar_forward_; }
  const std::vector<AdditiveSurface>& additive_forward() const { return additive_forward_; }
  const std::vector<VarianceSurface>& variance_surfaces() const { return variance_; }
  const RealMatrix& constant_covariance() const { return sigma_; }

  friend SurrogateModel fit_surrogate(const PilotData&, const PilotDesign&, VarianceKind);
  friend SurrogateModel linear_surrogate(const PilotDesign&, const RealMatrix&, const RealVector&,
                                         const RealMatrix&);
  friend std::string serialize_surrogate(const SurrogateModel&);
  friend SurrogateModel deserialize_surrogate(const std::string&);

 private:
  RealVector forward_unchecked(const RealVector& theta, bool extended) const;
  RealMatrix analytic_jacobian(const RealVector& theta) const;
  void build_tables();
  void finish_setup();
  std::size_t nearest_lattice_index(const RealVector& s) const;

  std::string model_name_;
  PilotDesign design_;
  VarianceKind variance_kind_ = VarianceKind::constant;

  SmoothingSpline scalar_forward_;                 // p = 1
  std::vector<AdditiveSurface> additive_forward_;  // p > 1, one per statistic
  // One per statistic; for p > 1 in constant mode sigma_ is used instead.
  std::vector<VarianceSurface> variance_;
  RealMatrix sigma_;
  RealMatrix sigma_chol_;

  // Lattice tables: forward values (for inverse seeding) and Jacobian entries
  // (p > 1, row-major p x p per point).
  RealMatrix forward_table_;
  RealMatrix jacobian_table_;

  std::vector<double> r2_;
  MonotonicityReport monotonicity_;
  std::vector<std::string> warnings_;
};

// Smoothing spline (p = 1) or additive GAM per statistic (p > 1) of the pilot
// statistics on the lattice, plus the chosen variance model.
SurrogateModel fit_surrogate(const PilotData& data, const PilotDesign& design,
                             VarianceKind variance_kind);

// Surrogate of a known map f(theta) = a theta + b with constant covariance,
// for elicited forward maps and for tests.
SurrogateModel linear_surrogate(const PilotDesign& design, const RealMatrix& a, const RealVector& b,
                                const RealMatrix& sigma);

// Warning text when s_obs is outside the fitted image, otherwise nullopt.
std::optional<std::string> coverage_warning(const SurrogateModel& m, const RealVector& s_obs);

std::string serialize_surrogate(const SurrogateModel& m);
SurrogateModel deserialize_surrogate(const std::string& text);
void save_surrogate(const std::string& path, const SurrogateModel& m);
SurrogateModel load_surrogate(const std::string& path);

}  // namespace qlabc
