#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace qlabc {

// Counter-based random stream (Philox4x32-10). The sequence is a pure
// function of (master_seed, stream_id), so independent tasks such as pilot
// lattice points can draw from their own stream in any order.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  // Bumped whenever the bit stream for a given (seed, stream) would change.
  static constexpr int kGeneratorVersion = 1;

  RandomStream(std::uint64_t master_seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double exponential(double mean);
  // Gamma with the given shape and scale (mean shape*scale).
  double gamma(double shape, double scale);
  std::uint64_t poisson(double mean);
  bool bernoulli(double p);
  // Uniform on {0, ..., n-1}.
  std::uint64_t index(std::uint64_t n);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
};

// Fixed stream-id ranges so that different consumers of one master seed never
// overlap. Pilot lattice points use ids [0, kPilotLimit).
namespace streams {
inline constexpr std::uint64_t kPilotLimit = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kEpsilon = kPilotLimit + 1;
inline constexpr std::uint64_t kChain = kPilotLimit + 2;
inline constexpr std::uint64_t kRejection = kPilotLimit + 3;
inline constexpr std::uint64_t kImportance = kPilotLimit + 4;
inline constexpr std::uint64_t kObserved = kPilotLimit + 5;
inline constexpr std::uint64_t kOracle = kPilotLimit + 6;
// Replicate r of a benchmark uses kReplicateBase + r.
inline constexpr std::uint64_t kReplicateBase = std::uint64_t{1} << 48;
}  // namespace streams

}  // namespace qlabc
