#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lowrank {

/// Counter-based pseudo-random stream (Philox4x32-10) with hierarchical
/// forking.
///
/// A stream is identified by a 64-bit key and consumes a 128-bit counter,
/// so draws never collide for the lifetime of a stream. `fork(child_id)`
/// derives the child's key by encrypting `child_id` under the parent key;
/// children are statistically independent of the parent and of each other.
/// Identical seed + identical fork path + identical call sequence gives an
/// identical output sequence, which is what makes parallel sweeps
/// reproducible regardless of thread scheduling: fork one stream per unit
/// of work before the parallel section.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent child stream. Pure: does not advance this stream.
  RngStream fork(std::uint64_t child_id) const;

  std::uint64_t next_u64();

  /// Uniform on [0,1) with 53 random bits.
  double next_double();

  /// Standard normal draw (Marsaglia polar method, one value cached).
  double next_gaussian();

  // UniformRandomBitGenerator interface, so <random> distributions work
  // on top of a stream.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<std::uint64_t>::max();
  }
  result_type operator()() { return next_u64(); }

 private:
  RngStream() = default;

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  int block_pos_ = 4;  // 4 = buffer exhausted
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

// Random-variate primitives consumed by the samplers. All validate their
// parameters and throw usage_error on violation.

/// Draw from Gamma(shape, rate) (density ~ x^{shape-1} exp(-rate x)).
double sample_gamma(double shape, double rate, RngStream& rng);

/// Draw from the inverse gamma with density ~ x^{-shape-1} exp(-rate/x).
double sample_inverse_gamma(double shape, double rate, RngStream& rng);

/// Draw from the inverse Gaussian with mean mu and shape lambda_ig, by the
/// chi-square transformation with a Bernoulli choice between the two roots.
double sample_inverse_gaussian(double mu, double lambda_ig, RngStream& rng);

/// 1 with probability prob, else 0.
int sample_bernoulli(double prob, RngStream& rng);

}  // namespace lowrank
