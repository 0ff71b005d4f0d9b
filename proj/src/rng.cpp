#include "lowrank/rng.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline std::uint32_t mulhi(std::uint32_t a, std::uint32_t b, std::uint32_t* lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  *lo = static_cast<std::uint32_t>(p);
  return static_cast<std::uint32_t>(p >> 32);
}

// One 10-round Philox4x32 block.
std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> ctr,
                                      std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, lo1;
    std::uint32_t hi0 = mulhi(kPhiloxM0, ctr[0], &lo0);
    std::uint32_t hi1 = mulhi(kPhiloxM1, ctr[2], &lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) {
  key_ = {static_cast<std::uint32_t>(seed),
          static_cast<std::uint32_t>(seed >> 32)};
}

RngStream RngStream::fork(std::uint64_t child_id) const {
  // Encrypt the child id under this stream's key; the output block seeds
  // the child key. The high counter word tags fork blocks so they can
  // never collide with draw blocks (those keep counter_[3] < 0xF0000000
  // for the first ~2^117 draws).
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(child_id),
      static_cast<std::uint32_t>(child_id >> 32), 0u, 0xF0F0F0F0u};
  auto out = philox10(ctr, key_);
  RngStream child;
  child.key_ = {out[0] ^ out[2], out[1] ^ out[3]};
  return child;
}

std::uint64_t RngStream::next_u64() {
  if (block_pos_ >= 4) {
    block_ = philox10(counter_, key_);
    block_pos_ = 0;
    // 128-bit counter increment
    if (++counter_[0] == 0 && ++counter_[1] == 0 && ++counter_[2] == 0)
      ++counter_[3];
  }
  std::uint64_t lo = block_[block_pos_];
  std::uint64_t hi = block_[block_pos_ + 1];
  block_pos_ += 2;
  return lo | (hi << 32);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_double() - 1.0;
    v = 2.0 * next_double() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double scale = std::sqrt(-2.0 * std::log(s) / s);
  cached_gaussian_ = v * scale;
  has_cached_gaussian_ = true;
  return u * scale;
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw usage_error("sample_gamma: shape and rate must be positive");
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

double sample_inverse_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw usage_error("sample_inverse_gamma: shape and rate must be positive");
  // rate of the inverse gamma is the scale of the reciprocal gamma
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return 1.0 / dist(rng);
}

double sample_inverse_gaussian(double mu, double lambda_ig, RngStream& rng) {
  if (!(mu > 0.0) || !(lambda_ig > 0.0))
    throw usage_error(
        "sample_inverse_gaussian: mu and lambda_ig must be positive");
  // Chi-square transformation: the smaller root of the defining quadratic,
  // written without subtraction so mu >> lambda_ig cannot cancel to zero.
  double z = rng.next_gaussian();
  double w = mu * (z * z);
  double root = std::sqrt(w * (w + 4.0 * lambda_ig)) + w;
  double x = (root > 0.0) ? mu * (4.0 * lambda_ig * w) / (root * root) : mu;
  if (x <= 0.0) x = std::numeric_limits<double>::min();  // underflow guard
  if (rng.next_double() <= mu / (mu + x)) return x;
  return mu * mu / x;
}

int sample_bernoulli(double prob, RngStream& rng) {
  if (!(prob >= 0.0) || !(prob <= 1.0))
    throw usage_error("sample_bernoulli: prob must lie in [0,1]");
  return rng.next_double() < prob ? 1 : 0;
}

}  // namespace lowrank
