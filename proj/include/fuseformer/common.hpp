#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ff {

// Error taxonomy. The CLI maps these onto exit codes, so throw the most
// specific one that applies.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes, non-broadcastable operands, inner-extent mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid or degenerate patch geometry.
struct GeometryError : Error {
  using Error::Error;
};

// A pixel with zero overlapping patches; normalization would divide by zero.
struct CoverageError : Error {
  using Error::Error;
};

// Bad config file contents (unknown key, unparsable value, invalid combination).
struct ConfigError : Error {
  using Error::Error;
};

// Domain errors on scalar math (log of a negative, out-of-range probability).
struct DomainError : Error {
  using Error::Error;
};

// Filesystem and format failures.
struct IoError : Error {
  using Error::Error;
};

// Checkpoint parse/mismatch failures; message names the offending tensor.
struct CheckpointError : Error {
  using Error::Error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG with fixed bit-level behaviour. std::mt19937_64 state
// transitions are pinned by the standard; the distributions are not, so
// uniform/normal are derived here instead of via <random> distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x853c49e6748fea9bULL;
  }

  uint64_t next_u64() {
    // xorshift* variant; period 2^64-1, passes BigCrush for this use.
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Independent child stream; used to give each clip/parameter its own RNG.
  Rng fork(uint64_t tag) const { return Rng(splitmix64(state_ ^ splitmix64(tag))); }

 private:
  uint64_t state_;
};

}  // namespace ff
