#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tfadv {

using Scalar = double;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using Eigen::Index;

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 2, IoError/FormatError -> 3, NumericError -> 4.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closed interval, used for frequency and SNR ranges.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool valid() const { return lo <= hi; }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic RNG stream. Wraps mt19937_64 but fixes the bit-to-double
// mappings itself so the produced values do not depend on the standard
// library's distribution implementations.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi]; a degenerate interval returns lo exactly.
  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [lo, hi], both inclusive.
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    const int span = hi - lo + 1;
    int v = lo + static_cast<int>(uniform() * span);
    return v > hi ? hi : v;
  }

  // Independent substream for (this seed, stream id). Used to give every
  // sample its own RNG so work can be reordered or parallelized.
  RngState derive(std::uint64_t stream) const {
    return RngState(splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * (stream + 1)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

// Stream id helper for nested derivations (split/class/index style keys).
inline std::uint64_t mix_stream(std::uint64_t a, std::uint64_t b,
                                std::uint64_t c = 0) {
  return splitmix64(splitmix64(a) ^ splitmix64(b + 0x51ED270B) ^
                    splitmix64(c + 0x2545F491));
}

}  // namespace tfadv
