#pragma once

// Seedable random source with fully specified output streams.
//
// The engine is std::mt19937_64, whose sequence is pinned by the standard.
// All distributions are implemented here on top of the raw 64-bit stream
// (std::*_distribution sequences are implementation-defined and would break
// bit-reproducibility across standard libraries). Draw order per call is
// fixed and documented on each method; replaying a seed replays the run.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace cascade::rng {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1): top 53 bits of one engine output.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes exactly two engine outputs.
  // The spare value is discarded so the stream position stays predictable.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang squeeze; variable draw count.
  double gamma(double shape);

  // Beta(a, b) as x / (x + y) with x ~ Gamma(a), y ~ Gamma(b).
  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  // exp(location + scale * Z); one normal draw.
  double lognormal(double location, double scale) {
    return std::exp(location + scale * normal());
  }

  // Index sampled proportionally to non-negative weights; one uniform draw.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 eng_;
};

}  // namespace cascade::rng
