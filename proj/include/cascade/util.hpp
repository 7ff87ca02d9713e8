#pragma once

// Shared utilities: hashing, seed derivation, duration conversions.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace cascade {

// Durations are stored in integer microseconds internally and reported in
// milliseconds, so percentile math never accumulates float error.
using Micros = std::chrono::microseconds;

inline double micros_to_ms(Micros us) {
  return static_cast<double>(us.count()) / 1000.0;
}

inline Micros ms_to_micros(double ms) {
  return Micros(static_cast<std::int64_t>(std::llround(ms * 1000.0)));
}

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(std::string_view bytes);

// splitmix64 step (public-domain mixer). Advances `state` and returns the
// next output. Used everywhere a stream of independent seeds is needed.
std::uint64_t splitmix64(std::uint64_t& state);

// One-shot mix of a value through the splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a 64-bit string hash. Stable across platforms and releases; keys the
// per-sample RNG streams so seeding is a function of sample id, not of
// dataset order.
std::uint64_t fnv1a64(std::string_view s);

// Combines a base seed with up to two salts into one well-distributed seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt_a,
                          std::uint64_t salt_b = 0);

}  // namespace cascade
