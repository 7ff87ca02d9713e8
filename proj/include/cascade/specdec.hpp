#pragma once

// Token-level draft/verify arithmetic at desk scale: acceptance ratio,
// accepted-prefix length, KL divergence, and the Monte Carlo variance of the
// accepted count. Distributions are caller-supplied per position.

#include "cascade/core.hpp"

#include <cstdint>
#include <vector>

namespace cascade::specdec {

inline constexpr std::size_t kMaxVocabulary = 64;

// A probability vector over a small vocabulary: entries >= 0, sum 1 within
// 1e-9, size in [1, 64].
class TokenDist {
 public:
  static TokenDist validate(std::vector<double> probs);

  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  friend bool operator==(const TokenDist&, const TokenDist&) = default;

 private:
  explicit TokenDist(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

// One k-token draft: per-position judge and worker distributions, the worker's
// proposed token indices, and the RNG seed that fixes the accept thresholds.
struct DraftEpisode {
  std::vector<TokenDist> judge_dists;
  std::vector<TokenDist> worker_dists;
  std::vector<std::size_t> proposed;
  std::uint64_t seed = 0;

  // Enforces equal lengths k >= 1, in-range proposals, and worker probability
  // > 0 on every proposed token.
  static DraftEpisode make(std::vector<TokenDist> judge_dists,
                           std::vector<TokenDist> worker_dists,
                           std::vector<std::size_t> proposed,
                           std::uint64_t seed);
};

// True iff p_judge / p_worker >= r. Thresholds r come from Uniform[0,1].
bool accept_token(double p_judge, double p_worker, double r);

// Length of the accepted prefix: thresholds are drawn in position order from
// an Rng seeded with episode.seed, stopping at the first rejection.
// Deterministic given the episode.
std::size_t simulate_draft(const DraftEpisode& episode);

// Analytic acceptance probability when the proposal is sampled from the
// worker distribution: sum over tokens of min(worker, judge).
double expected_acceptance(const TokenDist& judge, const TokenDist& worker);

// KL(p || q) in nats. Terms with p(y) = 0 contribute 0; p(y) > 0 where
// q(y) = 0 is AbsoluteContinuityViolation.
double kl_divergence(const TokenDist& p, const TokenDist& q);

// Sample variance (over trials - 1) of simulate_draft's m across `trials`
// runs whose seeds are derived deterministically from `seed`.
double variance_of_m(const std::vector<TokenDist>& judge_dists,
                     const std::vector<TokenDist>& worker_dists,
                     const std::vector<std::size_t>& proposed,
                     std::size_t trials, std::uint64_t seed);

}  // namespace cascade::specdec
