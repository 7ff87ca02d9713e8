#include "cascade/specdec.hpp"

#include "cascade/rng.hpp"
#include "cascade/util.hpp"

#include <cmath>
#include <string>

namespace cascade::specdec {

TokenDist TokenDist::validate(std::vector<double> probs) {
  if (probs.empty() || probs.size() > kMaxVocabulary) {
    fail(Errc::invalid_distribution,
         "vocabulary size " + std::to_string(probs.size()) +
             " outside [1, " + std::to_string(kMaxVocabulary) + "]");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      fail(Errc::invalid_distribution,
           "probability " + std::to_string(p) + " is negative or non-finite");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(Errc::invalid_distribution,
         "probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  return TokenDist(std::move(probs));
}

DraftEpisode DraftEpisode::make(std::vector<TokenDist> judge_dists,
                                std::vector<TokenDist> worker_dists,
                                std::vector<std::size_t> proposed,
                                std::uint64_t seed) {
  const std::size_t k = proposed.size();
  if (k == 0) fail(Errc::invalid_episode, "episode of zero tokens");
  if (judge_dists.size() != k || worker_dists.size() != k) {
    fail(Errc::invalid_episode,
         "judge/worker/proposed lengths " +
             std::to_string(judge_dists.size()) + "/" +
             std::to_string(worker_dists.size()) + "/" + std::to_string(k) +
             " differ");
  }
  for (std::size_t t = 0; t < k; ++t) {
    if (proposed[t] >= worker_dists[t].size() ||
        proposed[t] >= judge_dists[t].size()) {
      fail(Errc::invalid_episode,
           "proposed token " + std::to_string(proposed[t]) +
               " out of range at position " + std::to_string(t));
    }
    if (worker_dists[t][proposed[t]] <= 0.0) {
      fail(Errc::zero_worker_probability,
           "worker assigns probability 0 to its own proposal at position " +
               std::to_string(t));
    }
  }
  return DraftEpisode{std::move(judge_dists), std::move(worker_dists),
                      std::move(proposed), seed};
}

bool accept_token(double p_judge, double p_worker, double r) {
  if (p_worker <= 0.0) {
    fail(Errc::zero_worker_probability,
         "worker probability " + std::to_string(p_worker) + " must be > 0");
  }
  if (!(r >= 0.0 && r <= 1.0)) {
    fail(Errc::invalid_argument,
         "threshold " + std::to_string(r) + " outside [0, 1]");
  }
  return p_judge / p_worker >= r;
}

std::size_t simulate_draft(const DraftEpisode& episode) {
  rng::Rng rng(episode.seed);
  std::size_t m = 0;
  for (std::size_t t = 0; t < episode.proposed.size(); ++t) {
    const std::size_t token = episode.proposed[t];
    const double r = rng.uniform();
    if (!accept_token(episode.judge_dists[t][token],
                      episode.worker_dists[t][token], r)) {
      break;
    }
    ++m;
  }
  return m;
}

double expected_acceptance(const TokenDist& judge, const TokenDist& worker) {
  if (judge.size() != worker.size()) {
    fail(Errc::dimension_mismatch,
         "distributions of size " + std::to_string(judge.size()) + " and " +
             std::to_string(worker.size()));
  }
  double sum = 0.0;
  for (std::size_t y = 0; y < judge.size(); ++y) {
    sum += std::min(worker[y], judge[y]);
  }
  return sum;
}

double kl_divergence(const TokenDist& p, const TokenDist& q) {
  if (p.size() != q.size()) {
    fail(Errc::dimension_mismatch,
         "distributions of size " + std::to_string(p.size()) + " and " +
             std::to_string(q.size()));
  }
  double sum = 0.0;
  for (std::size_t y = 0; y < p.size(); ++y) {
    if (p[y] == 0.0) continue;
    if (q[y] == 0.0) {
      fail(Errc::absolute_continuity_violation,
           "p > 0 where q = 0 at token " + std::to_string(y));
    }
    sum += p[y] * std::log(p[y] / q[y]);
  }
  return sum;
}

double variance_of_m(const std::vector<TokenDist>& judge_dists,
                     const std::vector<TokenDist>& worker_dists,
                     const std::vector<std::size_t>& proposed,
                     std::size_t trials, std::uint64_t seed) {
  if (trials < 2) {
    fail(Errc::invalid_argument,
         "variance needs at least 2 trials, got " + std::to_string(trials));
  }
  DraftEpisode episode =
      DraftEpisode::make(judge_dists, worker_dists, proposed, seed);
  std::uint64_t stream = seed;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    episode.seed = splitmix64(stream);
    const double m = static_cast<double>(simulate_draft(episode));
    sum += m;
    sum_sq += m * m;
  }
  const double n = static_cast<double>(trials);
  const double variance = (sum_sq - sum * sum / n) / (n - 1.0);
  return variance > 0.0 ? variance : 0.0;
}

}  // namespace cascade::specdec
