#pragma once

// Consensus rules over worker predictions, plus best-pair selection from a
// calibration batch. Everything here is a pure function of its arguments.

#include "cascade/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace cascade::agreement {

struct TallyResult {
  std::map<std::string, std::size_t> counts;  // label -> n(y)
  std::size_t total = 0;
};

struct PairRate {
  core::WorkerId first;   // first.index < second.index
  core::WorkerId second;
  double rate = 0.0;
};

struct PairSelection {
  core::WorkerId first;
  core::WorkerId second;
  double agreement_rate = 0.0;
  std::vector<PairRate> all_rates;  // lexicographic by (first, second) index
};

// Counts predictions per label. Throws EmptyPredictionSet on empty input.
TallyResult tally(const std::vector<core::Prediction>& predictions);

// A label wins when at least two predictions back it. The threshold stays at
// two for any W; with four or more predictions two labels can both clear it,
// which is AmbiguousMajority rather than a silent pick.
core::DraftOutcome decide_simple_majority(
    const std::vector<core::Prediction>& predictions);

// Majority winner as above, then two confidence gates: every supporter's
// confidence >= tau, and the population variance of ALL supplied confidences
// compared against delta in the policy's direction. Any prediction without a
// confidence is MissingConfidence.
core::DraftOutcome decide_confidence_majority(
    const std::vector<core::Prediction>& predictions,
    const core::AgreementPolicy& policy);

// Decided only when every prediction carries the same label. A single
// prediction is vacuously unanimous.
core::DraftOutcome decide_unanimous(
    const std::vector<core::Prediction>& predictions);

// Fraction of positions where the two label columns match exactly.
double pairwise_agreement(const std::vector<std::string>& col_a,
                          const std::vector<std::string>& col_b);

// Enumerates all unordered worker pairs over a calibration batch and returns
// the pair with the highest agreement rate; ties break toward the lowest
// (index, index) pair. `columns[w]` holds worker w's labels over N samples.
// Whether pair selection applies at all (W vs L) is the caller's branch.
PairSelection select_best_pair(
    const std::vector<core::WorkerId>& workers,
    const std::vector<std::vector<std::string>>& columns,
    const core::LabelSpace& space);

}  // namespace cascade::agreement
