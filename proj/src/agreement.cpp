#include "cascade/agreement.hpp"

#include <algorithm>
#include <cmath>

namespace cascade::agreement {

namespace {

// Labels reaching the n(y) >= 2 threshold, in deterministic (map) order.
std::vector<std::string> majority_winners(const TallyResult& tallied) {
  std::vector<std::string> winners;
  for (const auto& [label, count] : tallied.counts) {
    if (count >= 2) winners.push_back(label);
  }
  return winners;
}

std::vector<core::WorkerId> supporters_of(
    const std::vector<core::Prediction>& predictions,
    const std::string& label) {
  std::vector<core::WorkerId> out;
  for (const auto& p : predictions) {
    if (p.label == label) out.push_back(p.worker);
  }
  return out;
}

// Resolves the simple-majority winner or reports undecided; throws on a
// multi-winner tie. Shared by Criteria 1 and 2 so that every Criterion-2
// decision is by construction a Criterion-1 decision.
std::optional<std::string> unique_winner(
    const std::vector<core::Prediction>& predictions) {
  const TallyResult tallied = tally(predictions);
  const std::vector<std::string> winners = majority_winners(tallied);
  if (winners.empty()) return std::nullopt;
  if (winners.size() > 1) {
    fail(Errc::ambiguous_majority,
         "labels '" + winners[0] + "' and '" + winners[1] +
             "' both have at least 2 votes");
  }
  return winners[0];
}

}  // namespace

TallyResult tally(const std::vector<core::Prediction>& predictions) {
  if (predictions.empty()) {
    fail(Errc::empty_prediction_set, "tally of zero predictions");
  }
  TallyResult out;
  for (const auto& p : predictions) ++out.counts[p.label];
  out.total = predictions.size();
  return out;
}

core::DraftOutcome decide_simple_majority(
    const std::vector<core::Prediction>& predictions) {
  const auto winner = unique_winner(predictions);
  if (!winner) {
    return core::DraftOutcome::undecided(core::PolicyKind::SimpleMajority);
  }
  return core::DraftOutcome::make(*winner, supporters_of(predictions, *winner),
                                  core::PolicyKind::SimpleMajority);
}

core::DraftOutcome decide_confidence_majority(
    const std::vector<core::Prediction>& predictions,
    const core::AgreementPolicy& policy) {
  if (policy.kind != core::PolicyKind::ConfidenceMajority) {
    fail(Errc::invalid_policy, "policy kind is not confidence_majority");
  }
  policy.check();
  if (predictions.empty()) {
    fail(Errc::empty_prediction_set, "confidence majority of zero predictions");
  }
  for (const auto& p : predictions) {
    if (!p.confidence) {
      fail(Errc::missing_confidence,
           "worker '" + p.worker.name + "' supplied no confidence");
    }
  }

  const auto winner = unique_winner(predictions);
  if (!winner) {
    return core::DraftOutcome::undecided(core::PolicyKind::ConfidenceMajority);
  }

  double min_supporter_confidence = 1.0;
  for (const auto& p : predictions) {
    if (p.label == *winner) {
      min_supporter_confidence = std::min(min_supporter_confidence,
                                          *p.confidence);
    }
  }

  // Population variance over all W confidences, not only the supporters'.
  double mean = 0.0;
  for (const auto& p : predictions) mean += *p.confidence;
  mean /= static_cast<double>(predictions.size());
  double variance = 0.0;
  for (const auto& p : predictions) {
    const double d = *p.confidence - mean;
    variance += d * d;
  }
  variance /= static_cast<double>(predictions.size());

  const bool variance_ok =
      policy.variance_direction == core::VarianceDirection::AtLeast
          ? variance >= *policy.delta
          : variance <= *policy.delta;
  if (min_supporter_confidence < *policy.tau || !variance_ok) {
    return core::DraftOutcome::undecided(core::PolicyKind::ConfidenceMajority);
  }
  return core::DraftOutcome::make(*winner, supporters_of(predictions, *winner),
                                  core::PolicyKind::ConfidenceMajority);
}

core::DraftOutcome decide_unanimous(
    const std::vector<core::Prediction>& predictions) {
  if (predictions.empty()) {
    fail(Errc::empty_prediction_set, "unanimity of zero predictions");
  }
  const std::string& first = predictions.front().label;
  for (const auto& p : predictions) {
    if (p.label != first) {
      return core::DraftOutcome::undecided(core::PolicyKind::Unanimous);
    }
  }
  return core::DraftOutcome::make(first, supporters_of(predictions, first),
                                  core::PolicyKind::Unanimous);
}

double pairwise_agreement(const std::vector<std::string>& col_a,
                          const std::vector<std::string>& col_b) {
  if (col_a.size() != col_b.size()) {
    fail(Errc::length_mismatch,
         "columns of length " + std::to_string(col_a.size()) + " and " +
             std::to_string(col_b.size()));
  }
  if (col_a.empty()) fail(Errc::empty_columns, "empty label columns");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < col_a.size(); ++i) {
    if (col_a[i] == col_b[i]) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(col_a.size());
}

PairSelection select_best_pair(
    const std::vector<core::WorkerId>& workers,
    const std::vector<std::vector<std::string>>& columns,
    const core::LabelSpace& space) {
  if (workers.size() < 2) {
    fail(Errc::too_few_workers,
         "pair selection needs at least 2 workers, got " +
             std::to_string(workers.size()));
  }
  if (columns.size() != workers.size()) {
    fail(Errc::length_mismatch, "one label column per worker required");
  }
  const std::size_t n = columns.front().size();
  if (n == 0) fail(Errc::empty_columns, "empty calibration batch");
  for (const auto& column : columns) {
    if (column.size() != n) {
      fail(Errc::length_mismatch, "ragged annotation matrix");
    }
    for (const auto& label : column) {
      if (!space.contains(label)) {
        fail(Errc::label_not_in_space,
             "annotation '" + label + "' not in label space");
      }
    }
  }

  PairSelection selection;
  bool have_best = false;
  std::pair<int, int> best_key{0, 0};
  for (std::size_t i = 0; i < workers.size(); ++i) {
    for (std::size_t j = i + 1; j < workers.size(); ++j) {
      PairRate entry;
      entry.first = workers[i];
      entry.second = workers[j];
      if (entry.second.index < entry.first.index) {
        std::swap(entry.first, entry.second);
      }
      entry.rate = pairwise_agreement(columns[i], columns[j]);
      const std::pair<int, int> key{entry.first.index, entry.second.index};
      if (!have_best || entry.rate > selection.agreement_rate ||
          (entry.rate == selection.agreement_rate && key < best_key)) {
        selection.first = entry.first;
        selection.second = entry.second;
        selection.agreement_rate = entry.rate;
        best_key = key;
        have_best = true;
      }
      selection.all_rates.push_back(std::move(entry));
    }
  }
  std::sort(selection.all_rates.begin(), selection.all_rates.end(),
            [](const PairRate& a, const PairRate& b) {
              return std::pair(a.first.index, a.second.index) <
                     std::pair(b.first.index, b.second.index);
            });
  return selection;
}

}  // namespace cascade::agreement
