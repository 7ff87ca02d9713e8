#include "cascade/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace cascade {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::duplicate_label: return "DuplicateLabel";
    case Errc::too_few_labels: return "TooFewLabels";
    case Errc::empty_label: return "EmptyLabel";
    case Errc::label_not_in_space: return "LabelNotInSpace";
    case Errc::invalid_confidence: return "InvalidConfidence";
    case Errc::invalid_latency: return "InvalidLatency";
    case Errc::invalid_policy: return "InvalidPolicy";
    case Errc::invalid_outcome: return "InvalidOutcome";
    case Errc::empty_prediction_set: return "EmptyPredictionSet";
    case Errc::ambiguous_majority: return "AmbiguousMajority";
    case Errc::missing_confidence: return "MissingConfidence";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::empty_columns: return "EmptyColumns";
    case Errc::too_few_workers: return "TooFewWorkers";
    case Errc::invalid_distribution: return "InvalidDistribution";
    case Errc::zero_worker_probability: return "ZeroWorkerProbability";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::absolute_continuity_violation:
      return "AbsoluteContinuityViolation";
    case Errc::invalid_episode: return "InvalidEpisode";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::parse_failure: return "ParseFailure";
    case Errc::fixture_miss: return "FixtureMiss";
    case Errc::no_label_found: return "NoLabelFound";
    case Errc::placeholder_missing: return "PlaceholderMissing";
    case Errc::transport_error: return "TransportError";
    case Errc::http_status_error: return "HttpStatusError";
    case Errc::missing_ground_truth: return "MissingGroundTruth";
    case Errc::dataset_empty: return "DatasetEmpty";
    case Errc::trace_sink_error: return "TraceSinkError";
    case Errc::not_applicable: return "NotApplicable";
    case Errc::empty_input: return "EmptyInput";
    case Errc::non_positive_latency: return "NonPositiveLatency";
    case Errc::config_mismatch: return "ConfigMismatch";
    case Errc::config_error: return "ConfigError";
    case Errc::schema_version_mismatch: return "SchemaVersionMismatch";
    case Errc::non_synthetic_backend: return "NonSyntheticBackend";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

namespace core {

// ============================================================================
// Labels
// ============================================================================

std::string canonical_label(std::string_view raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end &&
         std::isspace(static_cast<unsigned char>(raw[begin]))) {
    ++begin;
  }
  while (end > begin &&
         std::isspace(static_cast<unsigned char>(raw[end - 1]))) {
    --end;
  }
  std::string out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    out.push_back(static_cast<char>(
        std::tolower(static_cast<unsigned char>(raw[i]))));
  }
  return out;
}

LabelSpace LabelSpace::validate(const std::vector<std::string>& labels) {
  std::vector<std::string> canonical;
  canonical.reserve(labels.size());
  for (const auto& raw : labels) {
    std::string c = canonical_label(raw);
    if (c.empty()) fail(Errc::empty_label, "label '" + raw + "' is empty");
    if (std::find(canonical.begin(), canonical.end(), c) != canonical.end()) {
      fail(Errc::duplicate_label, "label '" + c + "' appears twice");
    }
    canonical.push_back(std::move(c));
  }
  if (canonical.size() < 2) {
    fail(Errc::too_few_labels,
         "need at least 2 labels, got " + std::to_string(canonical.size()));
  }
  return LabelSpace(std::move(canonical));
}

bool LabelSpace::contains(std::string_view canonical) const {
  return index_of(canonical).has_value();
}

std::optional<std::size_t> LabelSpace::index_of(
    std::string_view canonical) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == canonical) return i;
  }
  return std::nullopt;
}

// ============================================================================
// Predictions
// ============================================================================

Prediction Prediction::make(const LabelSpace& space, WorkerId worker,
                            std::string_view label,
                            std::optional<double> confidence, Micros latency,
                            std::string raw_output) {
  std::string canonical = canonical_label(label);
  if (!space.contains(canonical)) {
    fail(Errc::label_not_in_space,
         "label '" + canonical + "' not in label space");
  }
  if (confidence) {
    double c = *confidence;
    if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
      fail(Errc::invalid_confidence,
           "confidence " + std::to_string(c) + " outside [0, 1]");
    }
  }
  if (latency.count() < 0) {
    fail(Errc::invalid_latency,
         "latency " + std::to_string(latency.count()) + "us is negative");
  }
  return Prediction{std::move(worker), std::move(canonical), confidence,
                    latency, std::move(raw_output)};
}

// ============================================================================
// Agreement policy
// ============================================================================

const char* policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::SimpleMajority: return "simple_majority";
    case PolicyKind::ConfidenceMajority: return "confidence_majority";
    case PolicyKind::Unanimous: return "unanimous";
  }
  return "unknown";
}

PolicyKind policy_kind_from_name(std::string_view name) {
  if (name == "simple_majority") return PolicyKind::SimpleMajority;
  if (name == "confidence_majority") return PolicyKind::ConfidenceMajority;
  if (name == "unanimous") return PolicyKind::Unanimous;
  fail(Errc::invalid_policy, "unknown policy kind '" + std::string(name) + "'");
}

const char* variance_direction_name(VarianceDirection dir) {
  switch (dir) {
    case VarianceDirection::AtLeast: return "at_least";
    case VarianceDirection::AtMost: return "at_most";
  }
  return "unknown";
}

VarianceDirection variance_direction_from_name(std::string_view name) {
  if (name == "at_least") return VarianceDirection::AtLeast;
  if (name == "at_most") return VarianceDirection::AtMost;
  fail(Errc::invalid_policy,
       "unknown variance direction '" + std::string(name) + "'");
}

AgreementPolicy AgreementPolicy::simple_majority() {
  return AgreementPolicy{PolicyKind::SimpleMajority, std::nullopt, std::nullopt,
                         VarianceDirection::AtLeast};
}

AgreementPolicy AgreementPolicy::unanimous() {
  return AgreementPolicy{PolicyKind::Unanimous, std::nullopt, std::nullopt,
                         VarianceDirection::AtLeast};
}

AgreementPolicy AgreementPolicy::confidence_majority(double tau, double delta,
                                                     VarianceDirection dir) {
  AgreementPolicy policy{PolicyKind::ConfidenceMajority, tau, delta, dir};
  policy.check();
  return policy;
}

void AgreementPolicy::check() const {
  if (kind == PolicyKind::ConfidenceMajority) {
    if (!tau || !delta) {
      fail(Errc::invalid_policy, "confidence_majority requires tau and delta");
    }
    if (!std::isfinite(*tau) || *tau < 0.0 || *tau > 1.0) {
      fail(Errc::invalid_policy,
           "tau " + std::to_string(*tau) + " outside [0, 1]");
    }
    if (!std::isfinite(*delta) || *delta < 0.0) {
      fail(Errc::invalid_policy,
           "delta " + std::to_string(*delta) + " is negative");
    }
  } else if (tau || delta) {
    fail(Errc::invalid_policy,
         std::string(policy_kind_name(kind)) + " does not take tau/delta");
  }
}

// ============================================================================
// Draft outcome and final label
// ============================================================================

DraftOutcome DraftOutcome::undecided(PolicyKind criterion) {
  return DraftOutcome{std::nullopt, {}, criterion};
}

DraftOutcome DraftOutcome::make(std::string label,
                                std::vector<WorkerId> supporters,
                                PolicyKind criterion) {
  if (supporters.empty()) {
    fail(Errc::invalid_outcome, "decided outcome requires supporters");
  }
  std::sort(supporters.begin(), supporters.end(),
            [](const WorkerId& a, const WorkerId& b) {
              return a.index < b.index;
            });
  return DraftOutcome{std::move(label), std::move(supporters), criterion};
}

const char* final_source_name(FinalSource source) {
  switch (source) {
    case FinalSource::WorkerConsensus: return "worker_consensus";
    case FinalSource::JudgeEscalation: return "judge_escalation";
  }
  return "unknown";
}

FinalSource final_source_from_name(std::string_view name) {
  if (name == "worker_consensus") return FinalSource::WorkerConsensus;
  if (name == "judge_escalation") return FinalSource::JudgeEscalation;
  fail(Errc::invalid_outcome,
       "unknown final source '" + std::string(name) + "'");
}

}  // namespace core
}  // namespace cascade
