#pragma once

// Core domain types shared by every module.
//
// Everything here is an immutable value: construct through the validating
// factories, then share freely across threads. Invariant violations are
// rejected at the boundary with a typed Error, never silently repaired.

#include "cascade/util.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

// ============================================================================
// Errors
// ============================================================================

enum class Errc {
  // core
  duplicate_label,
  too_few_labels,
  empty_label,
  label_not_in_space,
  invalid_confidence,
  invalid_latency,
  invalid_policy,
  invalid_outcome,
  // agreement
  empty_prediction_set,
  ambiguous_majority,
  missing_confidence,
  length_mismatch,
  empty_columns,
  too_few_workers,
  // specdec
  invalid_distribution,
  zero_worker_probability,
  dimension_mismatch,
  absolute_continuity_violation,
  invalid_episode,
  invalid_argument,
  // backends
  backend_unavailable,
  parse_failure,
  fixture_miss,
  no_label_found,
  placeholder_missing,
  transport_error,
  http_status_error,
  missing_ground_truth,
  // pipeline
  dataset_empty,
  trace_sink_error,
  not_applicable,
  // metrics
  empty_input,
  non_positive_latency,
  config_mismatch,
  // cli
  config_error,
  schema_version_mismatch,
  non_synthetic_backend,
  io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
  throw Error(code, msg);
}

namespace core {

// ============================================================================
// Labels
// ============================================================================

// Case-fold (ASCII) + trim. Applied once at the LabelSpace boundary; every
// comparison after that is exact.
std::string canonical_label(std::string_view raw);

// The ordered set of admissible class labels. Size >= 2, labels pairwise
// distinct after canonicalization.
class LabelSpace {
 public:
  // Default-constructed spaces are empty placeholders; every usable instance
  // comes from validate().
  LabelSpace() = default;

  static LabelSpace validate(const std::vector<std::string>& labels);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  bool contains(std::string_view canonical) const;
  std::optional<std::size_t> index_of(std::string_view canonical) const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  explicit LabelSpace(std::vector<std::string> canonical)
      : labels_(std::move(canonical)) {}
  std::vector<std::string> labels_;
};

// Factory name kept as a free function to match the rest of the surface.
inline LabelSpace validate_label_space(const std::vector<std::string>& labels) {
  return LabelSpace::validate(labels);
}

// ============================================================================
// Workers and predictions
// ============================================================================

struct WorkerId {
  int index = 0;     // unique within a run configuration
  std::string name;  // display name

  friend bool operator==(const WorkerId&, const WorkerId&) = default;
};

// One worker/judge output. label is always canonical and inside the space it
// was validated against; confidence, when present, lies in [0, 1].
struct Prediction {
  WorkerId worker;
  std::string label;
  std::optional<double> confidence;
  Micros latency{0};
  std::string raw_output;

  static Prediction make(const LabelSpace& space, WorkerId worker,
                         std::string_view label,
                         std::optional<double> confidence, Micros latency,
                         std::string raw_output);
};

// ============================================================================
// Agreement policy
// ============================================================================

enum class PolicyKind { SimpleMajority, ConfidenceMajority, Unanimous };
enum class VarianceDirection { AtLeast, AtMost };

const char* policy_kind_name(PolicyKind kind);
PolicyKind policy_kind_from_name(std::string_view name);
const char* variance_direction_name(VarianceDirection dir);
VarianceDirection variance_direction_from_name(std::string_view name);

// tau/delta are present iff kind == ConfidenceMajority. The variance
// comparison direction defaults to the literal form (>=); AtMost flips it.
struct AgreementPolicy {
  PolicyKind kind = PolicyKind::SimpleMajority;
  std::optional<double> tau;
  std::optional<double> delta;
  VarianceDirection variance_direction = VarianceDirection::AtLeast;

  static AgreementPolicy simple_majority();
  static AgreementPolicy unanimous();
  static AgreementPolicy confidence_majority(
      double tau, double delta,
      VarianceDirection dir = VarianceDirection::AtLeast);

  // Re-checks the tau/delta presence invariant (used after deserialization).
  void check() const;
};

// ============================================================================
// Draft outcome and final label
// ============================================================================

// decided present => supporters non-empty; the deciding functions guarantee
// every supporter's prediction equals the decided label.
struct DraftOutcome {
  std::optional<std::string> decided;
  std::vector<WorkerId> supporters;  // sorted by worker index
  PolicyKind criterion = PolicyKind::SimpleMajority;

  static DraftOutcome undecided(PolicyKind criterion);
  static DraftOutcome make(std::string label, std::vector<WorkerId> supporters,
                           PolicyKind criterion);
};

enum class FinalSource { WorkerConsensus, JudgeEscalation };

const char* final_source_name(FinalSource source);
FinalSource final_source_from_name(std::string_view name);

struct FinalLabel {
  std::string label;
  FinalSource source = FinalSource::JudgeEscalation;
};

}  // namespace core
}  // namespace cascade
