#pragma once

// Run orchestration: fan each sample out to the workers, apply the agreement
// policy, escalate undecided samples to the judge, stream traces in dataset
// order, and aggregate the report through mergeable accumulators.
//
// Determinism: every backend call receives a seed derived from (run seed,
// sample id, backend index), so fixture/synthetic results are identical for
// any parallelism width, thread schedule, or dataset order.

#include "cascade/agreement.hpp"
#include "cascade/backends.hpp"
#include "cascade/core.hpp"
#include "cascade/metrics.hpp"
#include "cascade/trace.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <vector>

namespace cascade::pipeline {

struct RunOptions {
  core::LabelSpace space;
  // Active cascade workers (pair restriction already applied by the caller).
  std::vector<std::shared_ptr<backends::Backend>> workers;
  // judges[0] is the escalation judge; judges[1], when present, runs over
  // every sample only under audit_judge.
  std::vector<std::shared_ptr<backends::Backend>> judges;
  core::AgreementPolicy policy;
  bool audit_judge = false;
  int parallelism = 1;
  std::uint64_t seed = 0;
  std::string config_digest;

  void check() const;
};

struct RunOutcome {
  trace::TraceHeader header;
  std::vector<trace::SampleTrace> traces;  // dataset order
  nlohmann::json report;
  std::size_t failed_worker_calls = 0;
};

trace::TraceHeader make_header(const RunOptions& options);

// One sample through the full cascade. Worker failures degrade the quorum
// (fewer than 2 predictions escalates unconditionally); judge failures
// propagate, the judge being the correctness backstop.
trace::SampleTrace run_sample(const RunOptions& options,
                              const trace::Sample& sample);

// Whole-dataset run over a bounded thread pool. Traces stream to `writer`
// (when given) in dataset order as they complete.
RunOutcome run_dataset(const RunOptions& options,
                       const std::vector<trace::Sample>& samples,
                       trace::TraceWriter* writer = nullptr);

// Workers-only calibration pass feeding best-pair selection. Pair selection
// is the W > L branch; W <= L is NotApplicable (per-sample majority instead).
agreement::PairSelection calibrate_pairs(
    const RunOptions& options, const std::vector<trace::Sample>& samples);

}  // namespace cascade::pipeline
