#pragma once

// Aggregate statistics over trace records: agreement rates, escalation
// fraction, label confusion, latency percentiles, and the two speedup
// definitions. The Accumulator is a mergeable partial summary so sharded
// aggregation reproduces the sequential result exactly.

#include "cascade/core.hpp"
#include "cascade/trace.hpp"
#include "cascade/util.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace cascade::metrics {

// Nearest-rank percentile: sort ascending, take the element at rank
// ceil(p/100 * n). p must lie in (0, 100].
Micros percentile(std::vector<Micros> values, double p);

// Exact-match fraction of two equal-length label columns.
double agreement_rate(const std::vector<std::string>& labels_a,
                      const std::vector<std::string>& labels_b);

// judge_p95 / worker_path_p95, escalation cost ignored.
double naive_speedup(Micros judge_p95, Micros worker_path_p95);

// judge_p95 / (worker_path_p95 + e * judge_p95): escalated samples pay the
// worker fan-out and the judge.
double effective_speedup(Micros judge_p95, Micros worker_path_p95,
                         double escalation_fraction);

double escalation_fraction(const std::vector<trace::SampleTrace>& traces);

// Single-writer partial summary. merge() is associative and commutative
// (latency reservoirs are sorted at report time), so any merge tree over a
// partition of the traces yields the identical report.
class Accumulator {
 public:
  explicit Accumulator(trace::TraceHeader header);

  void add(const trace::SampleTrace& trace);
  void merge(const Accumulator& other);  // ConfigMismatch on digest difference

  std::size_t samples() const { return samples_; }

  // Full report document, keys sorted, derived from added traces only.
  nlohmann::json report() const;

 private:
  struct Ratio {
    std::size_t matches = 0;
    std::size_t total = 0;
  };

  trace::TraceHeader header_;
  std::size_t samples_ = 0;
  std::size_t escalated_ = 0;
  std::size_t degraded_ = 0;
  std::size_t failed_worker_calls_ = 0;
  std::map<std::string, std::size_t> judge_invocations_;
  std::map<std::string, std::size_t> final_histogram_;
  // judge name -> worker name -> match ratio over samples where both labeled
  std::map<std::string, std::map<std::string, Ratio>> worker_vs_judge_;
  // judge name -> ratio of decided drafts matching that judge's label
  std::map<std::string, Ratio> draft_vs_judge_;
  Ratio judge_vs_judge_;
  // judge name -> judge label -> worker label -> count
  std::map<std::string, std::map<std::string, std::map<std::string, std::size_t>>>
      confusion_;
  std::map<std::string, std::vector<Micros>> backend_latency_;
  std::vector<Micros> critical_path_;
};

// Flattens a report document into "metric,value" CSV rows (dotted paths).
std::string report_csv(const nlohmann::json& report);

// dump(2) plus trailing newline: the canonical on-disk report form.
std::string report_document(const nlohmann::json& report);

}  // namespace cascade::metrics
