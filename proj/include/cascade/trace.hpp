#pragma once

// Per-sample records and their JSONL serialization. The trace file starts
// with a header line carrying the schema version, config digest, label space,
// and backend names; every following line is one sample record. Reports are
// computed from the header plus the records alone, so a replay from disk
// reproduces a run's report exactly.

#include "cascade/core.hpp"
#include "cascade/util.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cascade::trace {

// One dataset record.
struct Sample {
  std::string id;
  std::string text;
  std::optional<std::string> gold;
};

// Wall-clock stage timings. worker_us is aligned with SampleTrace.workers;
// critical_path is the worker fan-out maximum; judge_us is the escalation
// judge's latency, present iff the sample escalated.
struct StageTimings {
  std::vector<Micros> worker_us;
  Micros critical_path{0};
  std::optional<Micros> judge_us;
};

struct SampleTrace {
  std::string id;
  std::string input_sha256;
  std::vector<core::Prediction> workers;
  core::DraftOutcome draft;
  bool escalated = false;
  std::map<std::string, core::Prediction> judges;  // judge name -> prediction
  core::FinalLabel final;
  StageTimings timings;
};

struct TraceHeader {
  int v = 1;
  std::string config_digest;
  std::vector<std::string> label_space;
  std::vector<std::string> workers;  // active worker names, index order
  std::vector<std::string> judges;   // escalation judge first
};

// ===== JSON forms =====

nlohmann::json to_json(const core::Prediction& prediction);
core::Prediction prediction_from_json(const nlohmann::json& j,
                                      const core::LabelSpace& space);

nlohmann::json to_json(const SampleTrace& trace);
SampleTrace trace_from_json(const nlohmann::json& j,
                            const core::LabelSpace& space);

nlohmann::json to_json(const TraceHeader& header);
TraceHeader header_from_json(const nlohmann::json& j);

// ===== Files =====

// Streams records to a JSONL file, header first. Write failures surface as
// TraceSinkError.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const TraceHeader& header);
  void append(const SampleTrace& trace);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct TraceFile {
  TraceHeader header;
  core::LabelSpace space;
  std::vector<SampleTrace> traces;
};

// Reads a full trace file. Parse failures report the 1-based line number;
// a file with a valid header but no records is DatasetEmpty.
TraceFile read_trace_file(const std::filesystem::path& path);

// Reads a dataset JSONL file: {"id", "text", "gold": string|null} per line.
// Duplicate ids are rejected (ids key the per-sample RNG streams).
std::vector<Sample> read_dataset(const std::filesystem::path& path);

}  // namespace cascade::trace
