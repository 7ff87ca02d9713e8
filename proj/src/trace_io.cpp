#include "cascade/trace.hpp"

#include <set>
#include <utility>

namespace cascade::trace {

namespace {

// Strict object check: every present key must be expected (typos in hand-
// edited files should fail loudly, not vanish).
void require_keys(const nlohmann::json& j,
                  std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) {
    fail(Errc::io_error, std::string(what) + " is not a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const char* k : keys) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      fail(Errc::io_error,
           std::string("unknown key '") + key + "' in " + what);
    }
  }
}

std::optional<double> confidence_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

// ===== JSON forms =====

nlohmann::json to_json(const core::Prediction& prediction) {
  nlohmann::json j;
  j["confidence"] = prediction.confidence
                        ? nlohmann::json(*prediction.confidence)
                        : nlohmann::json(nullptr);
  j["label"] = prediction.label;
  j["latency_ms"] = micros_to_ms(prediction.latency);
  j["name"] = prediction.worker.name;
  j["raw"] = prediction.raw_output;
  j["worker_index"] = prediction.worker.index;
  return j;
}

core::Prediction prediction_from_json(const nlohmann::json& j,
                                      const core::LabelSpace& space) {
  require_keys(j, {"confidence", "label", "latency_ms", "name", "raw",
                   "worker_index"},
               "prediction");
  core::WorkerId worker{j.at("worker_index").get<int>(),
                        j.at("name").get<std::string>()};
  return core::Prediction::make(
      space, std::move(worker), j.at("label").get<std::string>(),
      confidence_from_json(j.at("confidence")),
      ms_to_micros(j.at("latency_ms").get<double>()),
      j.at("raw").get<std::string>());
}

nlohmann::json to_json(const SampleTrace& trace) {
  nlohmann::json j;
  j["id"] = trace.id;
  j["input_sha256"] = trace.input_sha256;

  j["workers"] = nlohmann::json::array();
  for (const auto& p : trace.workers) j["workers"].push_back(to_json(p));

  nlohmann::json draft;
  draft["label"] = trace.draft.decided ? nlohmann::json(*trace.draft.decided)
                                       : nlohmann::json(nullptr);
  draft["supporters"] = nlohmann::json::array();
  for (const auto& s : trace.draft.supporters) {
    draft["supporters"].push_back(s.index);
  }
  draft["criterion"] = core::policy_kind_name(trace.draft.criterion);
  j["draft"] = std::move(draft);

  j["escalated"] = trace.escalated;

  j["judges"] = nlohmann::json::object();
  for (const auto& [name, p] : trace.judges) j["judges"][name] = to_json(p);

  j["final"] = {{"label", trace.final.label},
                {"source", core::final_source_name(trace.final.source)}};

  nlohmann::json timings;
  timings["worker_ms"] = nlohmann::json::array();
  for (const auto& us : trace.timings.worker_us) {
    timings["worker_ms"].push_back(micros_to_ms(us));
  }
  timings["critical_path_ms"] = micros_to_ms(trace.timings.critical_path);
  timings["judge_ms"] = trace.timings.judge_us
                            ? nlohmann::json(micros_to_ms(*trace.timings.judge_us))
                            : nlohmann::json(nullptr);
  j["timings"] = std::move(timings);
  return j;
}

SampleTrace trace_from_json(const nlohmann::json& j,
                            const core::LabelSpace& space) {
  require_keys(j,
               {"id", "input_sha256", "workers", "draft", "escalated",
                "judges", "final", "timings"},
               "trace record");
  SampleTrace trace;
  trace.id = j.at("id").get<std::string>();
  trace.input_sha256 = j.at("input_sha256").get<std::string>();

  for (const auto& p : j.at("workers")) {
    trace.workers.push_back(prediction_from_json(p, space));
  }

  const auto& draft = j.at("draft");
  require_keys(draft, {"label", "supporters", "criterion"}, "draft");
  const core::PolicyKind criterion =
      core::policy_kind_from_name(draft.at("criterion").get<std::string>());
  if (draft.at("label").is_null()) {
    trace.draft = core::DraftOutcome::undecided(criterion);
  } else {
    std::vector<core::WorkerId> supporters;
    for (const auto& idx : draft.at("supporters")) {
      const int index = idx.get<int>();
      bool found = false;
      for (const auto& p : trace.workers) {
        if (p.worker.index == index) {
          supporters.push_back(p.worker);
          found = true;
          break;
        }
      }
      if (!found) {
        fail(Errc::invalid_outcome, "supporter index " +
                                        std::to_string(index) +
                                        " has no worker prediction");
      }
    }
    trace.draft = core::DraftOutcome::make(
        draft.at("label").get<std::string>(), std::move(supporters),
        criterion);
  }

  trace.escalated = j.at("escalated").get<bool>();
  if (trace.escalated == trace.draft.decided.has_value()) {
    fail(Errc::invalid_outcome,
         "escalated flag contradicts draft outcome for sample '" + trace.id +
             "'");
  }

  for (const auto& [name, p] : j.at("judges").items()) {
    trace.judges.emplace(name, prediction_from_json(p, space));
  }

  const auto& final = j.at("final");
  require_keys(final, {"label", "source"}, "final");
  trace.final.label = core::canonical_label(final.at("label").get<std::string>());
  if (!space.contains(trace.final.label)) {
    fail(Errc::label_not_in_space,
         "final label '" + trace.final.label + "' not in label space");
  }
  trace.final.source =
      core::final_source_from_name(final.at("source").get<std::string>());
  const bool from_judge =
      trace.final.source == core::FinalSource::JudgeEscalation;
  if (from_judge != trace.escalated) {
    fail(Errc::invalid_outcome,
         "final source contradicts escalated flag for sample '" + trace.id +
             "'");
  }

  const auto& timings = j.at("timings");
  require_keys(timings, {"worker_ms", "critical_path_ms", "judge_ms"},
               "timings");
  for (const auto& ms : timings.at("worker_ms")) {
    trace.timings.worker_us.push_back(ms_to_micros(ms.get<double>()));
  }
  trace.timings.critical_path =
      ms_to_micros(timings.at("critical_path_ms").get<double>());
  if (!timings.at("judge_ms").is_null()) {
    trace.timings.judge_us =
        ms_to_micros(timings.at("judge_ms").get<double>());
  }
  return trace;
}

nlohmann::json to_json(const TraceHeader& header) {
  nlohmann::json j;
  j["v"] = header.v;
  j["config_digest"] = header.config_digest;
  j["label_space"] = header.label_space;
  j["workers"] = header.workers;
  j["judges"] = header.judges;
  return j;
}

TraceHeader header_from_json(const nlohmann::json& j) {
  require_keys(j, {"v", "config_digest", "label_space", "workers", "judges"},
               "trace header");
  TraceHeader header;
  header.v = j.at("v").get<int>();
  if (header.v != 1) {
    fail(Errc::schema_version_mismatch,
         "trace schema v" + std::to_string(header.v) + ", expected v1");
  }
  header.config_digest = j.at("config_digest").get<std::string>();
  header.label_space = j.at("label_space").get<std::vector<std::string>>();
  header.workers = j.at("workers").get<std::vector<std::string>>();
  header.judges = j.at("judges").get<std::vector<std::string>>();
  if (header.judges.empty()) {
    fail(Errc::io_error, "trace header lists no judges");
  }
  return header;
}

// ===== Files =====

TraceWriter::TraceWriter(const std::filesystem::path& path,
                         const TraceHeader& header)
    : path_(path), out_(path, std::ios::trunc) {
  if (!out_) {
    fail(Errc::trace_sink_error, "cannot open '" + path.string() + "'");
  }
  out_ << to_json(header).dump() << '\n';
  if (!out_) {
    fail(Errc::trace_sink_error, "write failed on '" + path.string() + "'");
  }
}

void TraceWriter::append(const SampleTrace& trace) {
  out_ << to_json(trace).dump() << '\n';
  if (!out_) {
    fail(Errc::trace_sink_error, "write failed on '" + path_.string() + "'");
  }
}

void TraceWriter::close() {
  out_.flush();
  out_.close();
  if (out_.fail()) {
    fail(Errc::trace_sink_error, "close failed on '" + path_.string() + "'");
  }
}

TraceFile read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open '" + path.string() + "'");

  std::string line;
  std::size_t line_no = 0;
  std::optional<TraceFile> file;
  std::vector<std::string> labels;
  while (std::getline(in, line)) {
    ++line_no;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error, "'" + path.string() + "' line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!file) {
        TraceHeader header = header_from_json(j);
        core::LabelSpace space = core::LabelSpace::validate(header.label_space);
        file = TraceFile{std::move(header), std::move(space), {}};
      } else {
        file->traces.push_back(trace_from_json(j, file->space));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error, "'" + path.string() + "' line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!file) fail(Errc::io_error, "'" + path.string() + "' has no header line");
  if (file->traces.empty()) {
    fail(Errc::dataset_empty, "'" + path.string() + "' contains no records");
  }
  return std::move(*file);
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open '" + path.string() + "'");

  std::vector<Sample> samples;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      require_keys(j, {"id", "text", "gold"}, "dataset record");
      Sample sample;
      sample.id = j.at("id").get<std::string>();
      sample.text = j.at("text").get<std::string>();
      if (j.contains("gold") && !j.at("gold").is_null()) {
        sample.gold = j.at("gold").get<std::string>();
      }
      if (sample.id.empty()) fail(Errc::io_error, "empty sample id");
      if (sample.text.empty()) {
        fail(Errc::io_error, "empty text for sample '" + sample.id + "'");
      }
      if (!seen.insert(sample.id).second) {
        fail(Errc::io_error, "duplicate sample id '" + sample.id + "'");
      }
      samples.push_back(std::move(sample));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error, "'" + path.string() + "' line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  if (samples.empty()) {
    fail(Errc::dataset_empty, "'" + path.string() + "' contains no samples");
  }
  return samples;
}

}  // namespace cascade::trace
