#include "cascade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cascade::metrics {

namespace {

nlohmann::json ratio_or_null(std::size_t matches, std::size_t total) {
  if (total == 0) return nullptr;
  return static_cast<double>(matches) / static_cast<double>(total);
}

// Escapes one CSV field per RFC 4180 when it contains a separator.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

void flatten_csv(const nlohmann::json& node, const std::string& path,
                 std::ostringstream& out) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) {
      flatten_csv(value, path.empty() ? key : path + "." + key, out);
    }
    return;
  }
  if (node.is_array()) {
    std::size_t i = 0;
    for (const auto& value : node) {
      flatten_csv(value, path + "[" + std::to_string(i++) + "]", out);
    }
    return;
  }
  std::string value =
      node.is_string() ? node.get<std::string>() : node.dump();
  out << csv_field(path) << ',' << csv_field(value) << '\n';
}

}  // namespace

Micros percentile(std::vector<Micros> values, double p) {
  if (values.empty()) fail(Errc::empty_input, "percentile of an empty list");
  if (!(p > 0.0 && p <= 100.0)) {
    fail(Errc::invalid_argument,
         "percentile " + std::to_string(p) + " outside (0, 100]");
  }
  std::sort(values.begin(), values.end());
  // Multiply before dividing so integer-valued ranks stay exact.
  double rank = std::ceil(p * static_cast<double>(values.size()) / 100.0);
  auto index = static_cast<std::size_t>(rank);
  if (index < 1) index = 1;
  if (index > values.size()) index = values.size();
  return values[index - 1];
}

double agreement_rate(const std::vector<std::string>& labels_a,
                      const std::vector<std::string>& labels_b) {
  if (labels_a.size() != labels_b.size()) {
    fail(Errc::length_mismatch,
         "label lists of length " + std::to_string(labels_a.size()) + " and " +
             std::to_string(labels_b.size()));
  }
  if (labels_a.empty()) fail(Errc::empty_input, "agreement of empty lists");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    if (labels_a[i] == labels_b[i]) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(labels_a.size());
}

double naive_speedup(Micros judge_p95, Micros worker_path_p95) {
  if (judge_p95.count() <= 0 || worker_path_p95.count() <= 0) {
    fail(Errc::non_positive_latency, "speedup requires positive latencies");
  }
  return static_cast<double>(judge_p95.count()) /
         static_cast<double>(worker_path_p95.count());
}

double effective_speedup(Micros judge_p95, Micros worker_path_p95,
                         double escalation_fraction) {
  if (judge_p95.count() <= 0 || worker_path_p95.count() <= 0) {
    fail(Errc::non_positive_latency, "speedup requires positive latencies");
  }
  if (!(escalation_fraction >= 0.0 && escalation_fraction <= 1.0)) {
    fail(Errc::invalid_argument,
         "escalation fraction " + std::to_string(escalation_fraction) +
             " outside [0, 1]");
  }
  const double judge = static_cast<double>(judge_p95.count());
  const double worker = static_cast<double>(worker_path_p95.count());
  return judge / (worker + escalation_fraction * judge);
}

double escalation_fraction(const std::vector<trace::SampleTrace>& traces) {
  if (traces.empty()) fail(Errc::empty_input, "escalation of zero traces");
  std::size_t escalated = 0;
  for (const auto& t : traces) {
    if (t.escalated) ++escalated;
  }
  return static_cast<double>(escalated) / static_cast<double>(traces.size());
}

// ===== Accumulator =====

Accumulator::Accumulator(trace::TraceHeader header)
    : header_(std::move(header)) {}

void Accumulator::add(const trace::SampleTrace& trace) {
  ++samples_;
  if (trace.escalated) ++escalated_;
  if (trace.workers.size() < 2) ++degraded_;
  if (trace.workers.size() < header_.workers.size()) {
    failed_worker_calls_ += header_.workers.size() - trace.workers.size();
  }
  ++final_histogram_[trace.final.label];
  critical_path_.push_back(trace.timings.critical_path);

  for (const auto& p : trace.workers) {
    backend_latency_[p.worker.name].push_back(p.latency);
  }
  for (const auto& [judge, jp] : trace.judges) {
    ++judge_invocations_[judge];
    backend_latency_[judge].push_back(jp.latency);
    for (const auto& wp : trace.workers) {
      Ratio& r = worker_vs_judge_[judge][wp.worker.name];
      ++r.total;
      if (wp.label == jp.label) ++r.matches;
      ++confusion_[judge][jp.label][wp.label];
    }
    if (trace.draft.decided) {
      Ratio& r = draft_vs_judge_[judge];
      ++r.total;
      if (*trace.draft.decided == jp.label) ++r.matches;
    }
  }
  if (header_.judges.size() == 2) {
    auto first = trace.judges.find(header_.judges[0]);
    auto second = trace.judges.find(header_.judges[1]);
    if (first != trace.judges.end() && second != trace.judges.end()) {
      ++judge_vs_judge_.total;
      if (first->second.label == second->second.label) {
        ++judge_vs_judge_.matches;
      }
    }
  }
}

void Accumulator::merge(const Accumulator& other) {
  if (header_.config_digest != other.header_.config_digest) {
    fail(Errc::config_mismatch,
         "merging accumulators of different run configurations");
  }
  samples_ += other.samples_;
  escalated_ += other.escalated_;
  degraded_ += other.degraded_;
  failed_worker_calls_ += other.failed_worker_calls_;
  for (const auto& [k, v] : other.judge_invocations_) {
    judge_invocations_[k] += v;
  }
  for (const auto& [k, v] : other.final_histogram_) final_histogram_[k] += v;
  for (const auto& [judge, workers] : other.worker_vs_judge_) {
    for (const auto& [worker, r] : workers) {
      Ratio& mine = worker_vs_judge_[judge][worker];
      mine.matches += r.matches;
      mine.total += r.total;
    }
  }
  for (const auto& [judge, r] : other.draft_vs_judge_) {
    Ratio& mine = draft_vs_judge_[judge];
    mine.matches += r.matches;
    mine.total += r.total;
  }
  judge_vs_judge_.matches += other.judge_vs_judge_.matches;
  judge_vs_judge_.total += other.judge_vs_judge_.total;
  for (const auto& [judge, rows] : other.confusion_) {
    for (const auto& [jl, cols] : rows) {
      for (const auto& [wl, count] : cols) confusion_[judge][jl][wl] += count;
    }
  }
  for (const auto& [name, latencies] : other.backend_latency_) {
    auto& mine = backend_latency_[name];
    mine.insert(mine.end(), latencies.begin(), latencies.end());
  }
  critical_path_.insert(critical_path_.end(), other.critical_path_.begin(),
                        other.critical_path_.end());
}

nlohmann::json Accumulator::report() const {
  auto percentile_block = [](const std::vector<Micros>& values) {
    if (values.empty()) return nlohmann::json(nullptr);
    nlohmann::json block;
    for (double p : {50.0, 90.0, 95.0, 99.0}) {
      block["p" + std::to_string(static_cast<int>(p))] =
          micros_to_ms(percentile(values, p));
    }
    return block;
  };

  nlohmann::json report;
  report["schema"] = 1;
  report["config_digest"] = header_.config_digest;

  nlohmann::json counts;
  counts["samples"] = samples_;
  counts["escalated"] = escalated_;
  counts["degraded"] = degraded_;
  counts["failed_worker_calls"] = failed_worker_calls_;
  nlohmann::json invocations = nlohmann::json::object();
  for (const auto& judge : header_.judges) {
    auto it = judge_invocations_.find(judge);
    invocations[judge] = it == judge_invocations_.end() ? 0 : it->second;
  }
  counts["judge_invocations"] = std::move(invocations);
  report["counts"] = std::move(counts);

  report["escalation_fraction"] =
      samples_ == 0 ? nlohmann::json(nullptr)
                    : nlohmann::json(static_cast<double>(escalated_) /
                                     static_cast<double>(samples_));

  nlohmann::json histogram = nlohmann::json::object();
  for (const auto& [label, count] : final_histogram_) histogram[label] = count;
  report["final_label_histogram"] = std::move(histogram);

  nlohmann::json agreement;
  nlohmann::json worker_vs_judge = nlohmann::json::object();
  for (const auto& judge : header_.judges) {
    nlohmann::json per_worker = nlohmann::json::object();
    for (const auto& worker : header_.workers) {
      Ratio r;
      auto jit = worker_vs_judge_.find(judge);
      if (jit != worker_vs_judge_.end()) {
        auto wit = jit->second.find(worker);
        if (wit != jit->second.end()) r = wit->second;
      }
      per_worker[worker] = ratio_or_null(r.matches, r.total);
    }
    worker_vs_judge[judge] = std::move(per_worker);
  }
  agreement["worker_vs_judge"] = std::move(worker_vs_judge);
  nlohmann::json pair_vs_judge = nlohmann::json::object();
  for (const auto& judge : header_.judges) {
    Ratio r;
    auto it = draft_vs_judge_.find(judge);
    if (it != draft_vs_judge_.end()) r = it->second;
    pair_vs_judge[judge] = ratio_or_null(r.matches, r.total);
  }
  agreement["best_pair_vs_judge"] = std::move(pair_vs_judge);
  agreement["judge_vs_judge"] =
      ratio_or_null(judge_vs_judge_.matches, judge_vs_judge_.total);
  report["agreement"] = std::move(agreement);

  nlohmann::json confusion = nlohmann::json::object();
  for (const auto& [judge, rows] : confusion_) {
    nlohmann::json row_obj = nlohmann::json::object();
    for (const auto& [jl, cols] : rows) {
      nlohmann::json col_obj = nlohmann::json::object();
      for (const auto& [wl, count] : cols) col_obj[wl] = count;
      row_obj[jl] = std::move(col_obj);
    }
    confusion[judge] = std::move(row_obj);
  }
  report["confusion"] = std::move(confusion);

  nlohmann::json latency;
  nlohmann::json backends = nlohmann::json::object();
  std::vector<std::string> names = header_.workers;
  names.insert(names.end(), header_.judges.begin(), header_.judges.end());
  for (const auto& name : names) {
    auto it = backend_latency_.find(name);
    backends[name] = it == backend_latency_.end()
                         ? nlohmann::json(nullptr)
                         : percentile_block(it->second);
  }
  latency["backends"] = std::move(backends);
  latency["critical_path"] = percentile_block(critical_path_);
  report["latency_ms"] = std::move(latency);

  nlohmann::json speedup = nlohmann::json::object();
  for (const auto& judge : header_.judges) {
    auto it = backend_latency_.find(judge);
    if (it == backend_latency_.end() || it->second.empty() ||
        critical_path_.empty() || samples_ == 0) {
      speedup[judge] = nullptr;
      continue;
    }
    const Micros judge_p95 = percentile(it->second, 95.0);
    const Micros path_p95 = percentile(critical_path_, 95.0);
    if (judge_p95.count() <= 0 || path_p95.count() <= 0) {
      speedup[judge] = nullptr;
      continue;
    }
    const double e =
        static_cast<double>(escalated_) / static_cast<double>(samples_);
    speedup[judge] = {{"naive", naive_speedup(judge_p95, path_p95)},
                      {"effective", effective_speedup(judge_p95, path_p95, e)}};
  }
  report["speedup"] = std::move(speedup);
  return report;
}

std::string report_csv(const nlohmann::json& report) {
  std::ostringstream out;
  out << "metric,value\n";
  flatten_csv(report, "", out);
  return out.str();
}

std::string report_document(const nlohmann::json& report) {
  return report.dump(2) + "\n";
}

}  // namespace cascade::metrics
