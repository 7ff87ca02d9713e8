#include "cascade/pipeline.hpp"

#include "cascade/rng.hpp"
#include "cascade/util.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace cascade::pipeline {

namespace {

// Salt namespaces keeping worker, judge, and shared-noise streams disjoint.
constexpr std::uint64_t kSharedNoiseSalt = 0xFFFFFFFFFFFFFFFFull;
constexpr std::uint64_t kJudgeSaltBase = 0x4A00000000000000ull;

std::uint64_t sample_key(const trace::Sample& sample) {
  return fnv1a64(sample.id);
}

backends::ClassifyContext make_context(const RunOptions& options,
                                       const trace::Sample& sample,
                                       std::uint64_t backend_salt) {
  backends::ClassifyContext ctx;
  ctx.sample_id = sample.id;
  ctx.text = sample.text;
  ctx.gold = sample.gold;
  const std::uint64_t key = sample_key(sample);
  ctx.rng_seed = derive_seed(options.seed, key, backend_salt);
  rng::Rng shared(derive_seed(options.seed, key, kSharedNoiseSalt));
  ctx.shared_uniform = shared.uniform();
  return ctx;
}

// Queries every worker; failures drop that prediction, not the sample.
// Predictions come back in worker order regardless of fan-out concurrency.
std::vector<core::Prediction> fan_out_workers(const RunOptions& options,
                                              const trace::Sample& sample) {
  const std::size_t w = options.workers.size();
  std::vector<std::optional<core::Prediction>> slots(w);
  std::vector<std::exception_ptr> fatal(w);

  auto call_one = [&](std::size_t i) {
    try {
      const auto ctx = make_context(
          options, sample,
          static_cast<std::uint64_t>(options.workers[i]->id().index));
      slots[i] = options.workers[i]->classify(ctx);
    } catch (const Error&) {
      // degraded quorum; the draft logic below decides what that means
    } catch (...) {
      fatal[i] = std::current_exception();
    }
  };

  const bool concurrent =
      std::any_of(options.workers.begin(), options.workers.end(),
                  [](const auto& b) { return b->concurrent_fanout(); });
  if (concurrent && w > 1) {
    std::vector<std::jthread> threads;
    threads.reserve(w);
    for (std::size_t i = 0; i < w; ++i) {
      threads.emplace_back([&, i] { call_one(i); });
    }
  } else {
    for (std::size_t i = 0; i < w; ++i) call_one(i);
  }

  for (auto& e : fatal) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<core::Prediction> predictions;
  predictions.reserve(w);
  for (auto& slot : slots) {
    if (slot) predictions.push_back(std::move(*slot));
  }
  return predictions;
}

core::DraftOutcome apply_criterion(const RunOptions& options,
                                   const std::vector<core::Prediction>& preds) {
  try {
    switch (options.policy.kind) {
      case core::PolicyKind::SimpleMajority:
        return agreement::decide_simple_majority(preds);
      case core::PolicyKind::ConfidenceMajority:
        return agreement::decide_confidence_majority(preds, options.policy);
      case core::PolicyKind::Unanimous:
        return agreement::decide_unanimous(preds);
    }
  } catch (const Error& e) {
    // A multi-winner tie leaves the draft undefined; the judge resolves it.
    if (e.code() == Errc::ambiguous_majority) {
      return core::DraftOutcome::undecided(options.policy.kind);
    }
    throw;
  }
  fail(Errc::invalid_policy, "unhandled policy kind");
}

}  // namespace

void RunOptions::check() const {
  if (workers.size() < 2) {
    fail(Errc::too_few_workers, "a cascade needs at least 2 workers, got " +
                                    std::to_string(workers.size()));
  }
  if (judges.empty() || judges.size() > 2) {
    fail(Errc::invalid_argument, "a cascade takes 1 or 2 judges, got " +
                                     std::to_string(judges.size()));
  }
  if (parallelism < 1) {
    fail(Errc::invalid_argument, "parallelism must be at least 1");
  }
  policy.check();
}

trace::TraceHeader make_header(const RunOptions& options) {
  trace::TraceHeader header;
  header.v = 1;
  header.config_digest = options.config_digest;
  header.label_space = options.space.labels();
  for (const auto& w : options.workers) header.workers.push_back(w->id().name);
  for (const auto& j : options.judges) header.judges.push_back(j->id().name);
  return header;
}

trace::SampleTrace run_sample(const RunOptions& options,
                              const trace::Sample& sample) {
  trace::SampleTrace trace;
  trace.id = sample.id;
  trace.input_sha256 = sha256_hex(sample.text);

  trace.workers = fan_out_workers(options, sample);

  for (const auto& p : trace.workers) {
    trace.timings.worker_us.push_back(p.latency);
    trace.timings.critical_path =
        std::max(trace.timings.critical_path, p.latency);
  }

  // Fewer than 2 surviving predictions cannot support any consensus rule:
  // skip the criterion and escalate unconditionally.
  if (trace.workers.size() < 2) {
    trace.draft = core::DraftOutcome::undecided(options.policy.kind);
  } else {
    trace.draft = apply_criterion(options, trace.workers);
  }
  trace.escalated = !trace.draft.decided.has_value();

  if (trace.escalated) {
    const auto& judge = options.judges.front();
    const auto ctx = make_context(
        options, sample,
        kJudgeSaltBase + static_cast<std::uint64_t>(judge->id().index));
    core::Prediction verdict = judge->classify(ctx);
    trace.timings.judge_us = verdict.latency;
    trace.final = core::FinalLabel{verdict.label,
                                   core::FinalSource::JudgeEscalation};
    trace.judges.emplace(judge->id().name, std::move(verdict));
  } else {
    trace.final = core::FinalLabel{*trace.draft.decided,
                                   core::FinalSource::WorkerConsensus};
  }

  if (options.audit_judge && options.judges.size() == 2) {
    const auto& audit = options.judges[1];
    const auto ctx = make_context(
        options, sample,
        kJudgeSaltBase + static_cast<std::uint64_t>(audit->id().index));
    trace.judges.emplace(audit->id().name, audit->classify(ctx));
  }
  return trace;
}

RunOutcome run_dataset(const RunOptions& options,
                       const std::vector<trace::Sample>& samples,
                       trace::TraceWriter* writer) {
  options.check();
  if (samples.empty()) fail(Errc::dataset_empty, "dataset has no samples");

  const std::size_t n = samples.size();
  const std::size_t width = std::min<std::size_t>(
      static_cast<std::size_t>(options.parallelism), n);

  RunOutcome outcome;
  outcome.header = make_header(options);
  outcome.traces.resize(n);

  std::vector<metrics::Accumulator> partials(
      width, metrics::Accumulator(outcome.header));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex sink_mutex;
  std::vector<bool> done(n, false);
  std::size_t next_write = 0;

  auto work = [&](std::size_t thread_index) {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        trace::SampleTrace trace = run_sample(options, samples[i]);
        partials[thread_index].add(trace);
        outcome.traces[i] = std::move(trace);
      } catch (...) {
        std::lock_guard lock(sink_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
        return;
      }
      std::lock_guard lock(sink_mutex);
      done[i] = true;
      while (next_write < n && done[next_write]) {
        if (writer) writer->append(outcome.traces[next_write]);
        ++next_write;
      }
    }
  };

  if (width <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(width);
    for (std::size_t t = 0; t < width; ++t) {
      threads.emplace_back([&, t] { work(t); });
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  metrics::Accumulator total = std::move(partials.front());
  for (std::size_t t = 1; t < partials.size(); ++t) total.merge(partials[t]);
  outcome.report = total.report();
  outcome.failed_worker_calls =
      outcome.report.at("counts").at("failed_worker_calls")
          .get<std::size_t>();
  return outcome;
}

agreement::PairSelection calibrate_pairs(
    const RunOptions& options, const std::vector<trace::Sample>& samples) {
  if (options.workers.size() < 2) {
    fail(Errc::too_few_workers, "pair calibration needs at least 2 workers");
  }
  if (options.workers.size() <= options.space.size()) {
    fail(Errc::not_applicable,
         "pair selection applies only when workers outnumber labels (" +
             std::to_string(options.workers.size()) + " workers, " +
             std::to_string(options.space.size()) + " labels)");
  }
  if (samples.empty()) fail(Errc::dataset_empty, "empty calibration dataset");

  const std::size_t n = samples.size();
  const std::size_t w = options.workers.size();
  std::vector<std::vector<std::string>> columns(
      w, std::vector<std::string>(n));

  const std::size_t width = std::min<std::size_t>(
      std::max(options.parallelism, 1), n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto work = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        for (std::size_t k = 0; k < w; ++k) {
          const auto ctx = make_context(
              options, samples[i],
              static_cast<std::uint64_t>(options.workers[k]->id().index));
          columns[k][i] = options.workers[k]->classify(ctx).label;
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };

  if (width <= 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(width);
    for (std::size_t t = 0; t < width; ++t) threads.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<core::WorkerId> ids;
  ids.reserve(w);
  for (const auto& worker : options.workers) ids.push_back(worker->id());
  return agreement::select_best_pair(ids, columns, options.space);
}

}  // namespace cascade::pipeline
