#pragma once

// Classifier backends behind one uniform contract: fixture replay, synthetic
// stochastic workers, and a remote chat-completions client (see
// remote_backend). Synthetic classification is a pure function of the
// per-call seed carried in ClassifyContext, so results do not depend on
// thread schedule or dataset order.

#include "cascade/core.hpp"
#include "cascade/rng.hpp"
#include "cascade/util.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cascade::backends {

// Per-call inputs. rng_seed is derived from (run seed, sample id, backend
// index); shared_uniform is the sample's correlated-noise draw, common to all
// workers of the sample.
struct ClassifyContext {
  std::string sample_id;
  std::string text;
  std::optional<std::string> gold;  // canonical; synthetic backends need it
  std::uint64_t rng_seed = 0;
  double shared_uniform = 0.0;
};

class Backend {
 public:
  explicit Backend(core::WorkerId id) : id_(std::move(id)) {}
  virtual ~Backend() = default;

  const core::WorkerId& id() const { return id_; }
  std::uint64_t calls() const { return calls_.load(); }

  // Uniform entry point: validates input, counts the invocation, delegates.
  core::Prediction classify(const ClassifyContext& ctx);

  // True when per-sample fan-out should run this backend on its own thread
  // (network-bound backends); cheap local backends run inline.
  virtual bool concurrent_fanout() const { return false; }

 protected:
  virtual core::Prediction do_classify(const ClassifyContext& ctx) = 0;

 private:
  core::WorkerId id_;
  std::atomic<std::uint64_t> calls_{0};
};

// ===== Synthetic workers =====

// A stochastic classifier with a known confusion matrix, tunable error
// correlation, Beta-distributed confidence, and log-normal latency.
struct SyntheticWorkerSpec {
  std::vector<std::vector<double>> confusion;  // L x L, row-stochastic
  double rho = 0.0;                            // error-correlation in [0,1]
  double latency_location = 0.0;               // log-normal params, in ms
  double latency_scale = 0.0;
  double confidence_correct_alpha = 8.0;       // Beta params by correctness
  double confidence_correct_beta = 2.0;
  double confidence_wrong_alpha = 2.0;
  double confidence_wrong_beta = 2.0;

  void check(std::size_t label_count) const;
};

// Diagonal `accuracy`, remainder spread uniformly off-diagonal.
std::vector<std::vector<double>> uniform_confusion(std::size_t label_count,
                                                   double accuracy);

// One synthetic draw. Consumption order from `rng` is fixed: (1) rho-coin,
// (2) error uniform (skipped when the rho-coin routes to shared_uniform),
// (3) wrong-label pick when erring, (4) confidence Beta, (5) latency
// log-normal. Workers holding the same shared_uniform err jointly when their
// rho-coins land shared.
core::Prediction sample_synthetic(const SyntheticWorkerSpec& spec,
                                  const core::LabelSpace& space,
                                  core::WorkerId worker,
                                  std::size_t gold_index,
                                  double shared_uniform, rng::Rng& rng);

class SyntheticBackend : public Backend {
 public:
  SyntheticBackend(core::WorkerId id, SyntheticWorkerSpec spec,
                   core::LabelSpace space);

  const SyntheticWorkerSpec& spec() const { return spec_; }

 protected:
  core::Prediction do_classify(const ClassifyContext& ctx) override;

 private:
  SyntheticWorkerSpec spec_;
  core::LabelSpace space_;
};

// ===== Fixture replay =====

// Replays recorded predictions from a JSONL file, keyed by sample id.
// Records: {"id", "worker", "label", "confidence", "latency_ms", "raw"}.
class FixtureBackend : public Backend {
 public:
  FixtureBackend(core::WorkerId id, const std::filesystem::path& fixture_path,
                 core::LabelSpace space);

 protected:
  core::Prediction do_classify(const ClassifyContext& ctx) override;

 private:
  core::LabelSpace space_;
  std::map<std::string, core::Prediction> records_;
  std::filesystem::path path_;
};

// ===== Prompting and label extraction =====

struct ChatMessage {
  std::string role;
  std::string content;
};

inline constexpr const char* kInputPlaceholder = "{input}";

struct PromptTemplate {
  std::string system_text;
  std::vector<std::pair<std::string, std::string>> few_shot;  // input, label
  std::string user_template;  // exactly one {input} placeholder
  int max_new_tokens = 16;
  double temperature = 0.0;

  void check() const;
};

// system + alternating user/assistant few-shot pairs + final user message.
// Substitution is single-pass: a placeholder inside the input stays literal.
std::vector<ChatMessage> render_prompt(const PromptTemplate& tmpl,
                                       const std::string& input);

enum class ExtractionStrategy { LastOccurrence, FirstOccurrence,
                                AnswerTagRegex };

ExtractionStrategy extraction_strategy_from_name(std::string_view name);
const char* extraction_strategy_name(ExtractionStrategy strategy);

struct ExtractionRules {
  ExtractionStrategy strategy = ExtractionStrategy::LastOccurrence;
  std::optional<std::string> custom_pattern;  // AnswerTagRegex only
  bool case_insensitive = true;

  void check() const;
};

// Finds label mentions in free-form model output. Occurrence strategies match
// labels as whole words; the regex strategy matches custom_pattern and reads
// capture group 1 (or the whole match), last valid match winning.
std::string parse_label(const std::string& raw, const core::LabelSpace& space,
                        const ExtractionRules& rules);

}  // namespace cascade::backends
