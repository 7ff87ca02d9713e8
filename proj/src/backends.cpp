#include "cascade/backends.hpp"

#include "cascade/trace.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

namespace cascade::backends {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::size_t count_occurrences(const std::string& text,
                              const std::string& needle) {
  std::size_t count = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string substitute_input(const std::string& tmpl,
                             const std::string& input) {
  std::string out = tmpl;
  const std::size_t pos = out.find(kInputPlaceholder);
  out.replace(pos, std::strlen(kInputPlaceholder), input);
  return out;
}

}  // namespace

core::Prediction Backend::classify(const ClassifyContext& ctx) {
  if (ctx.text.empty()) {
    fail(Errc::invalid_argument, "empty input text for backend '" +
                                     id_.name + "'");
  }
  calls_.fetch_add(1, std::memory_order_relaxed);
  return do_classify(ctx);
}

// ===== Synthetic workers =====

void SyntheticWorkerSpec::check(std::size_t label_count) const {
  if (confusion.size() != label_count) {
    fail(Errc::invalid_distribution,
         "confusion matrix has " + std::to_string(confusion.size()) +
             " rows for " + std::to_string(label_count) + " labels");
  }
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    const auto& row = confusion[i];
    if (row.size() != label_count) {
      fail(Errc::invalid_distribution,
           "confusion row " + std::to_string(i) + " has " +
               std::to_string(row.size()) + " columns");
    }
    double sum = 0.0;
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) {
        fail(Errc::invalid_distribution,
             "confusion row " + std::to_string(i) + " has a negative entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      fail(Errc::invalid_distribution,
           "confusion row " + std::to_string(i) + " sums to " +
               std::to_string(sum));
    }
  }
  if (!(rho >= 0.0 && rho <= 1.0)) {
    fail(Errc::invalid_argument,
         "rho " + std::to_string(rho) + " outside [0, 1]");
  }
  if (!std::isfinite(latency_location) || !std::isfinite(latency_scale) ||
      latency_scale < 0.0) {
    fail(Errc::invalid_argument, "invalid log-normal latency parameters");
  }
  for (double p : {confidence_correct_alpha, confidence_correct_beta,
                   confidence_wrong_alpha, confidence_wrong_beta}) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      fail(Errc::invalid_argument, "Beta parameters must be positive");
    }
  }
}

std::vector<std::vector<double>> uniform_confusion(std::size_t label_count,
                                                   double accuracy) {
  if (label_count < 2) {
    fail(Errc::too_few_labels, "confusion matrix needs at least 2 labels");
  }
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    fail(Errc::invalid_argument,
         "accuracy " + std::to_string(accuracy) + " outside [0, 1]");
  }
  const double off = (1.0 - accuracy) / static_cast<double>(label_count - 1);
  std::vector<std::vector<double>> m(label_count,
                                     std::vector<double>(label_count, off));
  for (std::size_t i = 0; i < label_count; ++i) m[i][i] = accuracy;
  return m;
}

core::Prediction sample_synthetic(const SyntheticWorkerSpec& spec,
                                  const core::LabelSpace& space,
                                  core::WorkerId worker,
                                  std::size_t gold_index,
                                  double shared_uniform, rng::Rng& rng) {
  const auto& row = spec.confusion[gold_index];
  const double diagonal = row[gold_index];

  const bool use_shared = rng.uniform() < spec.rho;
  const double error_draw = use_shared ? shared_uniform : rng.uniform();
  const bool errs = error_draw < 1.0 - diagonal;

  std::size_t label_index = gold_index;
  if (errs) {
    std::vector<double> off_diagonal(row);
    off_diagonal[gold_index] = 0.0;
    label_index = rng.categorical(off_diagonal);
  }

  const bool correct = label_index == gold_index;
  const double confidence =
      correct ? rng.beta(spec.confidence_correct_alpha,
                         spec.confidence_correct_beta)
              : rng.beta(spec.confidence_wrong_alpha,
                         spec.confidence_wrong_beta);
  const double latency_ms =
      rng.lognormal(spec.latency_location, spec.latency_scale);

  const std::string& label = space.labels()[label_index];
  return core::Prediction::make(space, std::move(worker), label, confidence,
                                ms_to_micros(latency_ms), label);
}

SyntheticBackend::SyntheticBackend(core::WorkerId id, SyntheticWorkerSpec spec,
                                   core::LabelSpace space)
    : Backend(std::move(id)), spec_(std::move(spec)), space_(std::move(space)) {
  spec_.check(space_.size());
}

core::Prediction SyntheticBackend::do_classify(const ClassifyContext& ctx) {
  if (!ctx.gold) {
    fail(Errc::missing_ground_truth,
         "synthetic backend '" + id().name + "' needs gold for sample '" +
             ctx.sample_id + "'");
  }
  const auto gold_index = space_.index_of(core::canonical_label(*ctx.gold));
  if (!gold_index) {
    fail(Errc::label_not_in_space,
         "gold '" + *ctx.gold + "' not in label space");
  }
  rng::Rng rng(ctx.rng_seed);
  return sample_synthetic(spec_, space_, id(), *gold_index,
                          ctx.shared_uniform, rng);
}

// ===== Fixture replay =====

FixtureBackend::FixtureBackend(core::WorkerId id,
                               const std::filesystem::path& fixture_path,
                               core::LabelSpace space)
    : Backend(std::move(id)), space_(std::move(space)), path_(fixture_path) {
  std::ifstream in(fixture_path);
  if (!in) {
    fail(Errc::io_error, "cannot open fixture '" + fixture_path.string() + "'");
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      if (j.at("worker").get<std::string>() != this->id().name) continue;
      const std::string sample_id = j.at("id").get<std::string>();
      std::optional<double> confidence;
      if (!j.at("confidence").is_null()) {
        confidence = j.at("confidence").get<double>();
      }
      auto prediction = core::Prediction::make(
          space_, this->id(), j.at("label").get<std::string>(), confidence,
          ms_to_micros(j.at("latency_ms").get<double>()),
          j.at("raw").get<std::string>());
      if (!records_.emplace(sample_id, std::move(prediction)).second) {
        fail(Errc::io_error, "duplicate fixture record for sample '" +
                                 sample_id + "', worker '" +
                                 this->id().name + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error, "'" + fixture_path.string() + "' line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
}

core::Prediction FixtureBackend::do_classify(const ClassifyContext& ctx) {
  const auto it = records_.find(ctx.sample_id);
  if (it == records_.end()) {
    fail(Errc::fixture_miss, "no fixture record for sample '" + ctx.sample_id +
                                 "', worker '" + id().name + "' in '" +
                                 path_.string() + "'");
  }
  return it->second;
}

// ===== Prompting =====

void PromptTemplate::check() const {
  if (count_occurrences(user_template, kInputPlaceholder) != 1) {
    fail(Errc::placeholder_missing,
         "user_template must contain exactly one " +
             std::string(kInputPlaceholder));
  }
  if (max_new_tokens < 1) {
    fail(Errc::invalid_argument, "max_new_tokens must be at least 1");
  }
  if (!std::isfinite(temperature) || temperature < 0.0) {
    fail(Errc::invalid_argument, "temperature must be non-negative");
  }
}

std::vector<ChatMessage> render_prompt(const PromptTemplate& tmpl,
                                       const std::string& input) {
  tmpl.check();
  std::vector<ChatMessage> messages;
  messages.reserve(2 + 2 * tmpl.few_shot.size());
  messages.push_back({"system", tmpl.system_text});
  for (const auto& [shot_input, shot_label] : tmpl.few_shot) {
    messages.push_back({"user", substitute_input(tmpl.user_template,
                                                 shot_input)});
    messages.push_back({"assistant", shot_label});
  }
  messages.push_back({"user", substitute_input(tmpl.user_template, input)});
  return messages;
}

// ===== Label extraction =====

ExtractionStrategy extraction_strategy_from_name(std::string_view name) {
  if (name == "last_occurrence") return ExtractionStrategy::LastOccurrence;
  if (name == "first_occurrence") return ExtractionStrategy::FirstOccurrence;
  if (name == "answer_tag_regex") return ExtractionStrategy::AnswerTagRegex;
  fail(Errc::invalid_argument,
       "unknown extraction strategy '" + std::string(name) + "'");
}

const char* extraction_strategy_name(ExtractionStrategy strategy) {
  switch (strategy) {
    case ExtractionStrategy::LastOccurrence: return "last_occurrence";
    case ExtractionStrategy::FirstOccurrence: return "first_occurrence";
    case ExtractionStrategy::AnswerTagRegex: return "answer_tag_regex";
  }
  return "unknown";
}

void ExtractionRules::check() const {
  const bool needs_pattern = strategy == ExtractionStrategy::AnswerTagRegex;
  if (needs_pattern != custom_pattern.has_value()) {
    fail(Errc::invalid_argument,
         "custom_pattern is required by answer_tag_regex and rejected "
         "otherwise");
  }
}

std::string parse_label(const std::string& raw, const core::LabelSpace& space,
                        const ExtractionRules& rules) {
  rules.check();

  if (rules.strategy == ExtractionStrategy::AnswerTagRegex) {
    auto flags = std::regex::ECMAScript;
    if (rules.case_insensitive) flags |= std::regex::icase;
    std::regex pattern;
    try {
      pattern = std::regex(*rules.custom_pattern, flags);
    } catch (const std::regex_error& e) {
      fail(Errc::invalid_argument,
           "bad extraction pattern '" + *rules.custom_pattern + "': " +
               e.what());
    }
    std::optional<std::string> found;
    for (auto it = std::sregex_iterator(raw.begin(), raw.end(), pattern);
         it != std::sregex_iterator(); ++it) {
      const std::string candidate =
          it->size() > 1 && (*it)[1].matched ? (*it)[1].str() : it->str();
      const std::string canonical = core::canonical_label(candidate);
      if (space.contains(canonical)) found = canonical;  // last match wins
    }
    if (!found) {
      fail(Errc::no_label_found, "no label matched the extraction pattern");
    }
    return *found;
  }

  // Whole-word occurrence scan. Labels are canonical (lowercase), so the
  // case-insensitive path lowercases the haystack once.
  const std::string haystack = rules.case_insensitive ? lowercase(raw) : raw;
  struct Occurrence {
    std::size_t pos;
    std::size_t len;
    const std::string* label;
  };
  std::optional<Occurrence> best;
  const bool want_last = rules.strategy == ExtractionStrategy::LastOccurrence;
  auto better = [&](const Occurrence& a, const Occurrence& b) {
    if (a.pos != b.pos) return want_last ? a.pos > b.pos : a.pos < b.pos;
    return a.len > b.len;  // same start: more specific label wins
  };
  for (const auto& label : space.labels()) {
    for (std::size_t pos = haystack.find(label); pos != std::string::npos;
         pos = haystack.find(label, pos + 1)) {
      const std::size_t end = pos + label.size();
      const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
      const bool right_ok =
          end >= haystack.size() || !is_word_char(haystack[end]);
      if (!left_ok || !right_ok) continue;
      const Occurrence candidate{pos, label.size(), &label};
      if (!best || better(candidate, *best)) best = candidate;
    }
  }
  if (!best) fail(Errc::no_label_found, "no label occurs in the output");
  return *best->label;
}

}  // namespace cascade::backends
