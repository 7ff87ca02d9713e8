#include "cascade/config.hpp"

#include "cascade/util.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace cascade::config {

namespace {

namespace fs = std::filesystem;

// ===== ${VAR} substitution =====

std::string substitute_env_string(const std::string& s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t pos = s.find("${", i);
    if (pos == std::string::npos) {
      out.append(s, i, std::string::npos);
      break;
    }
    out.append(s, i, pos - i);
    const std::size_t end = s.find('}', pos + 2);
    if (end == std::string::npos) {
      fail(Errc::config_error, "unterminated ${ reference in '" + s + "'");
    }
    const std::string var = s.substr(pos + 2, end - pos - 2);
    const char* value = std::getenv(var.c_str());
    if (!value) {
      fail(Errc::config_error, "environment variable '" + var + "' is not set");
    }
    out += value;
    i = end + 1;
  }
  return out;
}

void substitute_env(nlohmann::json& j) {
  if (j.is_string()) {
    j = substitute_env_string(j.get<std::string>());
  } else if (j.is_object() || j.is_array()) {
    for (auto& child : j) substitute_env(child);
  }
}

// ===== --set overrides =====

void apply_override(nlohmann::json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(Errc::config_error, "--set takes key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value_text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(value_text);
  } catch (const nlohmann::json::exception&) {
    value = value_text;  // bare strings need no quoting
  }

  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    tokens.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  nlohmann::json* node = &root;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::string& token = tokens[t];
    if (token.empty()) {
      fail(Errc::config_error, "empty path segment in '" + path + "'");
    }
    const bool last = t + 1 == tokens.size();
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(token);
      } catch (const std::exception&) {
        fail(Errc::config_error,
             "'" + token + "' is not an array index in '" + path + "'");
      }
      if (index >= node->size()) {
        fail(Errc::config_error,
             "index " + token + " out of range in '" + path + "'");
      }
      node = &(*node)[index];
      if (last) {
        *node = value;
        return;
      }
      continue;
    }
    if (!node->is_object()) {
      fail(Errc::config_error,
           "'" + path + "' descends into a non-container value");
    }
    if (last) {
      (*node)[token] = value;
      return;
    }
    node = &(*node)[token];
  }
}

// ===== strict schema reader =====

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string ctx)
      : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) {
      fail(Errc::config_error, ctx_ + " must be a JSON object");
    }
  }

  const nlohmann::json* opt(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const nlohmann::json& req(const std::string& key) {
    const auto* p = opt(key);
    if (!p) fail(Errc::config_error, ctx_ + " requires key '" + key + "'");
    return *p;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.contains(key)) {
        fail(Errc::config_error, "unknown key '" + key + "' in " + ctx_);
      }
    }
  }

  const std::string& ctx() const { return ctx_; }

 private:
  const nlohmann::json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

template <typename T>
T as(const nlohmann::json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(Errc::config_error, what + " has the wrong type");
  }
}

std::pair<double, double> as_pair(const nlohmann::json& j,
                                  const std::string& what) {
  const auto v = as<std::vector<double>>(j, what);
  if (v.size() != 2) {
    fail(Errc::config_error, what + " must be a 2-element array");
  }
  return {v[0], v[1]};
}

fs::path resolve(const fs::path& base_dir, const std::string& raw) {
  fs::path p(raw);
  return p.is_absolute() ? p : base_dir / p;
}

// ===== sections =====

BackendEntry parse_backend(const nlohmann::json& j, const std::string& ctx,
                           const core::LabelSpace& space,
                           const fs::path& base_dir, nlohmann::json& canon) {
  Reader r(j, ctx);
  BackendEntry entry;
  entry.name = as<std::string>(r.req("name"), ctx + ".name");
  if (entry.name.empty()) fail(Errc::config_error, ctx + ".name is empty");
  const auto kind = as<std::string>(r.req("kind"), ctx + ".kind");
  canon["name"] = entry.name;
  canon["kind"] = kind;

  if (kind == "fixture") {
    entry.kind = BackendKind::Fixture;
    const auto raw_path = as<std::string>(r.req("path"), ctx + ".path");
    entry.fixture_path = resolve(base_dir, raw_path);
    canon["path"] = raw_path;
  } else if (kind == "synthetic") {
    entry.kind = BackendKind::Synthetic;
    const auto* accuracy = r.opt("accuracy");
    const auto* confusion = r.opt("confusion");
    if ((accuracy == nullptr) == (confusion == nullptr)) {
      fail(Errc::config_error,
           ctx + " takes exactly one of 'accuracy' and 'confusion'");
    }
    if (accuracy) {
      entry.synthetic.confusion = backends::uniform_confusion(
          space.size(), as<double>(*accuracy, ctx + ".accuracy"));
    } else {
      entry.synthetic.confusion = as<std::vector<std::vector<double>>>(
          *confusion, ctx + ".confusion");
    }
    if (const auto* rho = r.opt("rho")) {
      entry.synthetic.rho = as<double>(*rho, ctx + ".rho");
    }
    if (const auto* lat = r.opt("latency_lognormal_ms")) {
      std::tie(entry.synthetic.latency_location, entry.synthetic.latency_scale) =
          as_pair(*lat, ctx + ".latency_lognormal_ms");
    }
    if (const auto* cb = r.opt("confidence_correct_beta")) {
      std::tie(entry.synthetic.confidence_correct_alpha,
               entry.synthetic.confidence_correct_beta) =
          as_pair(*cb, ctx + ".confidence_correct_beta");
    }
    if (const auto* wb = r.opt("confidence_wrong_beta")) {
      std::tie(entry.synthetic.confidence_wrong_alpha,
               entry.synthetic.confidence_wrong_beta) =
          as_pair(*wb, ctx + ".confidence_wrong_beta");
    }
    entry.synthetic.check(space.size());
    canon["confusion"] = entry.synthetic.confusion;
    canon["rho"] = entry.synthetic.rho;
    canon["latency_lognormal_ms"] = {entry.synthetic.latency_location,
                                     entry.synthetic.latency_scale};
    canon["confidence_correct_beta"] = {entry.synthetic.confidence_correct_alpha,
                                        entry.synthetic.confidence_correct_beta};
    canon["confidence_wrong_beta"] = {entry.synthetic.confidence_wrong_alpha,
                                      entry.synthetic.confidence_wrong_beta};
  } else if (kind == "remote") {
    entry.kind = BackendKind::Remote;
    auto& remote = entry.remote;
    remote.base_url = as<std::string>(r.req("base_url"), ctx + ".base_url");
    remote.model = as<std::string>(r.req("model"), ctx + ".model");
    if (const auto* v = r.opt("deadline_ms")) {
      remote.deadline_ms = as<int>(*v, ctx + ".deadline_ms");
    }
    if (const auto* v = r.opt("max_retries")) {
      remote.max_retries = as<int>(*v, ctx + ".max_retries");
    }
    if (const auto* v = r.opt("retry_backoff_ms")) {
      remote.retry_backoff_ms = as<int>(*v, ctx + ".retry_backoff_ms");
    }
    if (const auto* v = r.opt("max_in_flight")) {
      remote.max_in_flight = as<int>(*v, ctx + ".max_in_flight");
    }

    Reader p(r.req("prompt"), ctx + ".prompt");
    if (const auto* v = p.opt("system")) {
      remote.prompt.system_text = as<std::string>(*v, ctx + ".prompt.system");
    }
    if (const auto* v = p.opt("few_shot")) {
      for (const auto& shot : *v) {
        const auto pair = as<std::vector<std::string>>(
            shot, ctx + ".prompt.few_shot entry");
        if (pair.size() != 2) {
          fail(Errc::config_error,
               ctx + ".prompt.few_shot entries are [input, label] pairs");
        }
        remote.prompt.few_shot.emplace_back(pair[0], pair[1]);
      }
    }
    remote.prompt.user_template =
        as<std::string>(p.req("user_template"), ctx + ".prompt.user_template");
    if (const auto* v = p.opt("max_new_tokens")) {
      remote.prompt.max_new_tokens =
          as<int>(*v, ctx + ".prompt.max_new_tokens");
    }
    if (const auto* v = p.opt("temperature")) {
      remote.prompt.temperature = as<double>(*v, ctx + ".prompt.temperature");
    }
    p.finish();

    if (const auto* e = r.opt("extraction")) {
      Reader x(*e, ctx + ".extraction");
      if (const auto* v = x.opt("strategy")) {
        remote.extraction.strategy = backends::extraction_strategy_from_name(
            as<std::string>(*v, ctx + ".extraction.strategy"));
      }
      if (const auto* v = x.opt("pattern")) {
        remote.extraction.custom_pattern =
            as<std::string>(*v, ctx + ".extraction.pattern");
      }
      if (const auto* v = x.opt("case_insensitive")) {
        remote.extraction.case_insensitive =
            as<bool>(*v, ctx + ".extraction.case_insensitive");
      }
      x.finish();
    }
    remote.check();

    canon["base_url"] = remote.base_url;
    canon["model"] = remote.model;
    canon["deadline_ms"] = remote.deadline_ms;
    canon["max_retries"] = remote.max_retries;
    canon["retry_backoff_ms"] = remote.retry_backoff_ms;
    canon["max_in_flight"] = remote.max_in_flight;
    nlohmann::json prompt;
    prompt["system"] = remote.prompt.system_text;
    prompt["few_shot"] = nlohmann::json::array();
    for (const auto& [in, label] : remote.prompt.few_shot) {
      prompt["few_shot"].push_back({in, label});
    }
    prompt["user_template"] = remote.prompt.user_template;
    prompt["max_new_tokens"] = remote.prompt.max_new_tokens;
    prompt["temperature"] = remote.prompt.temperature;
    canon["prompt"] = std::move(prompt);
    nlohmann::json extraction;
    extraction["strategy"] =
        backends::extraction_strategy_name(remote.extraction.strategy);
    if (remote.extraction.custom_pattern) {
      extraction["pattern"] = *remote.extraction.custom_pattern;
    }
    extraction["case_insensitive"] = remote.extraction.case_insensitive;
    canon["extraction"] = std::move(extraction);
  } else {
    fail(Errc::config_error, ctx + ".kind '" + kind +
                                 "' is not fixture, synthetic, or remote");
  }
  r.finish();
  return entry;
}

core::AgreementPolicy parse_policy(const nlohmann::json* j,
                                   nlohmann::json& canon) {
  core::AgreementPolicy policy;
  if (j) {
    Reader r(*j, "policy");
    if (const auto* v = r.opt("kind")) {
      policy.kind =
          core::policy_kind_from_name(as<std::string>(*v, "policy.kind"));
    }
    if (const auto* v = r.opt("tau")) {
      policy.tau = as<double>(*v, "policy.tau");
    }
    if (const auto* v = r.opt("delta")) {
      policy.delta = as<double>(*v, "policy.delta");
    }
    if (const auto* v = r.opt("variance_direction")) {
      policy.variance_direction = core::variance_direction_from_name(
          as<std::string>(*v, "policy.variance_direction"));
    }
    r.finish();
  }
  policy.check();
  canon["kind"] = core::policy_kind_name(policy.kind);
  canon["variance_direction"] =
      core::variance_direction_name(policy.variance_direction);
  if (policy.tau) canon["tau"] = *policy.tau;
  if (policy.delta) canon["delta"] = *policy.delta;
  return policy;
}

SimulateConfig parse_simulate(const nlohmann::json& j, nlohmann::json& canon) {
  Reader r(j, "simulate");
  SimulateConfig sim;
  sim.n_samples = as<std::size_t>(r.req("n_samples"), "simulate.n_samples");
  if (sim.n_samples < 1) {
    fail(Errc::config_error, "simulate.n_samples must be at least 1");
  }
  canon["n_samples"] = sim.n_samples;
  if (const auto* s = r.opt("sweep")) {
    Reader sr(*s, "simulate.sweep");
    SweepConfig sweep;
    nlohmann::json canon_sweep;
    auto read_axis = [&](const char* key, std::vector<double>& into) {
      if (const auto* v = sr.opt(key)) {
        into = as<std::vector<double>>(*v,
                                       std::string("simulate.sweep.") + key);
        if (into.empty()) {
          fail(Errc::config_error,
               std::string("simulate.sweep.") + key + " is empty");
        }
        canon_sweep[key] = into;
      }
    };
    read_axis("rho", sweep.rho);
    read_axis("accuracy", sweep.accuracy);
    read_axis("tau", sweep.tau);
    read_axis("delta", sweep.delta);
    sr.finish();
    if (sweep.rho.empty() && sweep.accuracy.empty() && sweep.tau.empty() &&
        sweep.delta.empty()) {
      fail(Errc::config_error, "simulate.sweep lists no axes");
    }
    sim.sweep = std::move(sweep);
    canon["sweep"] = std::move(canon_sweep);
  }
  r.finish();
  return sim;
}

}  // namespace

void apply_overrides(nlohmann::json& raw,
                     const std::vector<std::string>& overrides) {
  for (const auto& assignment : overrides) apply_override(raw, assignment);
}

RunSpec load_config_json(nlohmann::json raw,
                         const std::filesystem::path& base_dir) {
  RunSpec spec;
  spec.raw = raw;  // pre-substitution, so sweep variants re-substitute
  spec.base_dir = base_dir;
  substitute_env(raw);

  Reader r(raw, "config");
  nlohmann::json canon;

  const auto labels =
      as<std::vector<std::string>>(r.req("label_space"), "label_space");
  spec.space = core::LabelSpace::validate(labels);
  canon["label_space"] = spec.space.labels();

  const auto& workers = r.req("workers");
  if (!workers.is_array() || workers.size() < 2) {
    fail(Errc::config_error, "workers must list at least 2 backends");
  }
  canon["workers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < workers.size(); ++i) {
    nlohmann::json entry_canon;
    spec.workers.push_back(parse_backend(workers[i],
                                         "workers[" + std::to_string(i) + "]",
                                         spec.space, base_dir, entry_canon));
    canon["workers"].push_back(std::move(entry_canon));
  }

  const auto& judges = r.req("judges");
  if (!judges.is_array() || judges.empty() || judges.size() > 2) {
    fail(Errc::config_error, "judges must list 1 or 2 backends");
  }
  canon["judges"] = nlohmann::json::array();
  for (std::size_t i = 0; i < judges.size(); ++i) {
    nlohmann::json entry_canon;
    spec.judges.push_back(parse_backend(judges[i],
                                        "judges[" + std::to_string(i) + "]",
                                        spec.space, base_dir, entry_canon));
    canon["judges"].push_back(std::move(entry_canon));
  }

  std::set<std::string> names;
  for (const auto& e : spec.workers) {
    if (!names.insert(e.name).second) {
      fail(Errc::config_error, "backend name '" + e.name + "' is not unique");
    }
  }
  for (const auto& e : spec.judges) {
    if (!names.insert(e.name).second) {
      fail(Errc::config_error, "backend name '" + e.name + "' is not unique");
    }
  }

  nlohmann::json policy_canon;
  spec.policy = parse_policy(r.opt("policy"), policy_canon);
  canon["policy"] = std::move(policy_canon);

  if (const auto* v = r.opt("pair_restriction")) {
    spec.pair_restriction = as<bool>(*v, "pair_restriction");
  }
  canon["pair_restriction"] = spec.pair_restriction;

  if (const auto* v = r.opt("dataset")) {
    const auto raw_path = as<std::string>(*v, "dataset");
    spec.dataset = resolve(base_dir, raw_path);
    canon["dataset"] = raw_path;
  }

  // Parallelism is an execution knob with no effect on results, so it stays
  // out of the canonical digest document.
  if (const auto* v = r.opt("parallelism")) {
    spec.parallelism = as<int>(*v, "parallelism");
    if (spec.parallelism < 1) {
      fail(Errc::config_error, "parallelism must be at least 1");
    }
  }

  if (const auto* v = r.opt("seed")) {
    spec.seed = as<std::uint64_t>(*v, "seed");
  }
  canon["seed"] = spec.seed;

  if (const auto* v = r.opt("audit_judge")) {
    spec.audit_judge = as<bool>(*v, "audit_judge");
  }
  canon["audit_judge"] = spec.audit_judge;

  if (const auto* v = r.opt("simulate")) {
    nlohmann::json sim_canon;
    spec.simulate = parse_simulate(*v, sim_canon);
    canon["simulate"] = std::move(sim_canon);
  }

  r.finish();
  spec.digest = sha256_hex(canon.dump());
  return spec;
}

RunSpec load_config(const std::filesystem::path& path,
                    const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) {
    fail(Errc::config_error, "cannot open config '" + path.string() + "'");
  }
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_error,
         "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  apply_overrides(raw, overrides);
  return load_config_json(std::move(raw), path.parent_path());
}

std::shared_ptr<backends::Backend> make_backend(const BackendEntry& entry,
                                                int index,
                                                const core::LabelSpace& space) {
  core::WorkerId id{index, entry.name};
  switch (entry.kind) {
    case BackendKind::Fixture:
      return std::make_shared<backends::FixtureBackend>(
          std::move(id), entry.fixture_path, space);
    case BackendKind::Synthetic:
      return std::make_shared<backends::SyntheticBackend>(
          std::move(id), entry.synthetic, space);
    case BackendKind::Remote:
      return std::make_shared<backends::RemoteBackend>(std::move(id),
                                                       entry.remote, space);
  }
  fail(Errc::config_error, "unhandled backend kind");
}

pipeline::RunOptions make_run_options(
    const RunSpec& spec, const std::vector<std::size_t>& active_workers) {
  pipeline::RunOptions options;
  options.space = spec.space;
  std::vector<std::size_t> indices = active_workers;
  if (indices.empty()) {
    for (std::size_t i = 0; i < spec.workers.size(); ++i) indices.push_back(i);
  }
  for (const std::size_t i : indices) {
    if (i >= spec.workers.size()) {
      fail(Errc::config_error, "active worker index out of range");
    }
    options.workers.push_back(
        make_backend(spec.workers[i], static_cast<int>(i), spec.space));
  }
  for (std::size_t j = 0; j < spec.judges.size(); ++j) {
    options.judges.push_back(make_backend(
        spec.judges[j], static_cast<int>(spec.workers.size() + j),
        spec.space));
  }
  options.policy = spec.policy;
  options.audit_judge = spec.audit_judge;
  options.parallelism = spec.parallelism;
  options.seed = spec.seed;
  options.config_digest = spec.digest;
  return options;
}

const std::vector<std::pair<std::string, std::string>>& config_key_docs() {
  static const std::vector<std::pair<std::string, std::string>> docs = {
      {"label_space", "ordered list of at least 2 distinct class labels"},
      {"workers", "array of 2 or more worker backend objects"},
      {"judges", "array of 1 or 2 judge backends; the first handles "
                 "escalations"},
      {"workers[].name", "unique display name for the backend"},
      {"workers[].kind", "one of fixture, synthetic, remote"},
      {"workers[].path", "fixture only: JSONL file of recorded predictions, "
                         "relative to the config"},
      {"workers[].accuracy", "synthetic only: diagonal of a uniform "
                             "off-diagonal confusion matrix (exclusive with "
                             "confusion)"},
      {"workers[].confusion", "synthetic only: explicit LxL row-stochastic "
                              "matrix (exclusive with accuracy)"},
      {"workers[].rho", "synthetic only: error-correlation coefficient in "
                        "[0,1], default 0"},
      {"workers[].latency_lognormal_ms", "synthetic only: [location, scale] "
                                         "of the log-normal latency in ms"},
      {"workers[].confidence_correct_beta", "synthetic only: [alpha, beta] of "
                                            "the confidence Beta draw when "
                                            "correct"},
      {"workers[].confidence_wrong_beta", "synthetic only: [alpha, beta] of "
                                          "the confidence Beta draw when "
                                          "wrong"},
      {"workers[].base_url", "remote only: endpoint origin, e.g. "
                             "http://host:8080"},
      {"workers[].model", "remote only: model name sent in the request body"},
      {"workers[].deadline_ms", "remote only: per-request connect/read/write "
                                "deadline, default 30000"},
      {"workers[].max_retries", "remote only: total attempts for "
                                "transport/5xx failures, default 3"},
      {"workers[].retry_backoff_ms", "remote only: first backoff, doubled per "
                                     "further attempt, default 250"},
      {"workers[].max_in_flight", "remote only: concurrent request cap per "
                                  "endpoint, default 4"},
      {"workers[].prompt.system", "remote only: system message text"},
      {"workers[].prompt.few_shot", "remote only: list of [input, label] "
                                    "example pairs"},
      {"workers[].prompt.user_template", "remote only: user message with "
                                         "exactly one {input} placeholder"},
      {"workers[].prompt.max_new_tokens", "remote only: completion token "
                                          "budget, default 16"},
      {"workers[].prompt.temperature", "remote only: sampling temperature, "
                                       "default 0"},
      {"workers[].extraction.strategy", "remote only: last_occurrence "
                                        "(default), first_occurrence, or "
                                        "answer_tag_regex"},
      {"workers[].extraction.pattern", "remote only: regex for "
                                       "answer_tag_regex; capture group 1 is "
                                       "the label"},
      {"workers[].extraction.case_insensitive", "remote only: match labels "
                                                "ignoring case, default true"},
      {"policy.kind", "agreement rule: simple_majority (default), "
                      "confidence_majority, or unanimous"},
      {"policy.tau", "confidence_majority only: minimum supporter confidence"},
      {"policy.delta", "confidence_majority only: variance threshold"},
      {"policy.variance_direction", "confidence_majority only: at_least "
                                    "(default) or at_most"},
      {"pair_restriction", "run only the best worker pair, selected by a "
                           "calibration pass, default false"},
      {"dataset", "JSONL dataset path ({\"id\",\"text\",\"gold\"}), relative "
                  "to the config"},
      {"parallelism", "bounded cross-sample worker pool width, default 1"},
      {"seed", "base RNG seed; per-sample streams derive from it, default 0"},
      {"audit_judge", "run the second judge on every sample for bias "
                      "reporting, default false"},
      {"simulate.n_samples", "number of synthetic samples to generate"},
      {"simulate.sweep.rho", "grid values for the synthetic error "
                             "correlation"},
      {"simulate.sweep.accuracy", "grid values for the synthetic accuracy "
                                  "(workers must use the accuracy form)"},
      {"simulate.sweep.tau", "grid values for the confidence threshold"},
      {"simulate.sweep.delta", "grid values for the variance threshold"},
  };
  return docs;
}

}  // namespace cascade::config
