#pragma once

// Chat-completions client backend: renders the prompt, POSTs to
// {base_url}/v1/chat/completions, extracts the label from the response text.
// Transport failures and 5xx responses are retried with exponential backoff;
// an unparseable answer earns one deterministic retry at temperature 0.

#include "cascade/backends.hpp"
#include "cascade/core.hpp"

#include <semaphore>
#include <string>

namespace cascade::backends {

struct RemoteConfig {
  std::string base_url;  // origin: scheme://host[:port]
  std::string model;
  int deadline_ms = 30000;     // per-request connect/read/write deadline
  int max_retries = 3;         // total attempts for transport/5xx failures
  int retry_backoff_ms = 250;  // first backoff, doubled per further attempt
  int max_in_flight = 4;       // concurrent requests against this endpoint
  PromptTemplate prompt;
  ExtractionRules extraction;

  void check() const;
};

class RemoteBackend : public Backend {
 public:
  RemoteBackend(core::WorkerId id, RemoteConfig config, core::LabelSpace space);

  bool concurrent_fanout() const override { return true; }

 protected:
  core::Prediction do_classify(const ClassifyContext& ctx) override;

 private:
  // One logical completion: retry loop, returns the assistant text.
  std::string complete(const std::string& input, double temperature);

  RemoteConfig config_;
  core::LabelSpace space_;
  std::counting_semaphore<> in_flight_;
};

}  // namespace cascade::backends
