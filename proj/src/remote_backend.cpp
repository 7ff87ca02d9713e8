#include "cascade/remote_backend.hpp"

#include "cascade/util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <thread>

namespace cascade::backends {

namespace {

void apply_deadline(httplib::Client& client, int deadline_ms) {
  const time_t sec = deadline_ms / 1000;
  const time_t usec = static_cast<time_t>(deadline_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

// The semaphore's initial count must already be validated when its
// constructor runs, so the config check happens on this path.
std::ptrdiff_t validated_in_flight(const RemoteConfig& config) {
  config.check();
  return config.max_in_flight;
}

}  // namespace

void RemoteConfig::check() const {
  if (base_url.empty()) fail(Errc::invalid_argument, "base_url is empty");
  if (model.empty()) fail(Errc::invalid_argument, "model is empty");
  if (deadline_ms < 1) fail(Errc::invalid_argument, "deadline_ms must be >= 1");
  if (max_retries < 1) fail(Errc::invalid_argument, "max_retries must be >= 1");
  if (retry_backoff_ms < 0) {
    fail(Errc::invalid_argument, "retry_backoff_ms must be >= 0");
  }
  if (max_in_flight < 1) {
    fail(Errc::invalid_argument, "max_in_flight must be >= 1");
  }
  prompt.check();
  extraction.check();
}

RemoteBackend::RemoteBackend(core::WorkerId id, RemoteConfig config,
                             core::LabelSpace space)
    : Backend(std::move(id)),
      config_(std::move(config)),
      space_(std::move(space)),
      in_flight_(validated_in_flight(config_)) {}

std::string RemoteBackend::complete(const std::string& input,
                                    double temperature) {
  const auto messages = render_prompt(config_.prompt, input);
  nlohmann::json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  body["temperature"] = temperature;
  body["max_tokens"] = config_.prompt.max_new_tokens;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv("SPEC_CASCADE_API_KEY")) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string last_failure = "no attempt made";
  for (int attempt = 1; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          config_.retry_backoff_ms << (attempt - 2)));
    }
    httplib::Client client(config_.base_url);
    apply_deadline(client, config_.deadline_ms);
    auto result =
        client.Post("/v1/chat/completions", headers, payload,
                    "application/json");
    if (!result) {
      last_failure = httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 500) {
      last_failure = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status < 200 || result->status >= 300) {
      fail(Errc::http_status_error,
           "HTTP " + std::to_string(result->status) + " from " +
               config_.base_url);
    }
    try {
      const auto j = nlohmann::json::parse(result->body);
      return j.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_failure,
           std::string("malformed chat-completions response: ") + e.what());
    }
  }
  fail(Errc::transport_error,
       config_.base_url + " failed after " +
           std::to_string(config_.max_retries) + " attempts: " + last_failure);
}

core::Prediction RemoteBackend::do_classify(const ClassifyContext& ctx) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  // Latency covers the whole logical call, retries and backoff included:
  // that is what the sample actually waited for.
  const auto start = std::chrono::steady_clock::now();
  std::string content = complete(ctx.text, config_.prompt.temperature);
  std::string label;
  try {
    label = parse_label(content, space_, config_.extraction);
  } catch (const Error& first) {
    if (first.code() != Errc::no_label_found) throw;
    content = complete(ctx.text, 0.0);
    try {
      label = parse_label(content, space_, config_.extraction);
    } catch (const Error& second) {
      if (second.code() != Errc::no_label_found) throw;
      fail(Errc::parse_failure,
           "no label in response after temperature-0 retry for sample '" +
               ctx.sample_id + "'");
    }
  }
  const auto elapsed = std::chrono::duration_cast<Micros>(
      std::chrono::steady_clock::now() - start);
  return core::Prediction::make(space_, id(), label, std::nullopt, elapsed,
                                content);
}

}  // namespace cascade::backends
