// Remote chat-completions backend against a local mock server: request
// shape, auth header, retry/backoff accounting, status handling, response
// parsing, the temperature-0 re-ask, and whole-call latency.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cascade/core.hpp"
#include "cascade/remote_backend.hpp"
#include "cascade/util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

using namespace cascade;
using backends::ClassifyContext;
using backends::RemoteBackend;
using backends::RemoteConfig;

namespace {

template <typename Fn>
Errc code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected a cascade::Error");
}

core::LabelSpace sentiment() {
  return core::LabelSpace::validate({"negative", "neutral", "positive"});
}

std::string completion_body(const std::string& content) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array(
      {{{"message", {{"role", "assistant"}, {"content", content}}}}});
  return j.dump();
}

// Mock chat-completions endpoint. The handler can be swapped per test; every
// received request is recorded (body + headers) for later inspection.
struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mutex;
  std::vector<nlohmann::json> bodies;
  std::vector<std::string> auth_headers;
  std::function<void(std::size_t, httplib::Response&)> respond;

  MockServer() {
    server.Post("/v1/chat/completions",
                [this](const httplib::Request& req, httplib::Response& res) {
                  std::size_t index = 0;
                  {
                    std::lock_guard<std::mutex> lock(mutex);
                    index = bodies.size();
                    bodies.push_back(nlohmann::json::parse(req.body));
                    auth_headers.push_back(
                        req.get_header_value("Authorization"));
                  }
                  respond(index, res);
                });
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~MockServer() {
    server.stop();
    thread.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  std::size_t request_count() {
    std::lock_guard<std::mutex> lock(mutex);
    return bodies.size();
  }

  nlohmann::json body(std::size_t index) {
    std::lock_guard<std::mutex> lock(mutex);
    return bodies.at(index);
  }
};

RemoteConfig make_config(const std::string& base_url) {
  RemoteConfig config;
  config.base_url = base_url;
  config.model = "tiny-classifier";
  config.deadline_ms = 5000;
  config.max_retries = 3;
  config.retry_backoff_ms = 1;
  config.max_in_flight = 4;
  config.prompt.system_text = "You classify sentiment.";
  config.prompt.few_shot = {{"loved it", "positive"}};
  config.prompt.user_template = "Review: {input}";
  config.prompt.max_new_tokens = 8;
  config.prompt.temperature = 0.7;
  return config;
}

ClassifyContext make_context() {
  ClassifyContext ctx;
  ctx.sample_id = "s1";
  ctx.text = "pretty bad film";
  return ctx;
}

}  // namespace

// ===== Config validation =====

TEST_CASE("remote configs reject out-of-range knobs before any socket work") {
  auto config = make_config("http://127.0.0.1:1");
  config.check();

  auto bad = config;
  bad.base_url.clear();
  CHECK(code_of([&] { bad.check(); }) == Errc::invalid_argument);

  bad = config;
  bad.max_retries = 0;
  CHECK(code_of([&] { bad.check(); }) == Errc::invalid_argument);

  bad = config;
  bad.max_in_flight = 0;
  CHECK(code_of([&] {
          RemoteBackend({0, "r"}, bad, sentiment());
        }) == Errc::invalid_argument);

  bad = config;
  bad.deadline_ms = 0;
  CHECK(code_of([&] { bad.check(); }) == Errc::invalid_argument);

  bad = config;
  bad.retry_backoff_ms = -1;
  CHECK(code_of([&] { bad.check(); }) == Errc::invalid_argument);
}

// ===== Happy path =====

TEST_CASE("a successful completion yields a parsed prediction") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    res.set_content(completion_body("I would say positive overall."),
                    "application/json");
  };
  setenv("SPEC_CASCADE_API_KEY", "sekrit-123", 1);
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());

  const auto prediction = backend.classify(make_context());
  unsetenv("SPEC_CASCADE_API_KEY");

  CHECK(prediction.label == "positive");
  CHECK(!prediction.confidence.has_value());
  CHECK(prediction.raw_output == "I would say positive overall.");
  CHECK(prediction.latency.count() > 0);
  CHECK(backend.calls() == 1);
  REQUIRE(mock.request_count() == 1);

  const auto body = mock.body(0);
  CHECK(body.at("model") == "tiny-classifier");
  CHECK(body.at("temperature") == 0.7);
  CHECK(body.at("max_tokens") == 8);
  REQUIRE(body.at("messages").size() == 4);  // system, shot user/assistant, user
  CHECK(body.at("messages")[0].at("role") == "system");
  CHECK(body.at("messages")[0].at("content") == "You classify sentiment.");
  CHECK(body.at("messages")[1].at("content") == "Review: loved it");
  CHECK(body.at("messages")[2].at("role") == "assistant");
  CHECK(body.at("messages")[2].at("content") == "positive");
  CHECK(body.at("messages")[3].at("role") == "user");
  CHECK(body.at("messages")[3].at("content") == "Review: pretty bad film");
  CHECK(mock.auth_headers.at(0) == "Bearer sekrit-123");
}

TEST_CASE("no auth header is sent without the environment key") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    res.set_content(completion_body("negative"), "application/json");
  };
  unsetenv("SPEC_CASCADE_API_KEY");
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  CHECK(backend.classify(make_context()).label == "negative");
  CHECK(mock.auth_headers.at(0).empty());
}

// ===== Retries and failures =====

TEST_CASE("server errors burn every allotted attempt, then surface") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    res.status = 503;
    res.set_content("overloaded", "text/plain");
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  CHECK(code_of([&] { backend.classify(make_context()); }) ==
        Errc::transport_error);
  CHECK(mock.request_count() == 3);  // max_retries means total attempts
}

TEST_CASE("a transient server error is retried to success") {
  MockServer mock;
  mock.respond = [](std::size_t index, httplib::Response& res) {
    if (index == 0) {
      res.status = 500;
    } else {
      res.set_content(completion_body("neutral"), "application/json");
    }
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  CHECK(backend.classify(make_context()).label == "neutral");
  CHECK(mock.request_count() == 2);
}

TEST_CASE("an unreachable endpoint is a transport error after all attempts") {
  int freed_port = 0;
  {
    httplib::Server probe;
    freed_port = probe.bind_to_any_port("127.0.0.1");
  }
  auto config = make_config("http://127.0.0.1:" + std::to_string(freed_port));
  config.deadline_ms = 200;
  RemoteBackend backend({0, "r"}, config, sentiment());
  CHECK(code_of([&] { backend.classify(make_context()); }) ==
        Errc::transport_error);
}

TEST_CASE("client errors fail immediately without retry") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    res.status = 404;
    res.set_content("no such model", "text/plain");
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  CHECK(code_of([&] { backend.classify(make_context()); }) ==
        Errc::http_status_error);
  CHECK(mock.request_count() == 1);
}

TEST_CASE("malformed response bodies are parse failures, not retries") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    res.set_content("definitely not json", "application/json");
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  CHECK(code_of([&] { backend.classify(make_context()); }) ==
        Errc::parse_failure);
  CHECK(mock.request_count() == 1);

  mock.respond = [](std::size_t, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  };
  CHECK(code_of([&] { backend.classify(make_context()); }) ==
        Errc::parse_failure);
}

// ===== Unparseable answers: the temperature-0 re-ask =====

TEST_CASE("an answer with no label earns one deterministic retry") {
  MockServer mock;
  mock.respond = [](std::size_t index, httplib::Response& res) {
    res.set_content(completion_body(index == 0 ? "I am not sure at all."
                                               : "Fine: negative."),
                    "application/json");
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  const auto prediction = backend.classify(make_context());
  CHECK(prediction.label == "negative");
  CHECK(prediction.raw_output == "Fine: negative.");
  REQUIRE(mock.request_count() == 2);
  CHECK(mock.body(0).at("temperature") == 0.7);
  CHECK(mock.body(1).at("temperature") == 0.0);  // re-ask pins temperature 0
}

TEST_CASE("two label-free answers exhaust the re-ask and fail") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    res.set_content(completion_body("no opinion"), "application/json");
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  CHECK(code_of([&] { backend.classify(make_context()); }) ==
        Errc::parse_failure);
  CHECK(mock.request_count() == 2);
}

// ===== Latency accounting =====

TEST_CASE("latency spans the whole logical call") {
  MockServer mock;
  mock.respond = [](std::size_t, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(120));
    res.set_content(completion_body("positive"), "application/json");
  };
  RemoteBackend backend({0, "r"}, make_config(mock.url()), sentiment());
  const auto prediction = backend.classify(make_context());
  CHECK(prediction.latency >= ms_to_micros(120.0));
}
