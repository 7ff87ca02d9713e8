// End-to-end command-line behavior: help/docs coverage, config loading and
// digest semantics in-process, then the installed binary driven over real
// files for run, calibrate-pairs, simulate (sweeps included), report replay,
// and the draft-acceptance simulator.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cascade/cli.hpp"
#include "cascade/config.hpp"
#include "cascade/core.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace cascade;
namespace fs = std::filesystem;

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

const fs::path kSourceDir = CASCADE_SOURCE_DIR;
const fs::path kFixtureConfig =
    kSourceDir / "data" / "fixture_sentiment" / "config.json";
const fs::path kGoldenReport = kSourceDir / "golden" / "report.json";

fs::path scratch_root() {
  static const fs::path root = [] {
    auto dir = fs::temp_directory_path() / "cascade_cli_tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return root;
}

fs::path scratch(const std::string& tag) {
  auto dir = scratch_root() / tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  REQUIRE(out.good());
}

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the real binary through the shell, capturing exit code and streams.
CmdResult run_cmd(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const auto dir = scratch_root() / "io";
  fs::create_directories(dir);
  const auto out_path = dir / ("out." + std::to_string(counter));
  const auto err_path = dir / ("err." + std::to_string(counter));
  ++counter;

  std::string cmd = env.empty() ? "" : env + " ";
  cmd += std::string(CASCADE_CLI_BINARY) + " " + args + " >" +
         out_path.string() + " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  CmdResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

nlohmann::json base_fixture_config() {
  return nlohmann::json::parse(slurp(kFixtureConfig));
}

// A 4-worker synthetic setup where the first two workers are near-perfect,
// so pair calibration has an unambiguous answer.
nlohmann::json synthetic_config() {
  nlohmann::json worker = {{"name", "s0"},
                           {"kind", "synthetic"},
                           {"accuracy", 0.99},
                           {"latency_lognormal_ms", {1.5, 0.2}}};
  nlohmann::json config;
  config["label_space"] = {"negative", "neutral", "positive"};
  config["workers"] = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    auto w = worker;
    w["name"] = "s" + std::to_string(i);
    if (i >= 2) w["accuracy"] = 0.3;
    config["workers"].push_back(w);
  }
  auto judge = worker;
  judge["name"] = "big";
  judge["latency_lognormal_ms"] = {4.0, 0.2};
  config["judges"] = {judge};
  config["policy"] = {{"kind", "simple_majority"}};
  config["seed"] = 17;
  return config;
}

}  // namespace

// ===== Help and parsing =====

TEST_CASE("every documented config key appears in the help text") {
  const std::string help = cli::full_help();
  for (const auto& [key, text] : config::config_key_docs()) {
    CAPTURE(key);
    CHECK(help.find(key) != std::string::npos);
    CHECK(help.find(text) != std::string::npos);
  }
  for (const char* name :
       {"run", "calibrate-pairs", "simulate", "spec-sim", "report"}) {
    CHECK(help.find(name) != std::string::npos);
  }
}

TEST_CASE("argument parsing outcomes map to exit codes") {
  CHECK(cli::run_cli({}) == 1);                    // a subcommand is required
  CHECK(cli::run_cli({"--help"}) == 0);
  CHECK(cli::run_cli({"run", "--help"}) == 0);
  CHECK(cli::run_cli({"no-such-command"}) == 1);
  CHECK(cli::run_cli({"run", "--out", "x"}) == 1);  // --config is required
  CHECK(cli::run_cli({"report"}) == 1);             // traces path is required
}

// ===== Config loading and digests (in-process) =====

TEST_CASE("the digest tracks semantic knobs and ignores execution knobs") {
  const auto spec = config::load_config(kFixtureConfig.string(), {});
  CHECK(spec.workers.size() == 3);
  CHECK(spec.judges.size() == 1);
  CHECK(spec.seed == 7);
  CHECK(spec.digest.size() == 64);

  // The frozen golden report carries this config's digest.
  const auto golden = nlohmann::json::parse(slurp(kGoldenReport));
  CHECK(spec.digest == golden.at("config_digest").get<std::string>());

  const auto wide =
      config::load_config(kFixtureConfig.string(), {"parallelism=9"});
  CHECK(wide.digest == spec.digest);  // parallelism changes nothing observable

  const auto reseeded =
      config::load_config(kFixtureConfig.string(), {"seed=8"});
  CHECK(reseeded.digest != spec.digest);

  const auto audited =
      config::load_config(kFixtureConfig.string(), {"audit_judge=true"});
  CHECK(audited.digest != spec.digest);
}

TEST_CASE("overrides address nested keys and array indices") {
  const auto dir = scratch("overrides");
  const auto path = dir / "config.json";
  spit(path, base_fixture_config().dump());

  const auto spec = config::load_config(
      path.string(), {"workers.0.name=w-renamed", "policy.kind=unanimous"});
  CHECK(spec.workers[0].name == "w-renamed");
  CHECK(spec.policy.kind == core::PolicyKind::Unanimous);

  CHECK(code_of([&] {
          config::load_config(path.string(), {"not-an-assignment"});
        }) == Errc::config_error);
  CHECK(code_of([&] {
          config::load_config(path.string(), {"workers.9.name=x"});
        }) == Errc::config_error);
  CHECK(code_of([&] {
          config::load_config(path.string(), {"seed=abc"});
        }) == Errc::config_error);
}

TEST_CASE("malformed documents are rejected with precise complaints") {
  const auto dir = scratch("badconfig");
  auto write_config = [&](const nlohmann::json& j) {
    const auto path = dir / "c.json";
    spit(path, j.dump());
    return path.string();
  };

  auto j = base_fixture_config();
  j["surprise"] = 1;
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = base_fixture_config();
  j["workers"].erase(1);
  j["workers"].erase(1);
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = base_fixture_config();
  j["judges"] = nlohmann::json::array();
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = base_fixture_config();
  j["judges"] = {j["judges"][0], j["judges"][0], j["judges"][0]};
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = base_fixture_config();
  j["workers"][1]["name"] = "w-tiny";  // duplicate backend name
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = base_fixture_config();
  j["policy"]["tau"] = 0.5;  // stray threshold on a simple-majority policy
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::invalid_policy);

  j = base_fixture_config();
  j["workers"][0]["kind"] = "quantum";
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = synthetic_config();
  j["simulate"] = {{"n_samples", 0}};
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = synthetic_config();
  j["simulate"] = {{"n_samples", 10},
                   {"sweep", nlohmann::json::object()}};
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  j = synthetic_config();
  j["simulate"] = {{"n_samples", 10},
                   {"sweep", {{"rho", nlohmann::json::array()}}}};
  CHECK(code_of([&] { config::load_config(write_config(j), {}); }) ==
        Errc::config_error);

  CHECK(code_of([&] { config::load_config("/no/such/config.json", {}); }) ==
        Errc::config_error);
}

TEST_CASE("environment references substitute or fail loudly") {
  const auto dir = scratch("envsub");
  auto j = base_fixture_config();
  j["dataset"] = "${CASCADE_TEST_DATA}/dataset.jsonl";
  const auto path = dir / "config.json";
  spit(path, j.dump());

  unsetenv("CASCADE_TEST_DATA");
  CHECK(code_of([&] { config::load_config(path.string(), {}); }) ==
        Errc::config_error);

  const auto data_dir = kFixtureConfig.parent_path();
  setenv("CASCADE_TEST_DATA", data_dir.string().c_str(), 1);
  auto spec = config::load_config(path.string(), {});
  CHECK(spec.dataset == data_dir / "dataset.jsonl");
  unsetenv("CASCADE_TEST_DATA");

  auto unterminated = base_fixture_config();
  unterminated["dataset"] = "${OOPS";
  spit(path, unterminated.dump());
  CHECK(code_of([&] { config::load_config(path.string(), {}); }) ==
        Errc::config_error);
}

// ===== run (binary) =====

TEST_CASE("run reproduces the frozen golden report byte for byte") {
  const auto out1 = scratch("run1");
  const auto r1 = run_cmd("run --config " + kFixtureConfig.string() +
                          " --out " + out1.string());
  CHECK(r1.code == 0);
  CHECK(r1.out.empty());
  CHECK(r1.err.empty());
  CHECK(fs::exists(out1 / "traces.jsonl"));
  CHECK(fs::exists(out1 / "report.csv"));
  CHECK(slurp(out1 / "report.json") == slurp(kGoldenReport));

  const auto out2 = scratch("run2");
  const auto r2 = run_cmd("run --config " + kFixtureConfig.string() +
                          " --out " + out2.string() + " --parallel 3");
  CHECK(r2.code == 0);
  CHECK(slurp(out2 / "report.json") == slurp(out1 / "report.json"));
  CHECK(slurp(out2 / "traces.jsonl") == slurp(out1 / "traces.jsonl"));

  // Spot-check the headline numbers of the frozen run.
  const auto report = nlohmann::json::parse(slurp(out1 / "report.json"));
  CHECK(report.at("counts").at("samples") == 100);
  CHECK(report.at("counts").at("escalated") == 20);
  CHECK(report.at("escalation_fraction") == 0.2);
  CHECK(report.at("counts").at("judge_invocations").at("judge-large") == 20);
}

TEST_CASE("replaying traces recomputes the identical report") {
  const auto run_out = scratch("replay_src");
  REQUIRE(run_cmd("run --config " + kFixtureConfig.string() + " --out " +
                  run_out.string())
              .code == 0);

  const auto replay_out = scratch("replay_dst");
  const auto r = run_cmd("report " + (run_out / "traces.jsonl").string() +
                         " --out " + replay_out.string());
  CHECK(r.code == 0);
  CHECK(slurp(replay_out / "report.json") == slurp(run_out / "report.json"));
  CHECK(slurp(replay_out / "report.csv") == slurp(run_out / "report.csv"));
}

TEST_CASE("--seed and --set seed are the same override") {
  const auto out1 = scratch("seed_flag");
  const auto out2 = scratch("seed_set");
  REQUIRE(run_cmd("run --config " + kFixtureConfig.string() + " --out " +
                  out1.string() + " --seed 123")
              .code == 0);
  REQUIRE(run_cmd("run --config " + kFixtureConfig.string() + " --out " +
                  out2.string() + " --set seed=123")
              .code == 0);
  CHECK(slurp(out1 / "report.json") == slurp(out2 / "report.json"));
  // The seed is a semantic knob, so the digest departs from the golden run.
  const auto report = nlohmann::json::parse(slurp(out1 / "report.json"));
  const auto golden = nlohmann::json::parse(slurp(kGoldenReport));
  CHECK(report.at("config_digest") != golden.at("config_digest"));
}

TEST_CASE("a worker with missing fixture rows degrades the run to exit 2") {
  const auto dir = scratch("degraded");
  std::string fixture;
  for (int i = 1; i <= 3; ++i) {
    const std::string id = "s" + std::to_string(i);
    for (const char* worker : {"wa", "wb", "wc", "jj"}) {
      if (std::string(worker) == "wa" && id == "s2") continue;  // the hole
      fixture += nlohmann::json{{"id", id},         {"worker", worker},
                                {"label", "yes"},   {"confidence", 0.9},
                                {"latency_ms", 5.0}, {"raw", "yes"}}
                     .dump() +
                 "\n";
    }
  }
  spit(dir / "fixture.jsonl", fixture);
  std::string dataset;
  for (int i = 1; i <= 3; ++i) {
    dataset += nlohmann::json{{"id", "s" + std::to_string(i)},
                              {"text", "t"},
                              {"gold", nullptr}}
                   .dump() +
               "\n";
  }
  spit(dir / "dataset.jsonl", dataset);

  nlohmann::json config;
  config["label_space"] = {"no", "yes"};
  config["workers"] = nlohmann::json::array();
  for (const char* name : {"wa", "wb", "wc"}) {
    config["workers"].push_back(
        {{"name", name}, {"kind", "fixture"}, {"path", "fixture.jsonl"}});
  }
  config["judges"] = {
      {{"name", "jj"}, {"kind", "fixture"}, {"path", "fixture.jsonl"}}};
  config["policy"] = {{"kind", "simple_majority"}};
  config["dataset"] = "dataset.jsonl";
  spit(dir / "config.json", config.dump());

  const auto out = scratch("degraded_out");
  const auto r = run_cmd("run --config " + (dir / "config.json").string() +
                         " --out " + out.string());
  CHECK(r.code == 2);  // completed, but with failed worker calls
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.at("counts").at("samples") == 3);
  CHECK(report.at("counts").at("failed_worker_calls") == 1);
  CHECK(report.at("counts").at("degraded") == 0);  // two survivors agreed
  CHECK(report.at("counts").at("escalated") == 0);
}

TEST_CASE("run failure modes exit 1 with a pointed message") {
  const auto dir = scratch("runfail");

  auto no_dataset = base_fixture_config();
  no_dataset.erase("dataset");
  spit(dir / "no_dataset.json", no_dataset.dump());
  auto r = run_cmd("run --config " + (dir / "no_dataset.json").string() +
                   " --out " + (dir / "o1").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("dataset") != std::string::npos);

  auto ghost = base_fixture_config();
  ghost["dataset"] = "nope.jsonl";
  spit(dir / "ghost.json", ghost.dump());
  r = run_cmd("run --config " + (dir / "ghost.json").string() + " --out " +
              (dir / "o2").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("nope.jsonl") != std::string::npos);

  r = run_cmd("run --config " + kFixtureConfig.string() + " --out " +
              (dir / "o3").string() + " --set bogus_key=1");
  CHECK(r.code == 1);
  CHECK(r.err.find("bogus_key") != std::string::npos);

  r = run_cmd("run --config /no/such/file.json --out " + (dir / "o4").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("/no/such/file.json") != std::string::npos);
}

TEST_CASE("environment substitution works through the binary") {
  const auto dir = scratch("envbin");
  auto j = base_fixture_config();
  j["dataset"] = "${CASCADE_TEST_DATA}/dataset.jsonl";
  // The config moves to a scratch directory, so fixture paths go absolute.
  const auto fixture = kFixtureConfig.parent_path() / "fixture.jsonl";
  for (auto& worker : j["workers"]) worker["path"] = fixture.string();
  j["judges"][0]["path"] = fixture.string();
  spit(dir / "config.json", j.dump());

  const auto out = scratch("envbin_out");
  const auto data_dir = kFixtureConfig.parent_path().string();
  const auto ok = run_cmd("run --config " + (dir / "config.json").string() +
                              " --out " + out.string(),
                          "CASCADE_TEST_DATA=" + data_dir);
  CHECK(ok.code == 0);

  const auto missing = run_cmd(
      "run --config " + (dir / "config.json").string() + " --out " +
          out.string(),
      "env -u CASCADE_TEST_DATA");
  CHECK(missing.code == 1);
  CHECK(missing.err.find("CASCADE_TEST_DATA") != std::string::npos);
}

// ===== report failure modes (binary) =====

TEST_CASE("broken trace files are rejected by replay") {
  const auto run_out = scratch("traces_src");
  REQUIRE(run_cmd("run --config " + kFixtureConfig.string() + " --out " +
                  run_out.string())
              .code == 0);
  const std::string full = slurp(run_out / "traces.jsonl");
  const auto first_newline = full.find('\n');
  REQUIRE(first_newline != std::string::npos);

  const auto dir = scratch("traces_broken");
  // Header plus half of the first record.
  spit(dir / "truncated.jsonl",
       full.substr(0, first_newline + 1 + 40));
  auto r = run_cmd("report " + (dir / "truncated.jsonl").string() + " --out " +
                   (dir / "o1").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("line 2") != std::string::npos);

  spit(dir / "header_only.jsonl", full.substr(0, first_newline + 1));
  r = run_cmd("report " + (dir / "header_only.jsonl").string() + " --out " +
              (dir / "o2").string());
  CHECK(r.code == 1);

  spit(dir / "empty.jsonl", "");
  r = run_cmd("report " + (dir / "empty.jsonl").string() + " --out " +
              (dir / "o3").string());
  CHECK(r.code == 1);

  r = run_cmd("report " + (dir / "missing.jsonl").string() + " --out " +
              (dir / "o4").string());
  CHECK(r.code == 1);
}

// ===== calibrate-pairs (binary) =====

TEST_CASE("calibration picks the two near-perfect synthetic workers") {
  const auto dir = scratch("calibrate");
  auto config = synthetic_config();
  config["dataset"] = "dataset.jsonl";
  spit(dir / "config.json", config.dump());
  std::string dataset;
  const char* golds[] = {"negative", "neutral", "positive"};
  for (int i = 0; i < 40; ++i) {
    dataset += nlohmann::json{{"id", "c" + std::to_string(i)},
                              {"text", "t" + std::to_string(i)},
                              {"gold", golds[i % 3]}}
                   .dump() +
               "\n";
  }
  spit(dir / "dataset.jsonl", dataset);

  const auto out = scratch("calibrate_out");
  const auto r = run_cmd("calibrate-pairs --config " +
                         (dir / "config.json").string() + " --out " +
                         out.string());
  CHECK(r.code == 0);
  const auto pairs = nlohmann::json::parse(slurp(out / "pairs.json"));
  CHECK(pairs.at("first").at("index") == 0);
  CHECK(pairs.at("second").at("index") == 1);
  CHECK(pairs.at("first").at("name") == "s0");
  CHECK(pairs.at("second").at("name") == "s1");
  CHECK(pairs.at("agreement_rate").get<double>() > 0.9);
  CHECK(pairs.at("all_rates").size() == 6);

  const auto spec =
      config::load_config((dir / "config.json").string(), {});
  CHECK(pairs.at("config_digest") == spec.digest);
}

TEST_CASE("calibration refuses a worker pool no larger than the label space") {
  const auto out = scratch("calibrate_na");
  const auto r = run_cmd("calibrate-pairs --config " +
                         kFixtureConfig.string() + " --out " + out.string());
  CHECK(r.code == 1);  // 3 workers over 3 labels: majority needs no pairing
}

// ===== simulate (binary) =====

TEST_CASE("a plain simulate run produces the standard artifacts") {
  const auto dir = scratch("simulate");
  auto config = synthetic_config();
  for (auto& worker : config["workers"]) worker["accuracy"] = 0.95;
  config["simulate"] = {{"n_samples", 500}};
  spit(dir / "config.json", config.dump());

  const auto out = scratch("simulate_out");
  const auto r = run_cmd("simulate --config " + (dir / "config.json").string() +
                         " --out " + out.string() + " --parallel 4");
  CHECK(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.at("counts").at("samples") == 500);
  CHECK(fs::exists(out / "traces.jsonl"));
  CHECK(!fs::exists(out / "sweep.csv"));

  // Near-perfect workers almost never split three ways.
  CHECK(report.at("escalation_fraction").get<double>() < 0.05);
}

TEST_CASE("simulate demands synthetic backends and a simulate block") {
  const auto out = scratch("simulate_bad");
  auto r = run_cmd("simulate --config " + kFixtureConfig.string() + " --out " +
                   out.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("simulate") != std::string::npos);

  const auto dir = scratch("simulate_fixture");
  auto config = base_fixture_config();
  config["simulate"] = {{"n_samples", 10}};
  spit(dir / "config.json", config.dump());
  r = run_cmd("simulate --config " + (dir / "config.json").string() +
              " --out " + out.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("synthetic") != std::string::npos);
}

TEST_CASE("an error-correlation sweep lowers escalation monotonically") {
  const auto dir = scratch("sweep");
  auto config = synthetic_config();
  for (auto& worker : config["workers"]) worker["accuracy"] = 0.65;
  config["workers"].erase(3);  // three equal workers
  config["simulate"] = {{"n_samples", 10000},
                        {"sweep", {{"rho", {0.0, 0.5, 1.0}}}}};
  spit(dir / "config.json", config.dump());

  const auto out = scratch("sweep_out");
  const auto r = run_cmd("simulate --config " + (dir / "config.json").string() +
                         " --out " + out.string() + " --parallel 4");
  CHECK(r.code == 0);
  CHECK(!fs::exists(out / "report.json"));  // sweeps emit only the grid

  std::istringstream csv(slurp(out / "sweep.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "rho,escalation_fraction");
  std::vector<double> rho, escalation;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    rho.push_back(std::stod(line.substr(0, comma)));
    escalation.push_back(std::stod(line.substr(comma + 1)));
  }
  REQUIRE(rho.size() == 3);
  CHECK(rho == std::vector<double>{0.0, 0.5, 1.0});

  // Independent errors split three ways ~11.9% of the time at accuracy 0.65;
  // fully shared errors always leave a two-vote winner (three workers over
  // two wrong labels cannot all disagree).
  CHECK(escalation[0] == doctest::Approx(0.1194).epsilon(0.15));
  CHECK(escalation[0] > escalation[1] + 0.005);
  CHECK(escalation[1] > escalation[2]);
  CHECK(escalation[2] == 0.0);
}

TEST_CASE("tau sweeps tighten the confidence gate monotonically") {
  const auto dir = scratch("sweep_tau");
  auto config = synthetic_config();
  for (auto& worker : config["workers"]) worker["accuracy"] = 0.8;
  config["workers"].erase(3);
  config["policy"] = {{"kind", "confidence_majority"},
                      {"tau", 0.5},
                      {"delta", 1.0},
                      {"variance_direction", "at_most"}};
  config["simulate"] = {{"n_samples", 4000},
                        {"sweep", {{"tau", {0.2, 0.6, 0.95}}}}};
  spit(dir / "config.json", config.dump());

  const auto out = scratch("sweep_tau_out");
  const auto r = run_cmd("simulate --config " + (dir / "config.json").string() +
                         " --out " + out.string() + " --parallel 4");
  CHECK(r.code == 0);
  std::istringstream csv(slurp(out / "sweep.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "tau,escalation_fraction");
  std::vector<double> escalation;
  while (std::getline(csv, line)) {
    escalation.push_back(std::stod(line.substr(line.find(',') + 1)));
  }
  REQUIRE(escalation.size() == 3);
  // A harsher supporter-confidence threshold can only escalate more.
  CHECK(escalation[0] <= escalation[1]);
  CHECK(escalation[1] <= escalation[2]);
  CHECK(escalation[2] > escalation[0]);  // the span is actually exercised
}

// ===== spec-sim (binary) =====

TEST_CASE("the acceptance simulator prints the frozen reference numbers") {
  const auto r = run_cmd(
      "spec-sim --set \"judge=[[0.75,0.25]]\" --set \"worker=[[0.5,0.5]]\" "
      "--set \"proposed=[0]\" --set trials=2000 --seed 5");
  CHECK(r.code == 0);
  CHECK(r.out.find("position  proposed  p_accept   sum_min   kl_nats") !=
        std::string::npos);
  // ratio 1.5 capped at 1, overlap 0.75, divergence 0.130812 nats.
  CHECK(r.out.find("1.000000  0.750000  0.130812") != std::string::npos);
  CHECK(r.out.find("E[m] analytic       1.000000") != std::string::npos);
  CHECK(r.out.find("m (seeded draw)     1") != std::string::npos);
  CHECK(r.out.find("Var(m) monte carlo  0.000000") != std::string::npos);
}

TEST_CASE("the acceptance simulator measures a rejecting position") {
  const auto r = run_cmd(
      "spec-sim --set \"judge=[[0.5,0.5]]\" --set \"worker=[[0.75,0.25]]\" "
      "--set \"proposed=[0]\" --set trials=100000 --seed 9");
  CHECK(r.code == 0);
  CHECK(r.out.find("0.666667  0.750000  0.143841") != std::string::npos);
  CHECK(r.out.find("E[m] analytic       0.666667") != std::string::npos);

  // Var(m) = (2/3)(1/3) = 2/9 for the single Bernoulli position.
  std::istringstream lines(r.out);
  std::string line;
  double variance = -1.0;
  while (std::getline(lines, line)) {
    if (line.rfind("Var(m) monte carlo", 0) == 0) {
      variance = std::stod(line.substr(line.find_first_of("0123456789.", 18)));
    }
  }
  CHECK(variance == doctest::Approx(2.0 / 9.0).epsilon(0.03));
}

TEST_CASE("identical distributions accept every drafted token") {
  const auto r = run_cmd(
      "spec-sim --set \"judge=[0.2,0.3,0.5]\" --set \"worker=[0.2,0.3,0.5]\" "
      "--set k=5 --set trials=50 --seed 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("k                   5") != std::string::npos);
  CHECK(r.out.find("m (seeded draw)     5") != std::string::npos);
  CHECK(r.out.find("E[m] analytic       5.000000") != std::string::npos);
  CHECK(r.out.find("Var(m) monte carlo  0.000000") != std::string::npos);
  // The default proposal is the worker argmax: token 2 at every position.
  CHECK(r.out.find("       0         2  1.000000") != std::string::npos);
}

TEST_CASE("the acceptance simulator rejects malformed documents") {
  auto r = run_cmd("spec-sim --set \"judge=[[0.9,0.2]]\" "
                   "--set \"worker=[[0.5,0.5]]\"");
  CHECK(r.code == 1);

  r = run_cmd("spec-sim --set \"jduge=[[0.5,0.5]]\"");
  CHECK(r.code == 1);
  CHECK(r.err.find("jduge") != std::string::npos);

  r = run_cmd("spec-sim");  // no distributions at all
  CHECK(r.code == 1);

  const auto dir = scratch("specsim_cfg");
  spit(dir / "sim.json",
       R"({"judge": [[0.5,0.5]], "worker": [[0.5,0.5]], "k": 3, "trials": 10})");
  r = run_cmd("spec-sim --config " + (dir / "sim.json").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("m (seeded draw)     3") != std::string::npos);
}
