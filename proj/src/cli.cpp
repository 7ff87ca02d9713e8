#include "cascade/cli.hpp"

#include "cascade/agreement.hpp"
#include "cascade/config.hpp"
#include "cascade/core.hpp"
#include "cascade/metrics.hpp"
#include "cascade/pipeline.hpp"
#include "cascade/rng.hpp"
#include "cascade/specdec.hpp"
#include "cascade/trace.hpp"
#include "cascade/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace cascade::cli {

namespace {

namespace fs = std::filesystem;

// Salt for simulated ground-truth draws; disjoint from every backend stream.
constexpr std::uint64_t kGoldSalt = 0x600D000000000000ull;

// ===== File helpers =====

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(Errc::io_error, "cannot open '" + path.string() + "' for writing");
  }
  out << text;
  out.flush();
  if (!out) fail(Errc::io_error, "failed writing '" + path.string() + "'");
}

nlohmann::json worker_id_json(const core::WorkerId& id) {
  return {{"index", id.index}, {"name", id.name}};
}

nlohmann::json pair_selection_json(const agreement::PairSelection& selection,
                                   const std::string& digest) {
  nlohmann::json rates = nlohmann::json::array();
  for (const auto& rate : selection.all_rates) {
    rates.push_back({{"first", worker_id_json(rate.first)},
                     {"second", worker_id_json(rate.second)},
                     {"rate", rate.rate}});
  }
  return {{"agreement_rate", selection.agreement_rate},
          {"all_rates", std::move(rates)},
          {"config_digest", digest},
          {"first", worker_id_json(selection.first)},
          {"second", worker_id_json(selection.second)}};
}

// ===== Shared cascade path (run / simulate) =====

int run_cascade(const config::RunSpec& spec,
                const std::vector<trace::Sample>& samples,
                const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::size_t> active;
  if (spec.pair_restriction) {
    auto calibration = config::make_run_options(spec);
    const auto selection = pipeline::calibrate_pairs(calibration, samples);
    active = {static_cast<std::size_t>(selection.first.index),
              static_cast<std::size_t>(selection.second.index)};
    write_text(out_dir / "pairs.json",
               pair_selection_json(selection, spec.digest).dump(2) + "\n");
  }
  auto options = config::make_run_options(spec, active);
  trace::TraceWriter writer(out_dir / "traces.jsonl",
                            pipeline::make_header(options));
  const auto outcome = pipeline::run_dataset(options, samples, &writer);
  writer.close();
  write_text(out_dir / "report.json",
             metrics::report_document(outcome.report));
  write_text(out_dir / "report.csv", metrics::report_csv(outcome.report));
  return outcome.failed_worker_calls > 0 ? 2 : 0;
}

// ===== run =====

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, const fs::path& out) {
  const auto spec = config::load_config(config_path, overrides);
  if (!spec.dataset) {
    fail(Errc::config_error, "run requires a 'dataset' entry in the config");
  }
  const auto samples = trace::read_dataset(*spec.dataset);
  return run_cascade(spec, samples, out);
}

// ===== calibrate-pairs =====

int cmd_calibrate(const std::string& config_path,
                  const std::vector<std::string>& overrides,
                  const fs::path& out) {
  const auto spec = config::load_config(config_path, overrides);
  if (!spec.dataset) {
    fail(Errc::config_error,
         "calibrate-pairs requires a 'dataset' entry in the config");
  }
  const auto samples = trace::read_dataset(*spec.dataset);
  auto options = config::make_run_options(spec);
  const auto selection = pipeline::calibrate_pairs(options, samples);
  fs::create_directories(out);
  write_text(out / "pairs.json",
             pair_selection_json(selection, spec.digest).dump(2) + "\n");
  return 0;
}

// ===== simulate =====

std::vector<trace::Sample> generate_samples(const core::LabelSpace& space,
                                            std::size_t n,
                                            std::uint64_t seed) {
  std::vector<trace::Sample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sim-%06zu", i);
    std::string id(buf);
    rng::Rng rng(derive_seed(seed, fnv1a64(id), kGoldSalt));
    auto index = static_cast<std::size_t>(
        rng.uniform() * static_cast<double>(space.size()));
    index = std::min(index, space.size() - 1);
    samples.push_back(trace::Sample{id, id, space.labels()[index]});
  }
  return samples;
}

void require_synthetic(const config::RunSpec& spec) {
  for (const auto& entry : spec.workers) {
    if (entry.kind != config::BackendKind::Synthetic) {
      fail(Errc::non_synthetic_backend,
           "simulate requires synthetic backends; worker '" + entry.name +
               "' is not synthetic");
    }
  }
  for (const auto& entry : spec.judges) {
    if (entry.kind != config::BackendKind::Synthetic) {
      fail(Errc::non_synthetic_backend,
           "simulate requires synthetic backends; judge '" + entry.name +
               "' is not synthetic");
    }
  }
}

int run_sweep(const config::RunSpec& spec, const fs::path& out) {
  const auto& sweep = *spec.simulate->sweep;
  struct Axis {
    const char* name;
    const std::vector<double>* values;
  };
  std::vector<Axis> axes;
  if (!sweep.rho.empty()) axes.push_back({"rho", &sweep.rho});
  if (!sweep.accuracy.empty()) axes.push_back({"accuracy", &sweep.accuracy});
  if (!sweep.tau.empty()) axes.push_back({"tau", &sweep.tau});
  if (!sweep.delta.empty()) axes.push_back({"delta", &sweep.delta});

  std::string csv;
  for (const auto& axis : axes) {
    csv += axis.name;
    csv += ',';
  }
  csv += "escalation_fraction\n";

  std::vector<std::size_t> index(axes.size(), 0);
  bool exhausted = axes.empty();
  while (!exhausted) {
    nlohmann::json variant = spec.raw;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const double value = (*axes[a].values)[index[a]];
      const std::string name = axes[a].name;
      if (name == "rho" || name == "accuracy") {
        for (auto& worker : variant["workers"]) worker[name] = value;
      } else {
        variant["policy"][name] = value;
      }
    }
    auto vspec = config::load_config_json(variant, spec.base_dir);
    require_synthetic(vspec);
    const auto samples =
        generate_samples(vspec.space, vspec.simulate->n_samples, vspec.seed);
    auto options = config::make_run_options(vspec);
    const auto outcome = pipeline::run_dataset(options, samples);
    for (std::size_t a = 0; a < axes.size(); ++a) {
      csv += nlohmann::json((*axes[a].values)[index[a]]).dump();
      csv += ',';
    }
    csv += outcome.report.at("escalation_fraction").dump();
    csv += '\n';

    exhausted = true;
    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++index[a] < axes[a].values->size()) {
        exhausted = false;
        break;
      }
      index[a] = 0;
    }
  }
  write_text(out / "sweep.csv", csv);
  return 0;
}

int cmd_simulate(const std::string& config_path,
                 const std::vector<std::string>& overrides,
                 const fs::path& out) {
  const auto spec = config::load_config(config_path, overrides);
  if (!spec.simulate) {
    fail(Errc::config_error,
         "simulate requires a 'simulate' block in the config");
  }
  require_synthetic(spec);
  fs::create_directories(out);
  if (spec.simulate->sweep) return run_sweep(spec, out);
  const auto samples =
      generate_samples(spec.space, spec.simulate->n_samples, spec.seed);
  return run_cascade(spec, samples, out);
}

// ===== report =====

int cmd_report(const std::string& traces_path, const fs::path& out) {
  const auto file = trace::read_trace_file(traces_path);
  metrics::Accumulator acc(file.header);
  for (const auto& t : file.traces) acc.add(t);
  const auto report = acc.report();
  fs::create_directories(out);
  write_text(out / "report.json", metrics::report_document(report));
  write_text(out / "report.csv", metrics::report_csv(report));
  return 0;
}

// ===== spec-sim =====

std::vector<specdec::TokenDist> read_dist_rows(const nlohmann::json& j,
                                               const std::string& what) {
  if (!j.is_array() || j.empty()) {
    fail(Errc::config_error, what + " must be a non-empty array");
  }
  std::vector<std::vector<double>> rows;
  try {
    if (j.front().is_array()) {
      rows = j.get<std::vector<std::vector<double>>>();
    } else {
      rows.push_back(j.get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception&) {
    fail(Errc::config_error, what + " must hold numbers or arrays of numbers");
  }
  std::vector<specdec::TokenDist> dists;
  dists.reserve(rows.size());
  for (auto& row : rows) {
    dists.push_back(specdec::TokenDist::validate(std::move(row)));
  }
  return dists;
}

void replicate_to(std::vector<specdec::TokenDist>& dists, std::size_t k,
                  const std::string& what) {
  if (dists.size() == k) return;
  if (dists.size() == 1) {
    dists.resize(k, dists.front());
    return;
  }
  fail(Errc::config_error, what + " lists " + std::to_string(dists.size()) +
                               " positions but k is " + std::to_string(k));
}

int cmd_spec_sim(const std::string& config_path,
                 const std::vector<std::string>& overrides) {
  nlohmann::json raw = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      fail(Errc::config_error, "cannot open config '" + config_path + "'");
    }
    try {
      raw = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::config_error, "config '" + config_path +
                                   "' is not valid JSON: " + e.what());
    }
  }
  config::apply_overrides(raw, overrides);
  if (!raw.is_object()) {
    fail(Errc::config_error, "spec-sim config must be a JSON object");
  }
  static const std::set<std::string> allowed = {"judge", "worker", "proposed",
                                                "k", "trials", "seed"};
  for (const auto& [key, value] : raw.items()) {
    (void)value;
    if (!allowed.contains(key)) {
      fail(Errc::config_error, "unknown key '" + key + "' in spec-sim config");
    }
  }
  if (!raw.contains("judge") || !raw.contains("worker")) {
    fail(Errc::config_error,
         "spec-sim needs 'judge' and 'worker' distributions (arrays, or "
         "arrays of per-position arrays)");
  }
  auto judge = read_dist_rows(raw.at("judge"), "judge");
  auto worker = read_dist_rows(raw.at("worker"), "worker");

  std::size_t k = std::max(judge.size(), worker.size());
  if (raw.contains("k")) {
    if (!raw.at("k").is_number_integer() || raw.at("k").get<long long>() < 1) {
      fail(Errc::config_error, "k must be a positive integer");
    }
    k = raw.at("k").get<std::size_t>();
  }
  replicate_to(judge, k, "judge");
  replicate_to(worker, k, "worker");

  std::vector<std::size_t> proposed;
  if (raw.contains("proposed")) {
    try {
      if (raw.at("proposed").is_array()) {
        proposed = raw.at("proposed").get<std::vector<std::size_t>>();
      } else {
        proposed.push_back(raw.at("proposed").get<std::size_t>());
      }
    } catch (const nlohmann::json::exception&) {
      fail(Errc::config_error, "proposed must be token indices");
    }
    if (proposed.size() == 1 && k > 1) proposed.resize(k, proposed.front());
    if (proposed.size() != k) {
      fail(Errc::config_error, "proposed lists " +
                                   std::to_string(proposed.size()) +
                                   " tokens but k is " + std::to_string(k));
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      const auto& probs = worker[i].probs();
      proposed.push_back(static_cast<std::size_t>(
          std::max_element(probs.begin(), probs.end()) - probs.begin()));
    }
  }

  std::size_t trials = 100000;
  std::uint64_t seed = 0;
  try {
    if (raw.contains("trials")) trials = raw.at("trials").get<std::size_t>();
    if (raw.contains("seed")) seed = raw.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception&) {
    fail(Errc::config_error, "trials and seed must be non-negative integers");
  }

  const auto episode = specdec::DraftEpisode::make(judge, worker, proposed, seed);
  const std::size_t m = specdec::simulate_draft(episode);

  std::printf("position  proposed  p_accept   sum_min   kl_nats\n");
  double expected_m = 0.0;
  double prefix = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double p_accept =
        std::min(1.0, judge[i][proposed[i]] / worker[i][proposed[i]]);
    const double sum_min = specdec::expected_acceptance(judge[i], worker[i]);
    const double kl = specdec::kl_divergence(judge[i], worker[i]);
    prefix *= p_accept;
    expected_m += prefix;
    std::printf("%8zu  %8zu  %8.6f  %8.6f  %8.6f\n", i, proposed[i], p_accept,
                sum_min, kl);
  }

  // Monte Carlo over the same derived-seed chain variance_of_m consumes.
  double sum = 0.0;
  std::uint64_t stream = seed;
  auto trial = episode;
  for (std::size_t t = 0; t < trials; ++t) {
    trial.seed = splitmix64(stream);
    sum += static_cast<double>(specdec::simulate_draft(trial));
  }
  const double mc_mean =
      trials > 0 ? sum / static_cast<double>(trials) : 0.0;
  const double variance =
      specdec::variance_of_m(judge, worker, proposed, trials, seed);

  std::printf("k                   %zu\n", k);
  std::printf("m (seeded draw)     %zu\n", m);
  std::printf("E[m] analytic       %.6f\n", expected_m);
  std::printf("E[m] monte carlo    %.6f  (%zu trials)\n", mc_mean, trials);
  std::printf("Var(m) monte carlo  %.6f\n", variance);
  return 0;
}

// ===== App assembly =====

std::string config_footer() {
  const auto& docs = config::config_key_docs();
  std::size_t width = 0;
  for (const auto& [key, text] : docs) width = std::max(width, key.size());
  std::string footer =
      "Config keys (JSON document; any key is settable with --set "
      "key=value):\n";
  for (const auto& [key, text] : docs) {
    footer += "  " + key + std::string(width - key.size() + 2, ' ') + text +
              "\n";
  }
  return footer;
}

struct SubArgs {
  std::string config;
  std::string out;
  std::string traces;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int parallel = 1;
  bool audit = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* parallel_opt = nullptr;
  CLI::App* cmd = nullptr;

  std::vector<std::string> overrides() const {
    std::vector<std::string> result = sets;
    if (seed_opt != nullptr && seed_opt->count() > 0) {
      result.push_back("seed=" + std::to_string(seed));
    }
    if (parallel_opt != nullptr && parallel_opt->count() > 0) {
      result.push_back("parallelism=" + std::to_string(parallel));
    }
    if (audit) result.push_back("audit_judge=true");
    return result;
  }
};

struct Cli {
  CLI::App app{
      "Speculative cascade classifier: cheap workers draft labels, an "
      "expensive judge settles disagreements."};
  SubArgs run, calibrate, simulate, specsim, report;

  Cli() {
    app.require_subcommand(1);
    const std::string footer = config_footer();
    app.footer(footer);

    const auto add_common = [&](SubArgs& args, const char* name,
                                const char* desc, bool with_out,
                                bool config_required) {
      CLI::App* cmd = app.add_subcommand(name, desc);
      cmd->footer(footer);
      auto* config_opt =
          cmd->add_option("--config", args.config, "Config document (JSON)");
      if (config_required) config_opt->required();
      if (with_out) {
        cmd->add_option("--out", args.out, "Output directory")->required();
      }
      cmd->add_option("--set", args.sets,
                      "Override a config key (key=value, repeatable)");
      args.seed_opt = cmd->add_option(
          "--seed", args.seed, "Base RNG seed (overrides the config)");
      args.cmd = cmd;
      return cmd;
    };

    {
      auto* cmd = add_common(run, "run", "Run the cascade over a dataset",
                             true, true);
      run.parallel_opt = cmd->add_option(
          "--parallel", run.parallel, "Worker-pool width (overrides the config)");
      cmd->add_flag("--audit-judge", run.audit,
                    "Run the second judge on every sample");
    }
    {
      auto* cmd = add_common(calibrate, "calibrate-pairs",
                             "Select the best worker pair by pairwise "
                             "agreement over a dataset",
                             true, true);
      calibrate.parallel_opt =
          cmd->add_option("--parallel", calibrate.parallel,
                          "Worker-pool width (overrides the config)");
    }
    {
      auto* cmd = add_common(simulate, "simulate",
                             "Run the cascade over generated synthetic "
                             "samples (sweep grids supported)",
                             true, true);
      simulate.parallel_opt =
          cmd->add_option("--parallel", simulate.parallel,
                          "Worker-pool width (overrides the config)");
      cmd->add_flag("--audit-judge", simulate.audit,
                    "Run the second judge on every sample");
    }
    {
      add_common(specsim, "spec-sim",
                 "Token-level draft acceptance simulator (keys: judge, "
                 "worker, proposed, k, trials, seed)",
                 false, false);
    }
    {
      CLI::App* cmd = app.add_subcommand(
          "report", "Recompute report.json and report.csv from a trace file");
      cmd->footer(footer);
      cmd->add_option("traces", report.traces,
                      "traces.jsonl produced by run or simulate")
          ->required();
      cmd->add_option("--out", report.out, "Output directory")->required();
      report.cmd = cmd;
    }
  }

  int dispatch() {
    if (run.cmd->parsed()) {
      return cmd_run(run.config, run.overrides(), run.out);
    }
    if (calibrate.cmd->parsed()) {
      return cmd_calibrate(calibrate.config, calibrate.overrides(),
                           calibrate.out);
    }
    if (simulate.cmd->parsed()) {
      return cmd_simulate(simulate.config, simulate.overrides(), simulate.out);
    }
    if (specsim.cmd->parsed()) {
      return cmd_spec_sim(specsim.config, specsim.overrides());
    }
    if (report.cmd->parsed()) return cmd_report(report.traces, report.out);
    return 1;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv) {
  Cli cli;
  try {
    cli.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return cli.dispatch();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.emplace_back("speccascade");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string full_help() {
  Cli cli;
  return cli.app.help("", CLI::AppFormatMode::All);
}

}  // namespace cascade::cli
