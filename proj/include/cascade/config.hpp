#pragma once

// Run configuration: a JSON document mirroring the run options, loaded with
// ${VAR} environment substitution, dotted-path --set overrides, and a closed
// schema (unknown keys are hard errors). The config digest is the SHA-256 of
// the normalized document with paths as written, so it is stable across
// checkout locations.

#include "cascade/backends.hpp"
#include "cascade/core.hpp"
#include "cascade/pipeline.hpp"
#include "cascade/remote_backend.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cascade::config {

enum class BackendKind { Fixture, Synthetic, Remote };

struct BackendEntry {
  std::string name;
  BackendKind kind = BackendKind::Synthetic;
  std::filesystem::path fixture_path;            // Fixture
  backends::SyntheticWorkerSpec synthetic;       // Synthetic (expanded)
  backends::RemoteConfig remote;                 // Remote
};

struct SweepConfig {
  std::vector<double> rho;
  std::vector<double> accuracy;
  std::vector<double> tau;
  std::vector<double> delta;
};

struct SimulateConfig {
  std::size_t n_samples = 0;
  std::optional<SweepConfig> sweep;
};

struct RunSpec {
  core::LabelSpace space;
  std::vector<BackendEntry> workers;
  std::vector<BackendEntry> judges;
  core::AgreementPolicy policy;
  bool pair_restriction = false;
  std::optional<std::filesystem::path> dataset;  // resolved against config dir
  int parallelism = 1;
  std::uint64_t seed = 0;
  bool audit_judge = false;
  std::optional<SimulateConfig> simulate;
  std::string digest;           // sha256 of the normalized document
  nlohmann::json raw;           // post-override document (for sweep variants)
  std::filesystem::path base_dir;
};

// Applies "dotted.path=value" assignments to a raw document in place. Values
// parse as JSON when possible, else count as strings; numeric path segments
// index into arrays.
void apply_overrides(nlohmann::json& raw,
                     const std::vector<std::string>& overrides);

// Loads and validates a config file, applying overrides ("dotted.path=value",
// value parsed as JSON when possible, else taken as a string).
RunSpec load_config(const std::filesystem::path& path,
                    const std::vector<std::string>& overrides);

// Same, from an already-parsed document (sweep variants, tests). base_dir
// anchors relative paths.
RunSpec load_config_json(nlohmann::json raw,
                         const std::filesystem::path& base_dir);

std::shared_ptr<backends::Backend> make_backend(const BackendEntry& entry,
                                                int index,
                                                const core::LabelSpace& space);

// Builds run options with fresh backend instances. active_workers picks a
// subset by position (pair restriction); empty means all.
pipeline::RunOptions make_run_options(
    const RunSpec& spec, const std::vector<std::size_t>& active_workers = {});

// Every config key with a one-line description; rendered into --help and
// checked by the docs test.
const std::vector<std::pair<std::string, std::string>>& config_key_docs();

}  // namespace cascade::config
