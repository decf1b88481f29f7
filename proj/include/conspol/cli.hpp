#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "conspol/bench/missingness.hpp"
#include "conspol/estimators/cpvae.hpp"
#include "conspol/policy/propensity.hpp"
#include "conspol/pvae/pvae.hpp"
#include "conspol/strategies/strategies.hpp"

namespace conspol::cli {

/// Exit codes: 1 usage/config, 2 data/model, 3 numeric failure.
enum ExitCode : int { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

int exit_code_for(const std::exception& e);

struct Paths {
  std::string data;         // logged dataset CSV
  std::string environment;  // environment JSON (gen-data writes one next to the dataset)
  std::string pvae;
  std::string propensity;
  std::string cpvae;
  std::string queries;  // features to recommend for; defaults to data
  std::string output;
  std::string instances;  // evaluate: per-instance rewards CSV
};

struct EstimatorSpec {
  std::string kind = "spvae-matched";  // spvae, spvae-matched, cpvae
  std::size_t subsample = 0;           // M, 0 = all rows
  double max_ips_weight = 100.0;
  std::size_t components = 1;  // latent draws per row density
};

struct EvaluationSpec {
  std::size_t n_test = 1000;
  std::vector<std::uint64_t> seeds{1000};
  double tail_threshold = -7.0;
};

struct RiskSpec {
  std::vector<std::size_t> d_miss{1};
  std::vector<double> c{0.1};
};

/// Fully resolved configuration of one run.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string family;  // hyperparameter preset
  Paths paths;

  nlohmann::json environment;  // family config (gen-data, evaluate)
  std::size_t n = 1000;
  std::optional<MissingnessSpec> missingness;

  PvaeConfig pvae;
  CpvaeConfig cpvae;
  PropensityConfig propensity;

  EstimatorSpec estimator;
  std::vector<StrategySpec> strategies{StrategySpec::imputation()};
  EvaluationSpec evaluation;

  bool four_bit = false;
  RiskSpec risk;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

const std::vector<std::string>& commands();

/// Hyperparameter preset for a family (digit, ihdp-b, glucose, binary-table);
/// empty object for unknown or empty names.
nlohmann::json family_defaults(const std::string& family);

/// Defaults, then the family preset, then `file` (a config or a run
/// manifest), then `overrides`. Throws ConfigError naming the bad field.
RunConfig resolve_config(const std::string& command, const nlohmann::json& file, const nlohmann::json& overrides);

/// Hex digest of the resolved config without output paths and threads.
std::string run_id(const RunConfig& config);

std::filesystem::path manifest_path(const std::filesystem::path& output);
std::filesystem::path environment_path(const std::filesystem::path& dataset);

struct RunResult {
  std::string summary;  // printed on stdout
  std::vector<std::filesystem::path> outputs;
};

/// Executes the command, writes its outputs atomically and, when an output
/// path is set, the run manifest next to it.
RunResult run(const RunConfig& config);

/// Loads a manifest and re-runs it, optionally redirecting outputs.
RunResult replay(const std::filesystem::path& manifest, const std::string& output = {},
                 const std::string& instances = {});

}  // namespace conspol::cli
