#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "toxflow/features.hpp"
#include "toxflow/market_data.hpp"
#include "toxflow/warmup.hpp"

namespace toxflow {

// ============================================================================
// End-to-end orchestration. A run is a directory of persisted stage
// artifacts:
//
//   tape/index.json + day CSVs     (generate)
//   labels/h<g>/day_NNN.csv        (label; one tree per horizon)
//   features/h<g>/day_NNN.txf      (featurize; binary tensors, CSV optional)
//   checkpoints/h<g>/*             (warmup: subspace, logreg, mle counts)
//   predictions/h<g>/<model>/day_NNN.csv   (deploy)
//   metrics/*.csv                  (evaluate)
//   backtest/*.csv|json            (backtest)
//   manifest.json                  (run)
//
// Every stage reads only persisted artifacts, so any suffix of the pipeline
// can be re-run from intermediates and reproduces identical outputs.
// ============================================================================

struct DayFiles {
  std::string quotes;
  std::string trades;
};

struct StrategyGrid {
  std::vector<double> cutoffs = {0.05, 0.15, 0.25, 0.35, 0.45,
                                 0.55, 0.65, 0.75, 0.85, 0.95};
  std::vector<double> aversions = {0.0};
  double fee_per_notional = 0.0;
  // The configuration whose full ledger is persisted (the sweep stores
  // aggregates only).
  double base_cutoff = 0.5;
  double base_aversion = 0.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::optional<SynthConfig> synth;  // generate data; else read `days` paths
  std::vector<DayFiles> days;
  int warmup_days = 1;
  std::vector<Micros> horizons_us = {1'000'000,  5'000'000,  10'000'000,
                                     20'000'000, 30'000'000, 40'000'000,
                                     50'000'000, 60'000'000, 70'000'000};
  std::vector<std::string> models = {"pulse", "logreg", "mle"};
  std::vector<int> hidden = {100, 100, 100};
  WarmupConfig warmup;
  FeatureConfig features;
  StrategyGrid strategy;
  bool per_client = false;        // one model stack per client vs universal
  bool include_censored = false;  // count censored trades in AUC
  bool features_csv = false;      // also dump the debug feature CSVs

  void validate() const;
};

// JSON round-trip mirroring the field names above. Unknown keys are
// rejected so config typos fail loudly.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Reads a JSON config file. The TOXFLOW_OUT environment variable, when set,
// overrides out_dir.
RunConfig load_run_config(const std::string& path);

// ============================================================================
// Stages. Each returns the artifact paths it wrote, relative to out_dir.
// ============================================================================

std::vector<std::string> stage_generate(const RunConfig& cfg);
std::vector<std::string> stage_label(const RunConfig& cfg);
std::vector<std::string> stage_featurize(const RunConfig& cfg);
std::vector<std::string> stage_warmup(const RunConfig& cfg);
std::vector<std::string> stage_deploy(const RunConfig& cfg);
std::vector<std::string> stage_evaluate(const RunConfig& cfg);
std::vector<std::string> stage_backtest(const RunConfig& cfg);

struct StageReport {
  std::string name;
  double seconds = 0;  // wall clock; excluded from the run hash
  std::vector<std::string> artifacts;
};

struct RunManifest {
  std::string run_hash;  // FNV-1a over config + artifact bytes
  std::vector<StageReport> stages;
};

// All stages in order, then manifest.json. Deterministic given the config:
// two runs with identical configs produce identical run hashes.
RunManifest run_pipeline(const RunConfig& cfg);

}  // namespace toxflow
