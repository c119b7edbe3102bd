// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nastar/adapt.hpp"
#include "nastar/contrastive.hpp"
#include "nastar/models.hpp"

namespace nastar::cli {

struct EvalConfig {
  std::vector<double> snr_levels{-5.0, 0.0, 5.0, 10.0};
};

// One seed per stage, so rerunning a single stage never depends on how many
// other stages ran before it.
struct StageSeeds {
  std::uint64_t synth = 0;
  std::uint64_t pretrain = 0;
  std::uint64_t contrastive = 0;
  std::uint64_t adapt = 0;
  std::uint64_t eval = 0;
};

struct ExperimentPaths {
  std::string noise_manifest;
  std::string speech_manifest;
  std::string speech_test_manifest;
};

// Whole-experiment settings shared by the subcommands. A run is described
// by one JSON file of this shape; command-line flags override individual
// fields. Defaults are the desk-scale recipe.
struct ExperimentConfig {
  models::ExtractorConfig extractor{.depth = 2, .base_channels = 24};
  models::ExtractorConfig se{.depth = 2, .base_channels = 24};
  models::EncoderConfig encoder;
  adapt::PretrainConfig pretrain;
  contrastive::ContrastiveConfig contrastive =
      contrastive::desk_contrastive_config();
  adapt::AdaptConfig adapt;
  EvalConfig eval;

  std::string mode = "nastar";
  double alpha = 0.9;
  std::size_t cohort_k = 250;
  StageSeeds seeds;
  ExperimentPaths paths;
};

// Parses config JSON. Every key is optional and falls back to the default;
// unknown keys are rejected by name so typos cannot silently revert a field
// to its default.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Full round-trippable echo of the configuration, embedded in run
// manifests so artifacts record the settings that produced them.
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

}  // namespace nastar::cli
