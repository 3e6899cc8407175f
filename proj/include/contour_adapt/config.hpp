#pragma once

#include <string>
#include <variant>
#include <vector>

#include "contour_adapt/model.hpp"
#include "contour_adapt/optim.hpp"

namespace ca::cli {

// Full experiment description for the scenario harness. Flat JSON keys with
// dotted sections; unknown keys are rejected.
struct ScenarioConfig {
  nn::ModelConfig model;
  std::string source_path, target_path;
  std::vector<std::string> directions;   // "s2t" and/or "t2s"
  std::vector<nn::FreezeLevel> levels;   // fine-tune levels; Base always evaluated
  std::vector<std::uint64_t> seeds;
  double threshold = 0.5;
  bool deterministic = true;
  std::string out_dir;
  int eval_batch_size = 8;
  int overlay_count = 0;                 // per-direction overlays for the first seed
  nn::TrainConfig base_train;
  nn::TrainConfig finetune_train;

  std::string raw_json;                  // file contents, for hashing/provenance
  std::vector<std::string> applied_defaults;  // "key = value (default)" echo lines
};

// Scenario plus a list of target-train sizes; levels restricted to
// {encoder, dec3}.
struct SweepConfig {
  ScenarioConfig scenario;
  std::vector<int> sizes;  // strictly increasing
};

using AnyConfig = std::variant<ScenarioConfig, SweepConfig>;

// Parses and validates; a "sizes" key selects SweepConfig. Unknown keys,
// missing required keys, and type mismatches raise ConfigError naming the
// key and its line in the file.
AnyConfig parse_config(const std::string& path);

// Shared validation used by parse_config and by CLI flag overrides.
void validate_scenario(const ScenarioConfig& cfg);

// Reads just the "<section>.*" training keys (plus dropout/deterministic/
// threshold) from a JSON file; used by the train/adapt subcommands.
nn::TrainConfig parse_train_config(const std::string& path, const std::string& section);

}  // namespace ca::cli
