#pragma once

#include <map>
#include <string>
#include <vector>

#include "contour_adapt/config.hpp"
#include "contour_adapt/report.hpp"

namespace ca::cli {

struct ScenarioResult {
  std::vector<eval::LabeledTable> tables;          // per (direction, seed) + medians
  std::map<std::string, std::string> balance;      // direction -> balance level (median table)
  int models_trained = 0;
};

// The full study for one config: per direction and seed, trains the base
// model on the source, fine-tunes every configured level on the target,
// evaluates everything on both test splits, and emits reports. Outputs land
// under <out>/weights, <out>/reports, <out>/overlays; an INCOMPLETE marker
// exists while the run is in flight.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

struct SweepResult {
  std::vector<eval::SweepRow> rows;
};

// Fig-2-style dataset-size sweep along the first configured direction:
// fine-tunes each level on seeded origin-grouped subsamples of the target
// train split and reports |gap| against size.
SweepResult run_size_sweep(const SweepConfig& cfg);

// Rebuilds CSV/SVG from a stored report.json (scenario or sweep layout).
void reemit_report(const std::string& from_dir, const std::string& out_dir);

}  // namespace ca::cli
