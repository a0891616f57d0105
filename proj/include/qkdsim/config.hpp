#pragma once

// JSON scenario files: strict parsing (unknown keys rejected with their full
// path), documented defaults filled in, and re-serialization of the resolved
// configuration for run manifests. Key names carry explicit unit suffixes.

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "qkdsim/analysis.hpp"
#include "qkdsim/model.hpp"
#include "qkdsim/montecarlo.hpp"
#include "qkdsim/physics.hpp"

namespace qkdsim {

struct AnalysisOptionsConfig {
  WindowOptimizerOptions options;
  std::optional<double> duration_s;  // overrides run duration for rate norms
};

struct LocalComparisonConfig {
  double second_dcm_loss_db = 4.56;
};

// One scenario document. Sections are optional; commands check for the ones
// they need. `model` can always be derived when `scenario` is present.
struct Config {
  std::optional<LinkScenario> scenario;
  std::optional<SimulationRun> run;
  std::optional<ModelParams> model;
  std::optional<DcmSweepSpec> dcm_sweep;
  std::optional<DistanceSweepSpec> distance_sweep;
  AnalysisOptionsConfig analysis;
  LocalComparisonConfig local_comparison;
};

// Throws ConfigError on malformed JSON, unknown keys, or bad values.
Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);

// Model parameters for a config: the explicit `model` section if present,
// otherwise derived from `scenario` (efficiencies from the arm loss budgets,
// jitter combined over both detectors, coherence from the spectrum).
// Throws ConfigError when neither section is available.
ModelParams model_from_config(const Config& cfg);

// Resolved-config echo with every default made explicit (sorted keys).
nlohmann::json config_to_json(const Config& cfg);

}  // namespace qkdsim
