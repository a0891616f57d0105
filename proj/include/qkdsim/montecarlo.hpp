#pragma once

// Event-level Monte Carlo generator for a two-arm entangled-pair link.
//
// Pairs are emitted at Poisson-distributed times; each photon accumulates a
// propagation delay, a wavelength-dependent dispersion shift (the two photons
// of a pair carry opposite spectral detunings), detector jitter, and a shared
// emission-time offset from the finite pair coherence. Detection-category
// counts per time chunk are drawn with the Poisson splitting identity, so each
// category owns a private counter-based random substream and the result is
// byte-identical for any thread count.

#include <cstdint>
#include <vector>

#include "qkdsim/physics.hpp"
#include "qkdsim/timetag.hpp"

namespace qkdsim {

enum class BasisMode { FixedSettings, RandomBasis };

// One measurement-settings block (fixed-settings mode). Blocks cycle for the
// whole run duration.
struct SettingsBlock {
  Basis basis_a = Basis::HV;
  Basis basis_b = Basis::HV;
  double duration_s = 0.0;
};

struct SimulationRun {
  std::uint64_t seed = 1;
  double duration_s = 1.0;
  BasisMode basis_mode = BasisMode::FixedSettings;
  // Used in fixed-settings mode; must be non-empty there. Ignored otherwise.
  std::vector<SettingsBlock> settings;

  void validate() const;  // throws std::domain_error
};

struct SimulateOptions {
  int threads = 0;  // 0 = hardware concurrency
  // Refuse runs whose expected tag count exceeds this cap.
  std::uint64_t max_expected_tags = 1ull << 28;
};

struct SimulationCounts {
  std::uint64_t joint_pairs = 0;   // pairs with both photons detected
  std::uint64_t only_a = 0;        // pairs where only detector A fired
  std::uint64_t only_b = 0;
  std::uint64_t dark_a = 0;
  std::uint64_t dark_b = 0;
};

struct SimulationResult {
  TagStream tags_a;
  TagStream tags_b;
  SimulationCounts counts;
};

// Default checkerboard: first half HV/HV, second half DA/DA.
std::vector<SettingsBlock> default_settings(double duration_s);

SimulationResult simulate(const LinkScenario& scenario, const SimulationRun& run,
                          const SimulateOptions& options = {});

}  // namespace qkdsim
