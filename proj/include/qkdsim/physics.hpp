#pragma once

// Optical and timing bookkeeping for an entangled-photon fiber link.
//
// Conventions, used everywhere in this library:
//  * every timing width (coherence, jitter, dispersion spread, total) is the
//    FWHM of a Gaussian, in picoseconds; independent widths add in quadrature;
//  * spectral widths are FWHM too, in nanometres (or GHz before conversion);
//  * chromatic dispersion D is in ps/nm/km, accumulated dispersion D*L in
//    ps/nm; a dispersion-compensation module contributes a signed ps/nm term;
//  * detector/channel efficiencies are linear in [0,1]; losses are positive dB.

#include <optional>
#include <string>
#include <vector>

namespace qkdsim {

inline constexpr double kSpeedOfLightMPerS = 299792458.0;

// FWHM / sigma for a Gaussian: 2*sqrt(2 ln 2).
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

// Time-bandwidth product of transform-limited Gaussians in FWHM units:
// dt * dnu = 2 ln 2 / pi.
inline constexpr double kGaussianTimeBandwidth = 0.4412712003053032;

// ---------------------------------------------------------------------------
// Width conversions and combination rules

// Quadrature sum of Gaussian FWHM contributions, Delta_T =
// sqrt(sigma_C^2 + sigma_J^2 + sigma_D^2). All in ps.
double combined_spread(double coherence_fwhm_ps, double jitter_fwhm_ps,
                       double dispersion_fwhm_ps);

// Arrival-time spread from chromatic dispersion alone:
// sigma_D = sigma_lambda * D * L (widths in nm, D in ps/nm/km, L in km).
double dispersion_spread(double spectral_width_nm, double dispersion_ps_per_nm_km,
                         double length_km);

// Frequency FWHM (GHz) -> wavelength FWHM (nm) at a given center wavelength,
// d_lambda = lambda0^2 * d_nu / c, and its inverse.
double bandwidth_to_wavelength_width(double width_ghz, double center_nm);
double wavelength_width_to_bandwidth(double width_nm, double center_nm);

// Transform-limited coherence time (FWHM, ps) of a Gaussian spectrum with the
// given frequency FWHM in GHz.
double coherence_fwhm_from_bandwidth(double width_ghz);

// dB <-> linear transmission. Losses are positive dB.
double db_to_transmission(double loss_db);
double transmission_to_db(double transmission);

// Binary entropy H2(x) = -x log2 x - (1-x) log2 (1-x); H2(0)=H2(1)=0.
// Throws std::domain_error outside [0,1].
double binary_entropy(double x);

// Heralded (Klyshko) efficiency of the partner channel:
// eta = CC / (S_partner - noise_partner). Throws std::domain_error when the
// corrected singles are not positive or CC is negative.
double klyshko_efficiency(double coincidences_cps, double partner_singles_cps,
                          double partner_noise_cps);

// ---------------------------------------------------------------------------
// Link description

enum class SpectrumShape { Gaussian, Tophat };

struct OpticalSpectrum {
  double center_nm = 1550.0;
  double width_nm = 0.8;  // filter FWHM (gaussian) or full width (tophat)
  SpectrumShape shape = SpectrumShape::Gaussian;
};

// Energy conservation of the down-conversion pair:
// 1/lambda_signal + 1/lambda_idler = 1/lambda_pump within a relative tolerance.
struct EnergyBalance {
  double relative_error = 0.0;
  bool within_tolerance = false;
};
EnergyBalance energy_conservation_check(double signal_nm, double idler_nm,
                                        double pump_nm, double rel_tolerance = 1e-4);

struct FiberSegment {
  double length_km = 0.0;
  double dispersion_ps_per_nm_km = 0.0;
  double attenuation_db_per_km = 0.0;
};

// Dispersion-compensation module: lumped signed dispersion plus insertion
// loss. The tuning range and step describe the hardware and double as the
// default grid for compensator sweeps.
struct Compensator {
  double dispersion_ps_per_nm = 0.0;
  double insertion_loss_db = 0.0;
  double range_min_ps_per_nm = -1e6;
  double range_max_ps_per_nm = 1e6;
  double step_ps_per_nm = 10.0;
};

// Detector loss is part of the arm's extra loss budget.
struct DetectorSpec {
  double jitter_fwhm_ps = 0.0;  // per-detector Gaussian FWHM
  double dark_count_cps = 0.0;  // per-detector dark rate
};

// One receiver arm: fiber spans, optional compensator, residual optics loss,
// the detector, and a fixed propagation delay offset.
struct ArmConfig {
  std::vector<FiberSegment> segments;
  std::optional<Compensator> compensator;
  double extra_loss_db = 0.0;
  DetectorSpec detector;
  double propagation_delay_ps = 0.0;
};

// Accumulated fiber dispersion of the arm, ps/nm (segments only).
double arm_fiber_dispersion(const ArmConfig& arm);

// Accumulated dispersion including the compensator, ps/nm.
double arm_total_dispersion(const ArmConfig& arm);

// Total loss budget of the arm in dB (fiber attenuation + compensator
// insertion + extra optics + detector).
double arm_loss_db(const ArmConfig& arm);

// Signed two-arm dispersion sum D_A L_A + D_B L_B (ps/nm). With wavelength
// anticorrelation of the pair the arrival-time difference disperses with this
// sum, so opposite-sign compensation in one arm can null the other arm's
// fiber nonlocally. The fiber and compensator terms are grouped so that a
// compensator set to the negated two-arm fiber sum cancels exactly.
double nonlocal_dispersion_sum(const ArmConfig& arm_a, const ArmConfig& arm_b);

// Resulting spread sigma_D = sigma_lambda * |D_A L_A + D_B L_B| (FWHM, ps).
double nonlocal_dispersion(const ArmConfig& arm_a, const ArmConfig& arm_b,
                           double spectral_width_nm);

// ---------------------------------------------------------------------------
// Full source + two arm scenario

struct LinkScenario {
  double brightness_cps = 0.0;   // generated pair rate at the source
  double optical_error = 0.0;    // intrinsic polarization error probability
  OpticalSpectrum spectrum;
  // Width actually transmitted to both arms after filtering; defaults to the
  // spectrum width. This is the sigma_lambda entering dispersion spreads.
  std::optional<double> effective_spectral_width_nm;
  // Pair coherence time (FWHM, ps); defaults to the transform limit of the
  // effective width. Explicit 0 models the negligible-coherence regime.
  std::optional<double> coherence_fwhm_ps;
  ArmConfig arm_a;
  ArmConfig arm_b;
  double error_correction_efficiency = 1.1;  // f >= 1 in the key-rate formula

  double effective_width_nm() const;
  double coherence_fwhm() const;

  // Throws std::domain_error on out-of-range values.
  void validate() const;
};

// Per-coincidence timing budget of a scenario: coherence, combined detector
// jitter, nonlocal dispersion, and their quadrature total (all FWHM, ps).
struct TimingBudget {
  double coherence_fwhm_ps = 0.0;
  double jitter_fwhm_ps = 0.0;
  double dispersion_fwhm_ps = 0.0;
  double total_fwhm_ps = 0.0;
};
TimingBudget scenario_timing_budget(const LinkScenario& s);

}  // namespace qkdsim
