#include "qkdsim/physics.hpp"

#include <cmath>
#include <stdexcept>

namespace qkdsim {

double combined_spread(double coherence_fwhm_ps, double jitter_fwhm_ps,
                       double dispersion_fwhm_ps) {
  if (coherence_fwhm_ps < 0 || jitter_fwhm_ps < 0 || dispersion_fwhm_ps < 0) {
    throw std::domain_error("combined_spread: widths must be non-negative");
  }
  return std::sqrt(coherence_fwhm_ps * coherence_fwhm_ps +
                   jitter_fwhm_ps * jitter_fwhm_ps +
                   dispersion_fwhm_ps * dispersion_fwhm_ps);
}

double dispersion_spread(double spectral_width_nm, double dispersion_ps_per_nm_km,
                         double length_km) {
  if (spectral_width_nm < 0) {
    throw std::domain_error("dispersion_spread: spectral width must be non-negative");
  }
  if (length_km < 0) {
    throw std::domain_error("dispersion_spread: length must be non-negative");
  }
  // Sign is preserved: anomalous vs normal dispersion shift in opposite
  // directions. Magnitude is taken where a width is needed.
  return spectral_width_nm * dispersion_ps_per_nm_km * length_km;
}

double bandwidth_to_wavelength_width(double width_ghz, double center_nm) {
  if (width_ghz < 0) {
    throw std::domain_error("bandwidth_to_wavelength_width: width must be non-negative");
  }
  if (center_nm <= 0) {
    throw std::domain_error("bandwidth_to_wavelength_width: center wavelength must be positive");
  }
  // d_lambda = lambda0^2 dnu / c; nm^2 * GHz / (m/s) -> nm needs 1e-9 * 1e9 = 1.
  return center_nm * center_nm * width_ghz / kSpeedOfLightMPerS;
}

double wavelength_width_to_bandwidth(double width_nm, double center_nm) {
  if (width_nm < 0) {
    throw std::domain_error("wavelength_width_to_bandwidth: width must be non-negative");
  }
  if (center_nm <= 0) {
    throw std::domain_error("wavelength_width_to_bandwidth: center wavelength must be positive");
  }
  return width_nm * kSpeedOfLightMPerS / (center_nm * center_nm);
}

double coherence_fwhm_from_bandwidth(double width_ghz) {
  if (width_ghz <= 0) {
    throw std::domain_error("coherence_fwhm_from_bandwidth: width must be positive");
  }
  // dt[ps] * dnu[GHz] = 1000 * (2 ln 2 / pi) for Gaussian FWHM pairs.
  return 1e3 * kGaussianTimeBandwidth / width_ghz;
}

double db_to_transmission(double loss_db) {
  return std::pow(10.0, -loss_db / 10.0);
}

double transmission_to_db(double transmission) {
  if (transmission <= 0 || transmission > 1) {
    throw std::domain_error("transmission_to_db: transmission must be in (0,1]");
  }
  return -10.0 * std::log10(transmission);
}

double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("binary_entropy: argument must be in [0,1]");
  }
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

double klyshko_efficiency(double coincidences_cps, double partner_singles_cps,
                          double partner_noise_cps) {
  if (coincidences_cps < 0) {
    throw std::domain_error("klyshko_efficiency: coincidence rate must be non-negative");
  }
  const double corrected = partner_singles_cps - partner_noise_cps;
  if (corrected <= 0) {
    throw std::domain_error("klyshko_efficiency: corrected partner singles must be positive");
  }
  return coincidences_cps / corrected;
}

EnergyBalance energy_conservation_check(double signal_nm, double idler_nm,
                                        double pump_nm, double rel_tolerance) {
  if (signal_nm <= 0 || idler_nm <= 0 || pump_nm <= 0) {
    throw std::domain_error("energy_conservation_check: wavelengths must be positive");
  }
  const double lhs = 1.0 / signal_nm + 1.0 / idler_nm;
  const double rhs = 1.0 / pump_nm;
  EnergyBalance out;
  out.relative_error = std::abs(lhs - rhs) / rhs;
  out.within_tolerance = out.relative_error <= rel_tolerance;
  return out;
}

double arm_fiber_dispersion(const ArmConfig& arm) {
  double sum = 0.0;
  for (const auto& seg : arm.segments) {
    sum += seg.dispersion_ps_per_nm_km * seg.length_km;
  }
  return sum;
}

double arm_total_dispersion(const ArmConfig& arm) {
  double sum = arm_fiber_dispersion(arm);
  if (arm.compensator) sum += arm.compensator->dispersion_ps_per_nm;
  return sum;
}

double arm_loss_db(const ArmConfig& arm) {
  double db = arm.extra_loss_db;
  for (const auto& seg : arm.segments) {
    db += seg.attenuation_db_per_km * seg.length_km;
  }
  if (arm.compensator) db += arm.compensator->insertion_loss_db;
  return db;
}

double nonlocal_dispersion_sum(const ArmConfig& arm_a, const ArmConfig& arm_b) {
  // Fiber terms and compensator terms are summed separately so that a
  // compensator equal to the negated fiber sum cancels without rounding.
  const double fiber = arm_fiber_dispersion(arm_a) + arm_fiber_dispersion(arm_b);
  double comp = 0.0;
  if (arm_a.compensator) comp += arm_a.compensator->dispersion_ps_per_nm;
  if (arm_b.compensator) comp += arm_b.compensator->dispersion_ps_per_nm;
  return fiber + comp;
}

double nonlocal_dispersion(const ArmConfig& arm_a, const ArmConfig& arm_b,
                           double spectral_width_nm) {
  if (spectral_width_nm < 0) {
    throw std::domain_error("nonlocal_dispersion: spectral width must be non-negative");
  }
  return spectral_width_nm * std::abs(nonlocal_dispersion_sum(arm_a, arm_b));
}

double LinkScenario::effective_width_nm() const {
  return effective_spectral_width_nm.value_or(spectrum.width_nm);
}

double LinkScenario::coherence_fwhm() const {
  if (coherence_fwhm_ps) return *coherence_fwhm_ps;
  const double ghz = wavelength_width_to_bandwidth(effective_width_nm(), spectrum.center_nm);
  return coherence_fwhm_from_bandwidth(ghz);
}

namespace {

void validate_arm(const ArmConfig& arm, const char* name) {
  const std::string prefix = std::string("scenario: arm ") + name + ": ";
  for (const auto& seg : arm.segments) {
    if (seg.length_km < 0) throw std::domain_error(prefix + "segment length must be non-negative");
    if (seg.attenuation_db_per_km < 0) {
      throw std::domain_error(prefix + "attenuation must be non-negative");
    }
  }
  if (arm.compensator) {
    if (arm.compensator->insertion_loss_db < 0) {
      throw std::domain_error(prefix + "compensator insertion loss must be non-negative");
    }
    if (arm.compensator->dispersion_ps_per_nm < arm.compensator->range_min_ps_per_nm ||
        arm.compensator->dispersion_ps_per_nm > arm.compensator->range_max_ps_per_nm) {
      throw std::domain_error(prefix + "compensator dispersion outside its tuning range");
    }
    if (!(arm.compensator->step_ps_per_nm > 0)) {
      throw std::domain_error(prefix + "compensator step must be positive");
    }
  }
  if (arm.extra_loss_db < 0) throw std::domain_error(prefix + "extra loss must be non-negative");
  if (arm.detector.jitter_fwhm_ps < 0) {
    throw std::domain_error(prefix + "detector jitter must be non-negative");
  }
  if (arm.detector.dark_count_cps < 0) {
    throw std::domain_error(prefix + "dark count rate must be non-negative");
  }
}

}  // namespace

void LinkScenario::validate() const {
  if (brightness_cps < 0) {
    throw std::domain_error("scenario: brightness must be non-negative");
  }
  if (!(optical_error >= 0.0 && optical_error <= 0.5)) {
    throw std::domain_error("scenario: optical error must be in [0, 0.5]");
  }
  if (spectrum.center_nm <= 0) {
    throw std::domain_error("scenario: center wavelength must be positive");
  }
  if (spectrum.width_nm <= 0) {
    throw std::domain_error("scenario: spectral width must be positive");
  }
  if (effective_spectral_width_nm && *effective_spectral_width_nm <= 0) {
    throw std::domain_error("scenario: effective spectral width must be positive");
  }
  if (coherence_fwhm_ps && *coherence_fwhm_ps < 0) {
    throw std::domain_error("scenario: coherence time must be non-negative");
  }
  if (error_correction_efficiency < 1.0) {
    throw std::domain_error("scenario: error correction efficiency must be >= 1");
  }
  validate_arm(arm_a, "A");
  validate_arm(arm_b, "B");
}

TimingBudget scenario_timing_budget(const LinkScenario& s) {
  TimingBudget b;
  b.coherence_fwhm_ps = s.coherence_fwhm();
  const double ja = s.arm_a.detector.jitter_fwhm_ps;
  const double jb = s.arm_b.detector.jitter_fwhm_ps;
  b.jitter_fwhm_ps = std::sqrt(ja * ja + jb * jb);
  b.dispersion_fwhm_ps = nonlocal_dispersion(s.arm_a, s.arm_b, s.effective_width_nm());
  b.total_fwhm_ps = combined_spread(b.coherence_fwhm_ps, b.jitter_fwhm_ps, b.dispersion_fwhm_ps);
  return b;
}

}  // namespace qkdsim
