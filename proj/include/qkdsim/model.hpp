#pragma once

// Closed-form performance model of the link: coincidence rate, accidentals,
// QBER and secure-key rate as functions of the timing budget, plus parameter
// sweeps (compensator setting, source brightness, link distance).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qkdsim/physics.hpp"

namespace qkdsim {

// Fraction of a Gaussian coincidence peak inside a window of one FWHM,
// erf(sqrt(ln 2)).
inline constexpr double kFwhmWindowFraction = 0.7609681085504904;

struct ModelParams {
  double brightness_cps = 0.0;
  double eta_a = 0.0;  // linear channel+detector efficiency, arm A
  double eta_b = 0.0;
  double dark_a_cps = 0.0;  // per-detector dark rate, arm A
  double dark_b_cps = 0.0;
  double optical_error = 0.0;
  double jitter_fwhm_ps = 0.0;     // combined two-detector jitter
  double coherence_fwhm_ps = 0.0;
  double error_correction_efficiency = 1.1;
  // Fraction of the peak captured by the window (clicks in the tails fall
  // outside); the default is the one-FWHM-window value.
  double clipping_factor = kFwhmWindowFraction;
  // Accidentals inflate the sifted rate as well as the error rate (they are
  // real detector clicks); set false to count only the true-pair rate.
  bool accidentals_in_total = true;

  void validate() const;  // throws std::domain_error
};

// Quadrature total of the model's timing terms and a dispersion spread, ps.
double model_delta_t(const ModelParams& p, double dispersion_fwhm_ps);

// Accidental coincidence rate inside a window t_cc:
// xi = (B eta_A + 2 DC_A)(B eta_B + 2 DC_B) t_cc. The factor 2 counts both
// detectors of an arm firing uncorrelated clicks.
double accidental_rate(const ModelParams& p, double t_cc_ps);

// True-pair coincidence rate with the window set to one FWHM of the
// coincidence peak: CC = erf(sqrt(ln2)) B eta_A eta_B.
double model_cc_true(const ModelParams& p);

// Total detected coincidence rate at t_cc = Delta_T (plus accidentals when
// accidentals_in_total).
double model_cc_tot(const ModelParams& p, double dispersion_fwhm_ps);

// E = (CC_true e_o + xi/2) / (CC_true + xi) at t_cc = Delta_T.
double model_qber(const ModelParams& p, double dispersion_fwhm_ps);

struct ModelPoint {
  double sigma_d_ps = 0.0;
  double delta_t_ps = 0.0;
  double t_cc_ps = 0.0;  // = delta_t (window convention)
  double cc_tot_cps = 0.0;
  double qber = 0.0;
  double r_s_raw = 0.0;
  double r_s = 0.0;
};

// Full model evaluation at one dispersion spread.
ModelPoint model_key_rate(const ModelParams& p, double dispersion_fwhm_ps);

// ---------------------------------------------------------------------------
// Compensator sweep

struct DcmSweepSpec {
  double fiber_dispersion_ps_per_nm = 0.0;  // two-arm fiber sum D_A L_A + D_B L_B
  double spectral_width_nm = 0.0;
  double min_ps_per_nm = 0.0;
  double max_ps_per_nm = 0.0;
  double step_ps_per_nm = 0.0;
  // Added to the swept value before evaluating, to model a mis-calibrated
  // module without moving the grid.
  double calibration_offset_ps_per_nm = 0.0;

  void validate() const;
};

struct DcmSweepRow {
  double dcm_ps_per_nm = 0.0;
  ModelPoint point;
};

// Evaluates the model across compensator settings; sigma_D =
// sigma_lambda |fiber + dcm + offset|.
std::vector<DcmSweepRow> dcm_sweep(const ModelParams& p, const DcmSweepSpec& spec);

// Nonlocal compensation needs one module; compensating each arm locally
// needs a second one, whose insertion loss lands in the so-far-module-free
// arm. Both settings null the dispersion; the rates differ by that loss.
struct LocalComparison {
  ModelPoint nonlocal;  // params as given, sigma_D = 0
  ModelPoint local;     // second module's loss applied to eta_b, sigma_D = 0
};
LocalComparison local_compensation_comparison(const ModelParams& p,
                                              double second_dcm_loss_db);

// ---------------------------------------------------------------------------
// Brightness optimization and distance sweeps

struct BrightnessOptimum {
  double brightness_cps = 0.0;
  double r_s = 0.0;
  bool no_key = false;  // true when the rate is zero over the whole range
};

// Maximizes R_s over log10(B) in [min,max] decades: coarse scan on a 0.05
// decade grid brackets the peak (the landscape has zero plateaus at both
// ends where plain ternary search would stall), then ternary refinement
// narrows the bracket below 1e-4 decades.
BrightnessOptimum optimize_brightness(const std::function<double(double)>& key_rate_of_b,
                                      double log10_min = 5.0, double log10_max = 11.0);

struct DistanceSweepSpec {
  std::vector<double> spectral_widths_ghz;
  double center_nm = 1550.0;
  double attenuation_db_per_km = 0.2;
  double dispersion_ps_per_nm_km = 18.0;
  double dark_count_cps = 100.0;
  double optical_error = 0.01;
  double jitter_fwhm_ps = 20.0;
  double error_correction_efficiency = 1.1;
  double start_km = 10.0;
  double step_km = 10.0;
  double max_km = 2000.0;
  double min_key_rate = 1e-3;  // row emission floor, bit/s

  void validate() const;
};

struct DistanceRow {
  double distance_km = 0.0;
  double brightness_cps = 0.0;  // optimized per point
  ModelPoint point;
};

struct DistanceCurve {
  double spectral_width_ghz = 0.0;
  bool compensated = false;
  std::vector<DistanceRow> rows;
};

// Model evaluated on symmetric arms (L/2 of fiber each) with per-point
// brightness optimization. Compensated curves null the dispersion term;
// uncompensated ones carry sigma_D = sigma_lambda * D * L. Rows stop at the
// first distance whose optimized rate falls below min_key_rate.
DistanceCurve distance_sweep_one(const DistanceSweepSpec& spec, double width_ghz,
                                 bool compensated, int threads = 0);
std::vector<DistanceCurve> distance_sweep(const DistanceSweepSpec& spec, int threads = 0);

// Largest distance with key_rate_of_km(L) > epsilon, by marching in step_km
// increments from start_km and bisecting the final bracket to 0.01 km. The
// curve must be positive somewhere and decay monotonically past its maximum;
// throws NoKeyError when no probed distance yields key. Capped at max_km.
double max_distance(const std::function<double(double)>& key_rate_of_km, double start_km,
                    double step_km, double max_km, double epsilon);

// Evaluator used by the sweep: optimized-brightness key rate at distance L
// for one width/compensation choice of the sweep parameters.
std::function<double(double)> distance_evaluator(const DistanceSweepSpec& spec,
                                                 double width_ghz, bool compensated);

}  // namespace qkdsim
