#pragma once

// Coincidence analysis of two time-tag streams: cross-correlation histogram,
// Gaussian peak fit, one-to-one coincidence pairing inside a window, QBER
// tallies, and secure-key-rate evaluation with window optimization.

#include <cstdint>
#include <optional>
#include <vector>

#include "qkdsim/timetag.hpp"

namespace qkdsim {

enum class Normalization { Raw, PerSecond };

struct Histogram {
  std::int64_t start_delay_ps = 0;  // delay represented by bin 0's left edge
  std::int64_t bin_width_ps = 1;
  std::vector<std::uint64_t> counts;
  double duration_s = 0.0;
  Normalization normalization = Normalization::Raw;

  double bin_center(std::size_t k) const {
    return static_cast<double>(start_delay_ps + static_cast<std::int64_t>(k) * bin_width_ps) +
           static_cast<double>(bin_width_ps - 1) / 2.0;
  }
  // Bin value under the histogram's normalization; raw counts are preserved
  // either way, so re-normalizing conserves the total.
  double bin_value(std::size_t k) const {
    if (normalization == Normalization::PerSecond && duration_s > 0) {
      return static_cast<double>(counts[k]) / duration_s;
    }
    return static_cast<double>(counts[k]);
  }
};

// Histogram of arrival-time differences t_A - t_B over
// [center - half_range, center + half_range], inclusive. Inputs must be
// sorted by timestamp. O(N + M + bins).
Histogram cross_correlate(const TagStream& a, const TagStream& b, double duration_s,
                          std::int64_t bin_width_ps = 1, std::int64_t center_ps = 0,
                          std::int64_t half_range_ps = 2000);

struct GaussianFit {
  double amplitude = 0.0;  // counts above floor at the peak
  double center_ps = 0.0;
  double fwhm_ps = 0.0;
  double floor = 0.0;  // flat accidental background per bin
  double rms_residual = 0.0;
  int iterations = 0;
};

// Levenberg-Marquardt fit of amplitude * exp(-4 ln2 (x-mu)^2 / w^2) + floor.
// Throws FitError when the histogram has no significant peak (max below
// floor + 5 sqrt(floor+1)), when the iteration does not converge, or when the
// normal equations are degenerate.
GaussianFit fit_gaussian(const Histogram& hist);

struct CoincidenceTally {
  std::uint64_t correct_hv = 0;
  std::uint64_t erroneous_hv = 0;
  std::uint64_t correct_da = 0;
  std::uint64_t erroneous_da = 0;
  std::uint64_t mixed_basis = 0;  // paired but basis mismatch; excluded from QBER
  double duration_s = 0.0;

  std::uint64_t same_basis() const {
    return correct_hv + erroneous_hv + correct_da + erroneous_da;
  }
  std::uint64_t total() const { return same_basis() + mixed_basis; }
};

// Greedy one-to-one pairing: tags a_i, b_j are coincident when
// |(t_a - t_b) - delay| <= t_cc / 2, each tag used at most once, earliest
// compatible partner first. Inputs must be sorted. O(N + M).
CoincidenceTally count_coincidences(const TagStream& a, const TagStream& b,
                                    std::int64_t delay_ps, std::int64_t t_cc_ps,
                                    double duration_s);

// Error fraction of same-basis coincidences. Throws NumericalError when there
// are none.
double qber(const CoincidenceTally& t);

// Mean of the per-basis error fractions (bases with zero counts are skipped).
double qber_basis_averaged(const CoincidenceTally& t);

// R = rate * (1 - (1+f) H2(E)), before clamping. rate >= 0, E in [0,1], f >= 1.
double secure_key_rate_raw(double coincidence_rate_cps, double qber, double f);

// Clamped at zero: no key is distilled once the error term exceeds unity.
double secure_key_rate(double coincidence_rate_cps, double qber, double f);

struct WindowOptimizerOptions {
  std::int64_t bin_width_ps = 1;
  std::int64_t half_range_ps = 2000;
  std::int64_t center_ps = 0;          // histogram center (search midpoint)
  double max_fwhm_factor = 8.0;        // window grid extends to this x FWHM
  double error_correction_efficiency = 1.1;
};

struct WindowReport {
  GaussianFit fit;
  std::int64_t delay_ps = 0;     // rounded fitted peak position
  std::int64_t t_cc_ps = 0;      // best window width
  double cc_rate_cps = 0.0;      // same-basis coincidence rate at best window
  double qber = 0.0;             // basis-averaged
  std::optional<double> qber_hv;
  std::optional<double> qber_da;
  double r_s_raw = 0.0;
  double r_s = 0.0;              // clamped
  bool no_key = false;           // true when every window gave zero key
};

// Fits the correlation peak, then scans even window widths 2,4,... up to
// max_fwhm_factor x FWHM (plus the rounded FWHM itself) and returns the window
// maximizing the secure-key rate; ties prefer the smaller window. If the rate
// is zero everywhere, reports the window maximizing the coincidence rate with
// no_key set. Propagates FitError from the peak fit.
WindowReport optimize_window(const TagStream& a, const TagStream& b, double duration_s,
                             const WindowOptimizerOptions& options = {});

}  // namespace qkdsim
