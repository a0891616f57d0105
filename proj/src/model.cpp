#include "qkdsim/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "qkdsim/errors.hpp"

namespace qkdsim {

void ModelParams::validate() const {
  if (brightness_cps < 0) throw std::domain_error("model: brightness must be non-negative");
  if (!(eta_a > 0 && eta_a <= 1) || !(eta_b > 0 && eta_b <= 1)) {
    throw std::domain_error("model: efficiencies must be in (0,1]");
  }
  if (dark_a_cps < 0 || dark_b_cps < 0) {
    throw std::domain_error("model: dark count rates must be non-negative");
  }
  if (!(optical_error >= 0 && optical_error <= 0.5)) {
    throw std::domain_error("model: optical error must be in [0, 0.5]");
  }
  if (jitter_fwhm_ps < 0 || coherence_fwhm_ps < 0) {
    throw std::domain_error("model: timing widths must be non-negative");
  }
  if (error_correction_efficiency < 1.0) {
    throw std::domain_error("model: error correction efficiency must be >= 1");
  }
  if (!(clipping_factor > 0 && clipping_factor <= 1)) {
    throw std::domain_error("model: clipping factor must be in (0,1]");
  }
}

double model_delta_t(const ModelParams& p, double dispersion_fwhm_ps) {
  return combined_spread(p.coherence_fwhm_ps, p.jitter_fwhm_ps, dispersion_fwhm_ps);
}

double accidental_rate(const ModelParams& p, double t_cc_ps) {
  if (t_cc_ps < 0) throw std::domain_error("accidental_rate: window must be non-negative");
  const double singles_a = p.brightness_cps * p.eta_a + 2.0 * p.dark_a_cps;
  const double singles_b = p.brightness_cps * p.eta_b + 2.0 * p.dark_b_cps;
  return singles_a * singles_b * t_cc_ps * 1e-12;
}

double model_cc_true(const ModelParams& p) {
  return p.clipping_factor * p.brightness_cps * p.eta_a * p.eta_b;
}

double model_cc_tot(const ModelParams& p, double dispersion_fwhm_ps) {
  const double cc = model_cc_true(p);
  if (!p.accidentals_in_total) return cc;
  return cc + accidental_rate(p, model_delta_t(p, dispersion_fwhm_ps));
}

double model_qber(const ModelParams& p, double dispersion_fwhm_ps) {
  const double cc = model_cc_true(p);
  const double xi = accidental_rate(p, model_delta_t(p, dispersion_fwhm_ps));
  const double denom = cc + xi;
  if (denom <= 0) throw NumericalError("model_qber: no coincidences at all");
  // True pairs err with the optical error; accidentals are uncorrelated and
  // err half the time.
  return (cc * p.optical_error + xi / 2.0) / denom;
}

ModelPoint model_key_rate(const ModelParams& p, double dispersion_fwhm_ps) {
  p.validate();
  ModelPoint out;
  out.sigma_d_ps = dispersion_fwhm_ps;
  out.delta_t_ps = model_delta_t(p, dispersion_fwhm_ps);
  out.t_cc_ps = out.delta_t_ps;
  out.cc_tot_cps = model_cc_tot(p, dispersion_fwhm_ps);
  out.qber = model_qber(p, dispersion_fwhm_ps);
  const double f = p.error_correction_efficiency;
  out.r_s_raw = out.cc_tot_cps * (1.0 - (1.0 + f) * binary_entropy(out.qber));
  out.r_s = std::max(0.0, out.r_s_raw);
  return out;
}

void DcmSweepSpec::validate() const {
  if (spectral_width_nm <= 0) {
    throw std::domain_error("dcm sweep: spectral width must be positive");
  }
  if (step_ps_per_nm <= 0) throw std::domain_error("dcm sweep: step must be positive");
  if (max_ps_per_nm < min_ps_per_nm) throw std::domain_error("dcm sweep: max must be >= min");
}

std::vector<DcmSweepRow> dcm_sweep(const ModelParams& p, const DcmSweepSpec& spec) {
  p.validate();
  spec.validate();
  const auto n = static_cast<std::size_t>(
      std::llround((spec.max_ps_per_nm - spec.min_ps_per_nm) / spec.step_ps_per_nm) + 1);
  std::vector<DcmSweepRow> rows;
  rows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    DcmSweepRow row;
    row.dcm_ps_per_nm = spec.min_ps_per_nm + static_cast<double>(k) * spec.step_ps_per_nm;
    const double total = spec.fiber_dispersion_ps_per_nm + row.dcm_ps_per_nm +
                         spec.calibration_offset_ps_per_nm;
    row.point = model_key_rate(p, spec.spectral_width_nm * std::abs(total));
    rows.push_back(row);
  }
  return rows;
}

LocalComparison local_compensation_comparison(const ModelParams& p,
                                              double second_dcm_loss_db) {
  if (second_dcm_loss_db < 0) {
    throw std::domain_error("local comparison: insertion loss must be non-negative");
  }
  p.validate();
  LocalComparison out;
  // The given efficiencies already include the one nonlocal module.
  out.nonlocal = model_key_rate(p, 0.0);
  // Local compensation needs a module in the other arm too; same dispersion
  // null, extra insertion loss.
  ModelParams local = p;
  local.eta_b = p.eta_b * db_to_transmission(second_dcm_loss_db);
  out.local = model_key_rate(local, 0.0);
  return out;
}

BrightnessOptimum optimize_brightness(const std::function<double(double)>& key_rate_of_b,
                                      double log10_min, double log10_max) {
  if (!(log10_max > log10_min)) {
    throw std::domain_error("optimize_brightness: empty range");
  }
  // Coarse grid first: R_s(log10 B) vanishes identically below threshold and
  // above the error ceiling, so a bare ternary search can land on a zero
  // plateau and discard the interior peak.
  constexpr double kCoarseStep = 0.05;
  const int n = static_cast<int>(std::ceil((log10_max - log10_min) / kCoarseStep)) + 1;
  double best_lg = log10_min;
  double best_r = -1.0;
  for (int i = 0; i < n; ++i) {
    const double lg = std::min(log10_min + i * kCoarseStep, log10_max);
    const double r = key_rate_of_b(std::pow(10.0, lg));
    if (r > best_r) {
      best_r = r;
      best_lg = lg;
    }
  }
  BrightnessOptimum out;
  if (best_r <= 0.0) {
    out.brightness_cps = std::pow(10.0, (log10_min + log10_max) / 2.0);
    out.r_s = 0.0;
    out.no_key = true;
    return out;
  }
  double lo = std::max(log10_min, best_lg - kCoarseStep);
  double hi = std::min(log10_max, best_lg + kCoarseStep);
  while (hi - lo > 1e-4) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (key_rate_of_b(std::pow(10.0, m1)) < key_rate_of_b(std::pow(10.0, m2))) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  const double lg = (lo + hi) / 2.0;
  out.brightness_cps = std::pow(10.0, lg);
  out.r_s = key_rate_of_b(out.brightness_cps);
  out.no_key = false;
  return out;
}

void DistanceSweepSpec::validate() const {
  if (spectral_widths_ghz.empty()) {
    throw std::domain_error("distance sweep: need at least one spectral width");
  }
  for (double w : spectral_widths_ghz) {
    if (w <= 0) throw std::domain_error("distance sweep: spectral widths must be positive");
  }
  if (center_nm <= 0) throw std::domain_error("distance sweep: center wavelength must be positive");
  if (attenuation_db_per_km < 0) {
    throw std::domain_error("distance sweep: attenuation must be non-negative");
  }
  if (dark_count_cps < 0) throw std::domain_error("distance sweep: dark rate must be non-negative");
  if (!(optical_error >= 0 && optical_error <= 0.5)) {
    throw std::domain_error("distance sweep: optical error must be in [0, 0.5]");
  }
  if (jitter_fwhm_ps < 0) throw std::domain_error("distance sweep: jitter must be non-negative");
  if (error_correction_efficiency < 1.0) {
    throw std::domain_error("distance sweep: error correction efficiency must be >= 1");
  }
  if (!(start_km > 0) || !(step_km > 0) || !(max_km >= start_km)) {
    throw std::domain_error("distance sweep: invalid distance grid");
  }
  if (min_key_rate < 0) throw std::domain_error("distance sweep: rate floor must be non-negative");
}

namespace {

struct WidthDerived {
  double coherence_fwhm_ps = 0.0;
  double width_nm = 0.0;
};

WidthDerived derive_width(const DistanceSweepSpec& spec, double width_ghz) {
  WidthDerived w;
  w.coherence_fwhm_ps = coherence_fwhm_from_bandwidth(width_ghz);
  w.width_nm = bandwidth_to_wavelength_width(width_ghz, spec.center_nm);
  return w;
}

// Optimized-brightness model point at one distance; the fiber is split
// equally between the arms.
DistanceRow evaluate_distance(const DistanceSweepSpec& spec, const WidthDerived& w,
                              bool compensated, double distance_km) {
  const double eta_arm =
      db_to_transmission(spec.attenuation_db_per_km * distance_km / 2.0);
  const double sigma_d =
      compensated ? 0.0
                  : w.width_nm * spec.dispersion_ps_per_nm_km * distance_km;
  ModelParams p;
  p.eta_a = eta_arm;
  p.eta_b = eta_arm;
  p.dark_a_cps = spec.dark_count_cps;
  p.dark_b_cps = spec.dark_count_cps;
  p.optical_error = spec.optical_error;
  p.jitter_fwhm_ps = spec.jitter_fwhm_ps;
  p.coherence_fwhm_ps = w.coherence_fwhm_ps;
  p.error_correction_efficiency = spec.error_correction_efficiency;

  const BrightnessOptimum opt = optimize_brightness([&](double b) {
    ModelParams q = p;
    q.brightness_cps = b;
    return model_key_rate(q, sigma_d).r_s;
  });

  DistanceRow row;
  row.distance_km = distance_km;
  row.brightness_cps = opt.brightness_cps;
  ModelParams q = p;
  q.brightness_cps = opt.brightness_cps;
  row.point = model_key_rate(q, sigma_d);
  if (opt.no_key) {
    row.point.r_s = 0.0;
    row.point.r_s_raw = std::min(row.point.r_s_raw, 0.0);
  }
  return row;
}

}  // namespace

DistanceCurve distance_sweep_one(const DistanceSweepSpec& spec, double width_ghz,
                                 bool compensated, int threads) {
  spec.validate();
  const WidthDerived w = derive_width(spec, width_ghz);

  DistanceCurve curve;
  curve.spectral_width_ghz = width_ghz;
  curve.compensated = compensated;

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned n_threads = threads > 0 ? static_cast<unsigned>(threads) : hw;
  const std::size_t block = std::max<std::size_t>(n_threads, 1);

  // Distances are evaluated in fixed-size blocks (in parallel within each
  // block) and rows are appended in grid order until the rate floor.
  double base = spec.start_km;
  while (base <= spec.max_km) {
    std::vector<double> ds;
    for (std::size_t k = 0; k < block; ++k) {
      const double dk = base + static_cast<double>(k) * spec.step_km;
      if (dk > spec.max_km) break;
      ds.push_back(dk);
    }
    if (ds.empty()) break;
    std::vector<DistanceRow> rows(ds.size());
    if (n_threads <= 1 || ds.size() <= 1) {
      for (std::size_t k = 0; k < ds.size(); ++k) {
        rows[k] = evaluate_distance(spec, w, compensated, ds[k]);
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      const unsigned use = std::min<unsigned>(n_threads, static_cast<unsigned>(ds.size()));
      pool.reserve(use);
      for (unsigned t = 0; t < use; ++t) {
        pool.emplace_back([&]() {
          for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= ds.size()) return;
            rows[k] = evaluate_distance(spec, w, compensated, ds[k]);
          }
        });
      }
      for (auto& th : pool) th.join();
    }
    for (auto& row : rows) {
      if (row.point.r_s < spec.min_key_rate) return curve;
      curve.rows.push_back(std::move(row));
    }
    base += static_cast<double>(block) * spec.step_km;
  }
  return curve;
}

std::vector<DistanceCurve> distance_sweep(const DistanceSweepSpec& spec, int threads) {
  spec.validate();
  std::vector<DistanceCurve> out;
  for (double wghz : spec.spectral_widths_ghz) {
    out.push_back(distance_sweep_one(spec, wghz, true, threads));
    out.push_back(distance_sweep_one(spec, wghz, false, threads));
  }
  return out;
}

std::function<double(double)> distance_evaluator(const DistanceSweepSpec& spec,
                                                 double width_ghz, bool compensated) {
  spec.validate();
  const WidthDerived w = derive_width(spec, width_ghz);
  return [spec, w, compensated](double distance_km) {
    return evaluate_distance(spec, w, compensated, distance_km).point.r_s;
  };
}

double max_distance(const std::function<double(double)>& key_rate_of_km, double start_km,
                    double step_km, double max_km, double epsilon) {
  if (!(start_km > 0) || !(step_km > 0) || !(max_km >= start_km)) {
    throw std::domain_error("max_distance: invalid distance grid");
  }
  if (epsilon < 0) throw std::domain_error("max_distance: epsilon must be non-negative");

  // March outward to bracket the crossing, then bisect. Assumes the rate
  // decays monotonically past its maximum.
  double last_above = -1.0;
  double first_below = -1.0;
  for (double dist = start_km; dist <= max_km + 1e-9; dist += step_km) {
    if (key_rate_of_km(dist) > epsilon) {
      last_above = dist;
    } else if (last_above >= 0) {
      first_below = dist;
      break;
    }
  }
  if (last_above < 0) {
    throw NoKeyError("max_distance: no probed distance has a positive key rate");
  }
  if (first_below < 0) return std::min(last_above, max_km);

  double lo = last_above, hi = first_below;
  while (hi - lo > 0.01) {
    const double mid = (lo + hi) / 2.0;
    (key_rate_of_km(mid) > epsilon ? lo : hi) = mid;
  }
  return (lo + hi) / 2.0;
}

}  // namespace qkdsim
