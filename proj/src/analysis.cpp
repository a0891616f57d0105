#include "qkdsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "qkdsim/errors.hpp"
#include "qkdsim/physics.hpp"

namespace qkdsim {

namespace {

constexpr double kFourLn2 = 2.772588722239781;  // 4 ln 2

void check_sorted(const TagStream& s, const char* who) {
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].timestamp_ps < s[i - 1].timestamp_ps) {
      throw InputError(std::string(who) + ": tag stream not sorted by timestamp");
    }
  }
}

double median_count(const std::vector<std::uint64_t>& v) {
  std::vector<std::uint64_t> tmp(v);
  const std::size_t mid = tmp.size() / 2;
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid), tmp.end());
  return static_cast<double>(tmp[mid]);
}

// Solves the symmetric 4x4 system in place; returns false when singular.
bool solve4(double m[4][4], double rhs[4], double out[4]) {
  int idx[4] = {0, 1, 2, 3};
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(m[idx[r]][col]) > std::abs(m[idx[piv]][col])) piv = r;
    }
    std::swap(idx[col], idx[piv]);
    const double diag = m[idx[col]][col];
    if (std::abs(diag) < 1e-300) return false;
    for (int r = col + 1; r < 4; ++r) {
      const double f = m[idx[r]][col] / diag;
      for (int c = col; c < 4; ++c) m[idx[r]][c] -= f * m[idx[col]][c];
      rhs[idx[r]] -= f * rhs[idx[col]];
    }
  }
  for (int col = 3; col >= 0; --col) {
    double acc = rhs[idx[col]];
    for (int c = col + 1; c < 4; ++c) acc -= m[idx[col]][c] * out[c];
    out[col] = acc / m[idx[col]][col];
  }
  return true;
}

}  // namespace

Histogram cross_correlate(const TagStream& a, const TagStream& b, double duration_s,
                          std::int64_t bin_width_ps, std::int64_t center_ps,
                          std::int64_t half_range_ps) {
  if (bin_width_ps <= 0) throw std::domain_error("cross_correlate: bin width must be positive");
  if (half_range_ps < 0) throw std::domain_error("cross_correlate: half range must be non-negative");
  check_sorted(a, "cross_correlate");
  check_sorted(b, "cross_correlate");

  Histogram h;
  h.bin_width_ps = bin_width_ps;
  h.start_delay_ps = center_ps - half_range_ps;
  h.duration_s = duration_s;
  const std::int64_t span = 2 * half_range_ps + 1;  // integer delays covered
  h.counts.assign(static_cast<std::size_t>((span + bin_width_ps - 1) / bin_width_ps), 0);

  // For each a-tag the b-tags inside the delay window form a sliding range;
  // both cursors only move forward.
  std::size_t lo = 0;
  for (const auto& ta : a) {
    const std::int64_t bmin = ta.timestamp_ps - center_ps - half_range_ps;
    const std::int64_t bmax = ta.timestamp_ps - center_ps + half_range_ps;
    while (lo < b.size() && b[lo].timestamp_ps < bmin) ++lo;
    for (std::size_t j = lo; j < b.size() && b[j].timestamp_ps <= bmax; ++j) {
      const std::int64_t tau = ta.timestamp_ps - b[j].timestamp_ps;
      const auto bin = static_cast<std::size_t>((tau - h.start_delay_ps) / bin_width_ps);
      ++h.counts[bin];
    }
  }
  return h;
}

GaussianFit fit_gaussian(const Histogram& hist) {
  const auto& y = hist.counts;
  const std::size_t n = y.size();
  if (n < 5) throw FitError(FitError::Kind::Degenerate, "fit_gaussian: too few bins");

  // Initial guesses from the data: flat floor at the median, peak at the
  // maximum bin, width from the half-maximum crossings.
  const double floor0 = median_count(y);
  std::size_t ipeak = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (y[i] > y[ipeak]) ipeak = i;
  }
  const double peak = static_cast<double>(y[ipeak]);
  const double amp0 = peak - floor0;
  if (amp0 <= 5.0 * std::sqrt(floor0 + 1.0)) {
    throw FitError(FitError::Kind::NoPeak,
                   "fit_gaussian: no significant peak above background (max " +
                       std::to_string(peak) + ", floor " + std::to_string(floor0) + ")");
  }
  const double half = floor0 + amp0 / 2.0;
  std::size_t left = ipeak, right = ipeak;
  while (left > 0 && static_cast<double>(y[left - 1]) >= half) --left;
  while (right + 1 < n && static_cast<double>(y[right + 1]) >= half) ++right;
  const double fwhm0 =
      std::max<double>(static_cast<double>(right - left + 1) * static_cast<double>(hist.bin_width_ps),
                       static_cast<double>(hist.bin_width_ps));

  double A = amp0, mu = hist.bin_center(ipeak), w = fwhm0, F = floor0;

  const auto sse_of = [&](double A_, double mu_, double w_, double F_) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = hist.bin_center(i) - mu_;
      const double e = std::exp(-kFourLn2 * dx * dx / (w_ * w_));
      const double r = static_cast<double>(y[i]) - (A_ * e + F_);
      sse += r * r;
    }
    return sse;
  };

  double lambda = 1e-3;
  double sse = sse_of(A, mu, w, F);
  int iter = 0;
  bool converged = false;
  for (; iter < 200; ++iter) {
    // Accumulate J^T J and J^T r for the current parameters.
    double jtj[4][4] = {};
    double jtr[4] = {};
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = hist.bin_center(i) - mu;
      const double e = std::exp(-kFourLn2 * dx * dx / (w * w));
      const double r = static_cast<double>(y[i]) - (A * e + F);
      const double dA = e;
      const double dmu = A * e * 2.0 * kFourLn2 * dx / (w * w);
      const double dw = A * e * 2.0 * kFourLn2 * dx * dx / (w * w * w);
      const double dF = 1.0;
      const double grad[4] = {dA, dmu, dw, dF};
      for (int p = 0; p < 4; ++p) {
        for (int q = 0; q < 4; ++q) jtj[p][q] += grad[p] * grad[q];
        jtr[p] += grad[p] * r;
      }
    }
    double m[4][4];
    for (int p = 0; p < 4; ++p) {
      for (int q = 0; q < 4; ++q) m[p][q] = jtj[p][q];
      m[p][p] *= 1.0 + lambda;
    }
    double rhs[4] = {jtr[0], jtr[1], jtr[2], jtr[3]};
    double step[4];
    if (!solve4(m, rhs, step)) {
      throw FitError(FitError::Kind::Degenerate, "fit_gaussian: singular normal equations");
    }
    const double An = A + step[0], mun = mu + step[1], wn = w + step[2], Fn = F + step[3];
    const double ssen = (wn != 0.0) ? sse_of(An, mun, wn, Fn)
                                    : std::numeric_limits<double>::infinity();
    if (ssen < sse) {
      double rel = 0.0;
      const double cur[4] = {A, mu, w, F};
      for (int p = 0; p < 4; ++p) {
        rel = std::max(rel, std::abs(step[p]) / (std::abs(cur[p]) + 1e-12));
      }
      const double gain = sse - ssen;
      A = An;
      mu = mun;
      w = wn;
      F = Fn;
      sse = ssen;
      lambda = std::max(lambda / 3.0, 1e-12);
      // Converged when the step is tiny or the objective stops moving; sparse
      // integer counts rarely let the step criterion alone fire.
      if (rel < 1e-8 || gain <= 1e-12 * (sse + 1.0)) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) {
        // Even the steepest-descent limit cannot improve the objective: the
        // current point is the minimum to working precision.
        converged = true;
        break;
      }
    }
  }
  if (!converged) {
    throw FitError(FitError::Kind::NotConverged,
                   "fit_gaussian: no convergence in " + std::to_string(iter) + " iterations");
  }
  w = std::abs(w);  // the model is even in w
  if (!(A > 0.0) || !(w > 0.0) || !std::isfinite(mu)) {
    throw FitError(FitError::Kind::Degenerate, "fit_gaussian: non-physical fit result");
  }

  GaussianFit fit;
  fit.amplitude = A;
  fit.center_ps = mu;
  fit.fwhm_ps = w;
  fit.floor = F;
  fit.rms_residual = std::sqrt(sse / static_cast<double>(n));
  fit.iterations = iter + 1;
  return fit;
}

CoincidenceTally count_coincidences(const TagStream& a, const TagStream& b,
                                    std::int64_t delay_ps, std::int64_t t_cc_ps,
                                    double duration_s) {
  if (t_cc_ps <= 0) throw std::domain_error("count_coincidences: window must be positive");
  check_sorted(a, "count_coincidences");
  check_sorted(b, "count_coincidences");

  CoincidenceTally tally;
  tally.duration_s = duration_s;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    // Compare 2*(tau - delay) against t_cc so odd windows need no rounding.
    const std::int64_t twice = 2 * (a[i].timestamp_ps - b[j].timestamp_ps - delay_ps);
    if (twice < -t_cc_ps) {
      ++i;
    } else if (twice > t_cc_ps) {
      ++j;
    } else {
      if (a[i].basis == b[j].basis) {
        const bool correct = a[i].outcome == b[j].outcome;
        if (a[i].basis == Basis::HV) {
          correct ? ++tally.correct_hv : ++tally.erroneous_hv;
        } else {
          correct ? ++tally.correct_da : ++tally.erroneous_da;
        }
      } else {
        ++tally.mixed_basis;
      }
      ++i;
      ++j;
    }
  }
  return tally;
}

double qber(const CoincidenceTally& t) {
  const std::uint64_t total = t.same_basis();
  if (total == 0) throw NumericalError("qber: no same-basis coincidences");
  return static_cast<double>(t.erroneous_hv + t.erroneous_da) / static_cast<double>(total);
}

double qber_basis_averaged(const CoincidenceTally& t) {
  double sum = 0.0;
  int nbases = 0;
  if (t.correct_hv + t.erroneous_hv > 0) {
    sum += static_cast<double>(t.erroneous_hv) /
           static_cast<double>(t.correct_hv + t.erroneous_hv);
    ++nbases;
  }
  if (t.correct_da + t.erroneous_da > 0) {
    sum += static_cast<double>(t.erroneous_da) /
           static_cast<double>(t.correct_da + t.erroneous_da);
    ++nbases;
  }
  if (nbases == 0) throw NumericalError("qber_basis_averaged: no same-basis coincidences");
  return sum / nbases;
}

double secure_key_rate_raw(double coincidence_rate_cps, double qber, double f) {
  if (coincidence_rate_cps < 0) {
    throw std::domain_error("secure_key_rate: rate must be non-negative");
  }
  if (f < 1.0) throw std::domain_error("secure_key_rate: efficiency factor must be >= 1");
  return coincidence_rate_cps * (1.0 - (1.0 + f) * binary_entropy(qber));
}

double secure_key_rate(double coincidence_rate_cps, double qber, double f) {
  return std::max(0.0, secure_key_rate_raw(coincidence_rate_cps, qber, f));
}

WindowReport optimize_window(const TagStream& a, const TagStream& b, double duration_s,
                             const WindowOptimizerOptions& options) {
  if (!(duration_s > 0)) throw std::domain_error("optimize_window: duration must be positive");
  WindowReport rep;
  const Histogram hist = cross_correlate(a, b, duration_s, options.bin_width_ps,
                                         options.center_ps, options.half_range_ps);
  rep.fit = fit_gaussian(hist);
  rep.delay_ps = std::llround(rep.fit.center_ps);

  // Candidate windows: even widths up to max_fwhm_factor x FWHM, plus the
  // rounded FWHM itself (the analytic t_cc = Delta_T convention).
  std::set<std::int64_t> grid;
  const std::int64_t t_max =
      std::max<std::int64_t>(2, std::llround(rep.fit.fwhm_ps * options.max_fwhm_factor));
  for (std::int64_t t = 2; t <= t_max; t += 2) grid.insert(t);
  grid.insert(std::max<std::int64_t>(1, std::llround(rep.fit.fwhm_ps)));

  bool have_best = false;
  double best_r = -1.0;
  CoincidenceTally best_tally;
  std::int64_t best_t = 0;
  double best_cc = -1.0;
  CoincidenceTally best_cc_tally;
  std::int64_t best_cc_t = 0;

  for (const std::int64_t t_cc : grid) {
    const CoincidenceTally tally = count_coincidences(a, b, rep.delay_ps, t_cc, duration_s);
    if (tally.same_basis() == 0) continue;
    const double rate = static_cast<double>(tally.same_basis()) / duration_s;
    const double e = qber_basis_averaged(tally);
    const double r = secure_key_rate(rate, e, options.error_correction_efficiency);
    if (rate > best_cc) {
      best_cc = rate;
      best_cc_tally = tally;
      best_cc_t = t_cc;
    }
    if (r > best_r) {
      best_r = r;
      best_tally = tally;
      best_t = t_cc;
      have_best = true;
    }
  }
  if (!have_best || best_r <= 0.0) {
    // No window distills key; report the one maximizing the coincidence rate.
    rep.no_key = true;
    if (best_cc < 0) {
      throw NumericalError("optimize_window: no same-basis coincidences in any window");
    }
    best_tally = best_cc_tally;
    best_t = best_cc_t;
  }

  rep.t_cc_ps = best_t;
  rep.cc_rate_cps = static_cast<double>(best_tally.same_basis()) / duration_s;
  rep.qber = qber_basis_averaged(best_tally);
  if (best_tally.correct_hv + best_tally.erroneous_hv > 0) {
    rep.qber_hv = static_cast<double>(best_tally.erroneous_hv) /
                  static_cast<double>(best_tally.correct_hv + best_tally.erroneous_hv);
  }
  if (best_tally.correct_da + best_tally.erroneous_da > 0) {
    rep.qber_da = static_cast<double>(best_tally.erroneous_da) /
                  static_cast<double>(best_tally.correct_da + best_tally.erroneous_da);
  }
  rep.r_s_raw = secure_key_rate_raw(rep.cc_rate_cps, rep.qber,
                                    options.error_correction_efficiency);
  rep.r_s = std::max(0.0, rep.r_s_raw);
  return rep;
}

}  // namespace qkdsim
