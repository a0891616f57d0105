#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "qkdsim/physics.hpp"

using namespace qkdsim;
using doctest::Approx;

TEST_SUITE("physics") {

TEST_CASE("quadrature spread combines the three timing terms") {
  CHECK(combined_spread(10, 20, 30) == Approx(37.41657386773942).epsilon(1e-12));
  CHECK(combined_spread(0, 0, 0) == 0.0);
  CHECK(combined_spread(0, 66, 0) == Approx(66.0));
  // Widths are magnitudes; signed dispersion must be folded to its absolute
  // value by the caller before entering the quadrature sum.
  CHECK_THROWS_AS(combined_spread(0, 66, -50), std::domain_error);
  CHECK_THROWS_AS(combined_spread(-1, 0, std::nan("")), std::domain_error);
}

TEST_CASE("combined spread grows monotonically in each term") {
  double prev = 0.0;
  for (double d = 0; d <= 200; d += 25) {
    const double cur = combined_spread(10, 66, d);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("dispersion spread is bilinear and keeps the coefficient sign") {
  CHECK(dispersion_spread(1.0, 16.7, 6.46) == Approx(107.882).epsilon(1e-12));
  CHECK(dispersion_spread(0.8, 18.0, 100.0) == Approx(1440.0).epsilon(1e-12));
  CHECK(dispersion_spread(0.8, -18.0, 100.0) == Approx(-1440.0).epsilon(1e-12));
  CHECK(dispersion_spread(2 * 0.8, 18.0, 100.0) ==
        Approx(2 * dispersion_spread(0.8, 18.0, 100.0)));
  CHECK(dispersion_spread(0.8, 18.0, 2 * 100.0) ==
        Approx(2 * dispersion_spread(0.8, 18.0, 100.0)));
  CHECK_THROWS_AS(dispersion_spread(-0.1, 18.0, 100.0), std::domain_error);
  CHECK_THROWS_AS(dispersion_spread(0.8, 18.0, -1.0), std::domain_error);
}

TEST_CASE("bandwidth to wavelength width at telecom wavelengths") {
  CHECK(bandwidth_to_wavelength_width(100, 1550) ==
        Approx(0.8013877387135603).epsilon(1e-12));
  CHECK(bandwidth_to_wavelength_width(200, 1550.12) ==
        Approx(1.603023658720594).epsilon(1e-12));
  CHECK(bandwidth_to_wavelength_width(2, 1550) ==
        Approx(0.0160277547742712).epsilon(1e-12));
}

TEST_CASE("wavelength and frequency widths round-trip") {
  for (double ghz : {0.5, 2.0, 10.0, 100.0, 350.0}) {
    const double nm = bandwidth_to_wavelength_width(ghz, 1550.12);
    CHECK(wavelength_width_to_bandwidth(nm, 1550.12) == Approx(ghz).epsilon(1e-9));
  }
}

TEST_CASE("transform-limited coherence time from bandwidth") {
  CHECK(coherence_fwhm_from_bandwidth(100) == Approx(4.412712003053032).epsilon(1e-12));
  CHECK(coherence_fwhm_from_bandwidth(2) == Approx(220.6356001526516).epsilon(1e-12));
  CHECK_THROWS_AS(coherence_fwhm_from_bandwidth(0), std::domain_error);
  CHECK_THROWS_AS(coherence_fwhm_from_bandwidth(-5), std::domain_error);
}

TEST_CASE("dB and linear transmission convert both ways") {
  CHECK(db_to_transmission(0) == Approx(1.0));
  CHECK(db_to_transmission(10) == Approx(0.1).epsilon(1e-12));
  CHECK(db_to_transmission(29.05) == Approx(0.001244514611771384).epsilon(1e-12));
  CHECK(transmission_to_db(db_to_transmission(30.292)) == Approx(30.292).epsilon(1e-9));
  CHECK_THROWS_AS(transmission_to_db(0.0), std::domain_error);
  CHECK_THROWS_AS(transmission_to_db(1.5), std::domain_error);
}

TEST_CASE("binary entropy hits its anchor points") {
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.5) == Approx(1.0).epsilon(1e-15));
  CHECK(binary_entropy(0.0567) == Approx(0.3142034119427218).epsilon(1e-12));
  CHECK(binary_entropy(0.25) == binary_entropy(0.75));
  CHECK_THROWS_AS(binary_entropy(-0.01), std::domain_error);
  CHECK_THROWS_AS(binary_entropy(1.01), std::domain_error);
}

TEST_CASE("heralding efficiency is coincidences over corrected partner singles") {
  CHECK(klyshko_efficiency(100.0, 1100.0, 100.0) == Approx(0.1).epsilon(1e-12));
  CHECK(klyshko_efficiency(500.0, 500.0, 0.0) == Approx(1.0));
  CHECK_THROWS_AS(klyshko_efficiency(100.0, 100.0, 100.0), std::domain_error);
  CHECK_THROWS_AS(klyshko_efficiency(-1.0, 1000.0, 0.0), std::domain_error);
}

TEST_CASE("pair wavelengths balance the pump energy") {
  const auto ok = energy_conservation_check(1546.0, 1554.4, 775.06);
  CHECK(ok.relative_error == Approx(4.426611200593594e-05).epsilon(1e-9));
  CHECK(ok.within_tolerance);
  const auto bad = energy_conservation_check(1500.0, 1554.4, 775.06);
  CHECK_FALSE(bad.within_tolerance);
}

TEST_CASE("arm dispersion sums fiber segments and the compensator") {
  ArmConfig arm;
  arm.segments.push_back({6.46, 16.7, 0.2});
  CHECK(arm_fiber_dispersion(arm) == Approx(107.882).epsilon(1e-12));
  CHECK(arm_total_dispersion(arm) == Approx(107.882).epsilon(1e-12));
  arm.compensator = Compensator{-107.882, 4.56, -170, 170, 10};
  CHECK(arm_total_dispersion(arm) == Approx(0.0).epsilon(1e-12));
}

TEST_CASE("arm loss adds extra, fiber, and compensator insertion loss") {
  ArmConfig arm;
  arm.segments.push_back({6.46, 16.7, 0.2});
  arm.extra_loss_db = 28.018;
  CHECK(arm_loss_db(arm) == Approx(29.31).epsilon(1e-12));
  ArmConfig with_comp;
  with_comp.extra_loss_db = 24.49;
  with_comp.compensator = Compensator{-107.882, 4.56, -170, 170, 10};
  CHECK(arm_loss_db(with_comp) == Approx(29.05).epsilon(1e-12));
}

TEST_CASE("opposite-arm dispersion cancels exactly in the nonlocal sum") {
  ArmConfig a, b;
  b.segments.push_back({6.46, 16.7, 0.2});
  // Calibration workflow: measure the summed fiber dispersion of both arms,
  // set the compensator to its negation. Fiber and compensator terms are
  // grouped separately in the sum, so this nulls to exactly zero rather than
  // to a rounding residue.
  const double measured = arm_fiber_dispersion(a) + arm_fiber_dispersion(b);
  a.compensator = Compensator{-measured, 4.56, -170, 170, 10};
  CHECK(nonlocal_dispersion_sum(a, b) == 0.0);
  CHECK(nonlocal_dispersion(a, b, 0.67) == 0.0);
  // The round-number dial setting differs from the 16.7 km x 6.46 ps/nm/km
  // product by at most one representation ulp, which is physically nil.
  a.compensator->dispersion_ps_per_nm = -107.882;
  CHECK(std::abs(nonlocal_dispersion_sum(a, b)) < 1e-12);
  b.segments[0].length_km = 12.0;
  CHECK(nonlocal_dispersion_sum(a, b) == Approx(12 * 16.7 - 107.882).epsilon(1e-9));
  CHECK(nonlocal_dispersion(a, b, 0.67) ==
        Approx(0.67 * std::abs(12 * 16.7 - 107.882)).epsilon(1e-9));
}

TEST_CASE("nonlocal spread depends on the summed dispersion only") {
  ArmConfig a, b, a2, b2;
  a.segments.push_back({50.0, 18.0, 0.2});
  b.segments.push_back({50.0, 18.0, 0.2});
  a2.segments.push_back({100.0, 18.0, 0.2});
  // 50+50 km split and 100+0 km split share the dispersion sum.
  CHECK(nonlocal_dispersion(a, b, 0.1) == Approx(nonlocal_dispersion(a2, b2, 0.1)));
}

TEST_CASE("scenario validation rejects unphysical parameters") {
  LinkScenario s;
  s.brightness_cps = 5.75e8;
  CHECK_NOTHROW(s.validate());
  s.optical_error = 0.6;
  CHECK_THROWS_AS(s.validate(), std::domain_error);
  s.optical_error = 0.01;
  s.error_correction_efficiency = 0.9;
  CHECK_THROWS_AS(s.validate(), std::domain_error);
  s.error_correction_efficiency = 1.1;
  s.effective_spectral_width_nm = -0.5;
  CHECK_THROWS_AS(s.validate(), std::domain_error);
  s.effective_spectral_width_nm = 0.67;
  s.arm_a.compensator = Compensator{-200.0, 4.56, -170, 170, 10};
  CHECK_THROWS_AS(s.validate(), std::domain_error);  // outside its own range
}

TEST_CASE("effective width falls back to the filter width") {
  LinkScenario s;
  s.brightness_cps = 1e6;
  s.spectrum.width_nm = 0.8;
  CHECK(s.effective_width_nm() == Approx(0.8));
  s.effective_spectral_width_nm = 0.67;
  CHECK(s.effective_width_nm() == Approx(0.67));
}

TEST_CASE("scenario coherence defaults to the transform limit of the width") {
  LinkScenario s;
  s.brightness_cps = 1e6;
  s.spectrum.center_nm = 1550.0;
  s.spectrum.width_nm = bandwidth_to_wavelength_width(100, 1550.0);
  CHECK(s.coherence_fwhm() == Approx(4.412712003053032).epsilon(1e-9));
  s.coherence_fwhm_ps = 0.0;  // explicit zero wins over the transform limit
  CHECK(s.coherence_fwhm() == 0.0);
}

TEST_CASE("timing budget composes coherence, jitter, and dispersion") {
  LinkScenario s;
  s.brightness_cps = 5.75e8;
  s.coherence_fwhm_ps = 0.0;
  s.effective_spectral_width_nm = 0.67;
  s.arm_a.detector.jitter_fwhm_ps = 46.66904755831214;
  s.arm_b.detector.jitter_fwhm_ps = 46.66904755831214;
  s.arm_b.segments.push_back({6.46, 16.7, 0.2});
  TimingBudget tb = scenario_timing_budget(s);
  CHECK(tb.coherence_fwhm_ps == 0.0);
  CHECK(tb.jitter_fwhm_ps == Approx(66.0).epsilon(1e-9));
  CHECK(tb.dispersion_fwhm_ps == Approx(0.67 * 107.882).epsilon(1e-9));
  CHECK(tb.total_fwhm_ps ==
        Approx(combined_spread(0, tb.jitter_fwhm_ps, tb.dispersion_fwhm_ps)).epsilon(1e-12));
  // A compensator matched to the measured sum removes the dispersion term.
  const double measured = arm_fiber_dispersion(s.arm_a) + arm_fiber_dispersion(s.arm_b);
  s.arm_a.compensator = Compensator{-measured, 4.56, -170, 170, 10};
  tb = scenario_timing_budget(s);
  CHECK(tb.dispersion_fwhm_ps == 0.0);
  CHECK(tb.total_fwhm_ps == Approx(66.0).epsilon(1e-9));
}

}  // TEST_SUITE
