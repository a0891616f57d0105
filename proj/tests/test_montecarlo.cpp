#include <algorithm>
#include <cmath>
#include <cstdint>

#include "doctest.h"
#include "qkdsim/analysis.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/montecarlo.hpp"
#include "qkdsim/physics.hpp"

using namespace qkdsim;
using doctest::Approx;

namespace {

// Bright source over two lossy arms with busy detectors; mirrors the
// shipped preset so statistical expectations can be written in closed form.
LinkScenario reference_scenario() {
  LinkScenario s;
  s.brightness_cps = 5.75e8;
  s.optical_error = 0.01;
  s.effective_spectral_width_nm = 0.67;
  s.coherence_fwhm_ps = 0.0;
  s.spectrum.center_nm = 1550.12;
  s.arm_a.compensator = Compensator{-107.882, 4.56, -170, 170, 10};
  s.arm_a.extra_loss_db = 24.49;
  s.arm_a.detector = {46.66904755831214, 1.4e5};
  s.arm_a.propagation_delay_ps = 350.0;
  s.arm_b.segments.push_back({6.46, 16.7, 0.2});
  s.arm_b.extra_loss_db = 28.018;
  s.arm_b.detector = {46.66904755831214, 1.75e5};
  s.arm_b.propagation_delay_ps = 125.0;
  return s;
}

// Clean high-rate link for peak-shape checks: 10 dB per arm, no darks.
LinkScenario clean_scenario(double jitter_each_ps) {
  LinkScenario s;
  s.brightness_cps = 1e6;
  s.optical_error = 0.01;
  s.effective_spectral_width_nm = 0.1;
  s.coherence_fwhm_ps = 0.0;
  s.arm_a.extra_loss_db = 10.0;
  s.arm_b.extra_loss_db = 10.0;
  s.arm_a.detector = {jitter_each_ps, 0.0};
  s.arm_b.detector = {jitter_each_ps, 0.0};
  return s;
}

SimulationRun run_for(double duration_s, std::uint64_t seed = 42) {
  SimulationRun run;
  run.seed = seed;
  run.duration_s = duration_s;
  run.settings = default_settings(duration_s);
  return run;
}

double fitted_fwhm(const SimulationResult& r, double duration_s) {
  Histogram h = cross_correlate(r.tags_a, r.tags_b, duration_s, 1, 0, 2000);
  return fit_gaussian(h).fwhm_ps;
}

}  // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("equal seeds give identical streams for any thread count") {
  const LinkScenario s = reference_scenario();
  const SimulationRun run = run_for(0.05);
  SimulateOptions o1, o2, o8;
  o1.threads = 1;
  o2.threads = 2;
  o8.threads = 8;
  const SimulationResult r1 = simulate(s, run, o1);
  const SimulationResult r2 = simulate(s, run, o2);
  const SimulationResult r8 = simulate(s, run, o8);
  CHECK(r1.tags_a == r2.tags_a);
  CHECK(r1.tags_a == r8.tags_a);
  CHECK(r1.tags_b == r2.tags_b);
  CHECK(r1.tags_b == r8.tags_b);
  CHECK(r1.counts.joint_pairs == r8.counts.joint_pairs);
  CHECK(r1.counts.dark_a == r8.counts.dark_a);
}

TEST_CASE("different seeds decorrelate the streams") {
  const LinkScenario s = clean_scenario(10.0);
  const SimulationResult r1 = simulate(s, run_for(0.01, 1));
  const SimulationResult r2 = simulate(s, run_for(0.01, 2));
  CHECK(r1.tags_a != r2.tags_a);
}

TEST_CASE("dark-only run reproduces the configured dark rates") {
  LinkScenario s = reference_scenario();
  s.brightness_cps = 0.0;
  const double d = 0.25;
  const SimulationResult r = simulate(s, run_for(d));
  CHECK(r.counts.joint_pairs == 0);
  CHECK(r.counts.only_a == 0);
  CHECK(r.counts.only_b == 0);
  const double exp_a = 1.4e5 * d, exp_b = 1.75e5 * d;
  CHECK(std::abs(static_cast<double>(r.counts.dark_a) - exp_a) < 5 * std::sqrt(exp_a));
  CHECK(std::abs(static_cast<double>(r.counts.dark_b) - exp_b) < 5 * std::sqrt(exp_b));
  // Tags equal generated darks up to boundary drops.
  CHECK(r.tags_a.size() <= r.counts.dark_a);
  CHECK(r.counts.dark_a - r.tags_a.size() <= 3);
}

TEST_CASE("singles rates follow brightness-times-loss plus darks") {
  const LinkScenario s = reference_scenario();
  const double d = 0.25;
  const SimulationResult r = simulate(s, run_for(d));
  const double eta_a = db_to_transmission(29.05), eta_b = db_to_transmission(29.31);
  const double exp_a = (5.75e8 * eta_a + 1.4e5) * d;
  const double exp_b = (5.75e8 * eta_b + 1.75e5) * d;
  CHECK(std::abs(static_cast<double>(r.tags_a.size()) - exp_a) < 4 * std::sqrt(exp_a));
  CHECK(std::abs(static_cast<double>(r.tags_b.size()) - exp_b) < 4 * std::sqrt(exp_b));
  // Joint detections at B * eta_a * eta_b.
  const double exp_cc = 5.75e8 * eta_a * eta_b * d;
  CHECK(std::abs(static_cast<double>(r.counts.joint_pairs) - exp_cc) <
        5 * std::sqrt(exp_cc));
}

TEST_CASE("lossless arms detect every pair jointly") {
  LinkScenario s = clean_scenario(5.0);
  s.brightness_cps = 1e5;
  s.arm_a.extra_loss_db = 0.0;
  s.arm_b.extra_loss_db = 0.0;
  const SimulationResult r = simulate(s, run_for(0.01));
  CHECK(r.counts.only_a == 0);
  CHECK(r.counts.only_b == 0);
  CHECK(r.counts.dark_a == 0);
  CHECK(r.counts.joint_pairs > 0);
}

TEST_CASE("streams are sorted and quantized to the run window") {
  const SimulationResult r = simulate(reference_scenario(), run_for(0.02));
  for (const auto* stream : {&r.tags_a, &r.tags_b}) {
    REQUIRE_FALSE(stream->empty());
    for (std::size_t i = 1; i < stream->size(); ++i) {
      CHECK_FALSE(tag_time_order((*stream)[i], (*stream)[i - 1]));
    }
    CHECK(stream->front().timestamp_ps >= 0);
    CHECK(stream->back().timestamp_ps < 2e10);
  }
}

TEST_CASE("correlation peak sits at the delay difference") {
  const SimulationResult r = simulate(reference_scenario(), run_for(1.0));
  Histogram h = cross_correlate(r.tags_a, r.tags_b, 1.0, 1, 0, 2000);
  GaussianFit fit = fit_gaussian(h);
  // Arm delays 350 and 125 ps put the pair peak at +225.
  CHECK(fit.center_ps == Approx(225.0).epsilon(0.02));
}

TEST_CASE("pair spread reproduces the jitter budget when dispersion cancels") {
  // Both-arm jitter 46.67 ps -> 66 ps combined; compensator nulls the fiber.
  const SimulationResult r = simulate(reference_scenario(), run_for(1.0));
  CHECK(fitted_fwhm(r, 1.0) == Approx(66.0).epsilon(0.05));
}

TEST_CASE("uncompensated dispersion widens the pair spread") {
  LinkScenario s = clean_scenario(46.66904755831214);
  s.arm_b.segments.push_back({50.0, 18.0, 0.0});  // +900 ps/nm, x0.1 nm width
  const SimulationResult r = simulate(s, run_for(1.0));
  const double expected = std::sqrt(66.0 * 66.0 + 90.0 * 90.0);
  CHECK(fitted_fwhm(r, 1.0) == Approx(expected).epsilon(0.04));

  // A matched module in the other arm restores the jitter-limited width,
  // even though each photon still smears individually.
  s.arm_a.compensator = Compensator{-900.0, 0.0, -1000, 1000, 10};
  const SimulationResult rc = simulate(s, run_for(1.0));
  CHECK(fitted_fwhm(rc, 1.0) == Approx(66.0).epsilon(0.04));
}

TEST_CASE("error-free optics yield identical same-basis outcomes") {
  LinkScenario s = clean_scenario(5.0);
  s.optical_error = 0.0;
  const double d = 0.1;
  const SimulationResult r = simulate(s, run_for(d));
  CoincidenceTally t = count_coincidences(r.tags_a, r.tags_b, 0, 60, d);
  REQUIRE(t.same_basis() > 500);
  CHECK(t.erroneous_hv == 0);
  CHECK(t.erroneous_da == 0);
}

TEST_CASE("optical error rate shows up in the coincidence outcomes") {
  LinkScenario s = clean_scenario(5.0);
  s.optical_error = 0.05;
  const double d = 0.5;
  const SimulationResult r = simulate(s, run_for(d));
  CoincidenceTally t = count_coincidences(r.tags_a, r.tags_b, 0, 60, d);
  REQUIRE(t.same_basis() > 2000);
  const double e = qber(t);
  const double sigma = std::sqrt(0.05 * 0.95 / static_cast<double>(t.same_basis()));
  CHECK(std::abs(e - 0.05) < 5 * sigma);
}

TEST_CASE("fixed settings stamp the block basis on every tag") {
  LinkScenario s = clean_scenario(5.0);
  SimulationRun run;
  run.seed = 7;
  run.duration_s = 0.01;
  run.settings = {{Basis::HV, Basis::HV, 0.003}, {Basis::DA, Basis::DA, 0.007}};
  const SimulationResult r = simulate(s, run);
  const std::int64_t boundary = 3'000'000'000;  // 0.003 s in ps
  for (const auto& tag : r.tags_a) {
    CHECK(tag.basis == (tag.timestamp_ps < boundary ? Basis::HV : Basis::DA));
  }
  for (const auto& tag : r.tags_b) {
    CHECK(tag.basis == (tag.timestamp_ps < boundary ? Basis::HV : Basis::DA));
  }
}

TEST_CASE("random basis mode splits bases evenly and mixes half the pairs") {
  LinkScenario s = clean_scenario(5.0);
  SimulationRun run;
  run.seed = 11;
  run.duration_s = 0.2;
  run.basis_mode = BasisMode::RandomBasis;
  const SimulationResult r = simulate(s, run);
  std::size_t hv = 0;
  for (const auto& tag : r.tags_a) hv += tag.basis == Basis::HV;
  const double frac = static_cast<double>(hv) / static_cast<double>(r.tags_a.size());
  CHECK(frac == Approx(0.5).epsilon(0.02));
  CoincidenceTally t = count_coincidences(r.tags_a, r.tags_b, 0, 60, run.duration_s);
  REQUIRE(t.total() > 1500);  // ~2000 expected
  const double mixed = static_cast<double>(t.mixed_basis) / static_cast<double>(t.total());
  CHECK(mixed == Approx(0.5).epsilon(0.05));
}

TEST_CASE("zero duration produces an empty result") {
  const SimulationResult r = simulate(reference_scenario(), run_for(0.0));
  CHECK(r.tags_a.empty());
  CHECK(r.tags_b.empty());
  CHECK(r.counts.joint_pairs == 0);
}

TEST_CASE("runs exceeding the tag budget are refused up front") {
  LinkScenario s = clean_scenario(5.0);
  s.brightness_cps = 1e13;
  s.arm_a.extra_loss_db = 0.0;
  s.arm_b.extra_loss_db = 0.0;
  CHECK_THROWS_AS(simulate(s, run_for(1.0)), CapacityError);
}

TEST_CASE("fixed-settings mode requires blocks, which must be positive") {
  SimulationRun run;
  run.duration_s = 1.0;
  run.settings.clear();
  CHECK_THROWS_AS(run.validate(), std::domain_error);
  run.settings = {{Basis::HV, Basis::HV, 0.0}};
  CHECK_THROWS_AS(run.validate(), std::domain_error);
  run.settings = {{Basis::HV, Basis::HV, 1.0}};
  CHECK_NOTHROW(run.validate());
}

}  // TEST_SUITE
