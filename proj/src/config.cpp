#include "qkdsim/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "qkdsim/errors.hpp"

namespace qkdsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

// Strictness: every object lists its allowed keys; anything else is an error
// naming the full path, so typos never pass silently.
void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) fail(path.empty() ? key : path + "." + key, "unknown key");
  }
}

double get_number(const json& j, const std::string& path, const char* key,
                  std::optional<double> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    fail(path + "." + key, "missing required key");
  }
  const json& v = j.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const char* key,
                      std::uint64_t def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_unsigned()) fail(path + "." + key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

OpticalSpectrum parse_spectrum(const json& j, const std::string& path) {
  check_keys(j, path, {"center_nm", "width_value", "width_unit", "shape"});
  OpticalSpectrum s;
  s.center_nm = get_number(j, path, "center_nm", 1550.0);
  const std::string unit = get_string(j, path, "width_unit", "nm");
  const double width = get_number(j, path, "width_value", 0.8);
  if (unit == "nm") {
    s.width_nm = width;
  } else if (unit == "ghz") {
    if (width <= 0) fail(path + ".width_value", "must be positive");
    s.width_nm = bandwidth_to_wavelength_width(width, s.center_nm);
  } else {
    fail(path + ".width_unit", "expected \"nm\" or \"ghz\"");
  }
  const std::string shape = get_string(j, path, "shape", "gaussian");
  if (shape == "gaussian") {
    s.shape = SpectrumShape::Gaussian;
  } else if (shape == "tophat") {
    s.shape = SpectrumShape::Tophat;
  } else {
    fail(path + ".shape", "expected \"gaussian\" or \"tophat\"");
  }
  return s;
}

Compensator parse_compensator(const json& j, const std::string& path) {
  check_keys(j, path,
             {"dispersion_ps_per_nm", "insertion_loss_db", "range_min_ps_per_nm",
              "range_max_ps_per_nm", "step_ps_per_nm"});
  Compensator c;
  c.dispersion_ps_per_nm = get_number(j, path, "dispersion_ps_per_nm");
  c.insertion_loss_db = get_number(j, path, "insertion_loss_db", 0.0);
  c.range_min_ps_per_nm = get_number(j, path, "range_min_ps_per_nm", -1e6);
  c.range_max_ps_per_nm = get_number(j, path, "range_max_ps_per_nm", 1e6);
  c.step_ps_per_nm = get_number(j, path, "step_ps_per_nm", 10.0);
  return c;
}

ArmConfig parse_arm(const json& j, const std::string& path) {
  check_keys(j, path,
             {"segments", "compensator", "extra_loss_db", "detector", "propagation_delay_ps"});
  ArmConfig arm;
  if (j.contains("segments")) {
    const json& segs = j.at("segments");
    if (!segs.is_array()) fail(path + ".segments", "expected an array");
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const std::string spath = path + ".segments[" + std::to_string(i) + "]";
      check_keys(segs[i], spath,
                 {"length_km", "dispersion_ps_per_nm_km", "attenuation_db_per_km", "label"});
      FiberSegment seg;
      seg.length_km = get_number(segs[i], spath, "length_km");
      seg.dispersion_ps_per_nm_km = get_number(segs[i], spath, "dispersion_ps_per_nm_km", 0.0);
      seg.attenuation_db_per_km = get_number(segs[i], spath, "attenuation_db_per_km", 0.0);
      arm.segments.push_back(seg);
    }
  }
  if (j.contains("compensator") && !j.at("compensator").is_null()) {
    arm.compensator = parse_compensator(j.at("compensator"), path + ".compensator");
  }
  arm.extra_loss_db = get_number(j, path, "extra_loss_db", 0.0);
  if (j.contains("detector")) {
    const std::string dpath = path + ".detector";
    check_keys(j.at("detector"), dpath, {"jitter_fwhm_ps", "dark_count_cps"});
    arm.detector.jitter_fwhm_ps = get_number(j.at("detector"), dpath, "jitter_fwhm_ps", 0.0);
    arm.detector.dark_count_cps = get_number(j.at("detector"), dpath, "dark_count_cps", 0.0);
  }
  arm.propagation_delay_ps = get_number(j, path, "propagation_delay_ps", 0.0);
  return arm;
}

LinkScenario parse_scenario(const json& j) {
  const std::string path = "scenario";
  check_keys(j, path,
             {"brightness_cps", "optical_error", "error_correction_efficiency", "spectrum",
              "effective_spectral_width_nm", "coherence_fwhm_ps", "arm_a", "arm_b"});
  LinkScenario s;
  s.brightness_cps = get_number(j, path, "brightness_cps");
  s.optical_error = get_number(j, path, "optical_error", 0.0);
  s.error_correction_efficiency = get_number(j, path, "error_correction_efficiency", 1.1);
  if (j.contains("spectrum")) s.spectrum = parse_spectrum(j.at("spectrum"), path + ".spectrum");
  if (j.contains("effective_spectral_width_nm")) {
    s.effective_spectral_width_nm = get_number(j, path, "effective_spectral_width_nm");
  }
  if (j.contains("coherence_fwhm_ps")) {
    s.coherence_fwhm_ps = get_number(j, path, "coherence_fwhm_ps");
  }
  if (j.contains("arm_a")) s.arm_a = parse_arm(j.at("arm_a"), path + ".arm_a");
  if (j.contains("arm_b")) s.arm_b = parse_arm(j.at("arm_b"), path + ".arm_b");
  try {
    s.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return s;
}

Basis parse_basis(const json& v, const std::string& path) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "HV") return Basis::HV;
    if (s == "DA") return Basis::DA;
  }
  fail(path, "expected \"HV\" or \"DA\"");
}

SimulationRun parse_run(const json& j) {
  const std::string path = "run";
  check_keys(j, path, {"seed", "duration_s", "basis_mode", "settings"});
  SimulationRun run;
  run.seed = get_u64(j, path, "seed", 1);
  run.duration_s = get_number(j, path, "duration_s", 1.0);
  const std::string mode = get_string(j, path, "basis_mode", "fixed_settings");
  if (mode == "fixed_settings") {
    run.basis_mode = BasisMode::FixedSettings;
  } else if (mode == "random_basis") {
    run.basis_mode = BasisMode::RandomBasis;
  } else {
    fail(path + ".basis_mode", "expected \"fixed_settings\" or \"random_basis\"");
  }
  if (j.contains("settings")) {
    const json& blocks = j.at("settings");
    if (!blocks.is_array()) fail(path + ".settings", "expected an array");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string bpath = path + ".settings[" + std::to_string(i) + "]";
      check_keys(blocks[i], bpath, {"basis_a", "basis_b", "duration_s"});
      SettingsBlock b;
      if (!blocks[i].contains("basis_a")) fail(bpath + ".basis_a", "missing required key");
      if (!blocks[i].contains("basis_b")) fail(bpath + ".basis_b", "missing required key");
      b.basis_a = parse_basis(blocks[i].at("basis_a"), bpath + ".basis_a");
      b.basis_b = parse_basis(blocks[i].at("basis_b"), bpath + ".basis_b");
      b.duration_s = get_number(blocks[i], bpath, "duration_s");
      run.settings.push_back(b);
    }
  } else if (run.basis_mode == BasisMode::FixedSettings) {
    run.settings = default_settings(run.duration_s);
  }
  try {
    run.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return run;
}

ModelParams parse_model(const json& j) {
  const std::string path = "model";
  check_keys(j, path,
             {"brightness_cps", "eta_a", "eta_b", "eta_a_db", "eta_b_db", "dark_a_cps",
              "dark_b_cps", "optical_error", "sigma_j_ps", "sigma_c_ps",
              "error_correction_efficiency", "clipping_factor", "accidentals_in_total"});
  ModelParams p;
  p.brightness_cps = get_number(j, path, "brightness_cps");
  const bool lin_a = j.contains("eta_a"), db_a = j.contains("eta_a_db");
  const bool lin_b = j.contains("eta_b"), db_b = j.contains("eta_b_db");
  if (lin_a == db_a) fail(path, "give exactly one of eta_a / eta_a_db");
  if (lin_b == db_b) fail(path, "give exactly one of eta_b / eta_b_db");
  p.eta_a = lin_a ? get_number(j, path, "eta_a")
                  : db_to_transmission(get_number(j, path, "eta_a_db"));
  p.eta_b = lin_b ? get_number(j, path, "eta_b")
                  : db_to_transmission(get_number(j, path, "eta_b_db"));
  p.dark_a_cps = get_number(j, path, "dark_a_cps", 0.0);
  p.dark_b_cps = get_number(j, path, "dark_b_cps", 0.0);
  p.optical_error = get_number(j, path, "optical_error", 0.0);
  p.jitter_fwhm_ps = get_number(j, path, "sigma_j_ps", 0.0);
  p.coherence_fwhm_ps = get_number(j, path, "sigma_c_ps", 0.0);
  p.error_correction_efficiency = get_number(j, path, "error_correction_efficiency", 1.1);
  p.clipping_factor = get_number(j, path, "clipping_factor", kFwhmWindowFraction);
  p.accidentals_in_total = get_bool(j, path, "accidentals_in_total", true);
  try {
    p.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return p;
}

DcmSweepSpec parse_dcm_sweep(const json& j) {
  const std::string path = "dcm_sweep";
  check_keys(j, path,
             {"fiber_dispersion_ps_per_nm", "spectral_width_nm", "min_ps_per_nm",
              "max_ps_per_nm", "step_ps_per_nm", "calibration_offset_ps_per_nm"});
  DcmSweepSpec s;
  s.fiber_dispersion_ps_per_nm = get_number(j, path, "fiber_dispersion_ps_per_nm");
  s.spectral_width_nm = get_number(j, path, "spectral_width_nm");
  s.min_ps_per_nm = get_number(j, path, "min_ps_per_nm", -170.0);
  s.max_ps_per_nm = get_number(j, path, "max_ps_per_nm", 170.0);
  s.step_ps_per_nm = get_number(j, path, "step_ps_per_nm", 10.0);
  s.calibration_offset_ps_per_nm = get_number(j, path, "calibration_offset_ps_per_nm", 0.0);
  try {
    s.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return s;
}

DistanceSweepSpec parse_distance_sweep(const json& j) {
  const std::string path = "distance_sweep";
  check_keys(j, path,
             {"spectral_widths_ghz", "center_nm", "attenuation_db_per_km",
              "dispersion_ps_per_nm_km", "dark_count_cps", "optical_error", "sigma_j_ps",
              "error_correction_efficiency", "start_km", "step_km", "max_km",
              "min_key_rate_bits_per_s"});
  DistanceSweepSpec s;
  if (!j.contains("spectral_widths_ghz")) {
    fail(path + ".spectral_widths_ghz", "missing required key");
  }
  const json& widths = j.at("spectral_widths_ghz");
  if (!widths.is_array() || widths.empty()) {
    fail(path + ".spectral_widths_ghz", "expected a non-empty array of numbers");
  }
  s.spectral_widths_ghz.clear();
  for (const auto& w : widths) {
    if (!w.is_number()) fail(path + ".spectral_widths_ghz", "expected numbers");
    s.spectral_widths_ghz.push_back(w.get<double>());
  }
  s.center_nm = get_number(j, path, "center_nm", 1550.0);
  s.attenuation_db_per_km = get_number(j, path, "attenuation_db_per_km", 0.2);
  s.dispersion_ps_per_nm_km = get_number(j, path, "dispersion_ps_per_nm_km", 18.0);
  s.dark_count_cps = get_number(j, path, "dark_count_cps", 100.0);
  s.optical_error = get_number(j, path, "optical_error", 0.01);
  s.jitter_fwhm_ps = get_number(j, path, "sigma_j_ps", 20.0);
  s.error_correction_efficiency = get_number(j, path, "error_correction_efficiency", 1.1);
  s.start_km = get_number(j, path, "start_km", 10.0);
  s.step_km = get_number(j, path, "step_km", 10.0);
  s.max_km = get_number(j, path, "max_km", 2000.0);
  s.min_key_rate = get_number(j, path, "min_key_rate_bits_per_s", 1e-3);
  try {
    s.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return s;
}

AnalysisOptionsConfig parse_analysis(const json& j) {
  const std::string path = "analysis";
  check_keys(j, path,
             {"bin_width_ps", "half_range_ps", "center_ps", "max_fwhm_factor",
              "error_correction_efficiency", "duration_s"});
  AnalysisOptionsConfig a;
  a.options.bin_width_ps = static_cast<std::int64_t>(get_number(j, path, "bin_width_ps", 1));
  a.options.half_range_ps = static_cast<std::int64_t>(get_number(j, path, "half_range_ps", 2000));
  a.options.center_ps = static_cast<std::int64_t>(get_number(j, path, "center_ps", 0));
  a.options.max_fwhm_factor = get_number(j, path, "max_fwhm_factor", 8.0);
  a.options.error_correction_efficiency =
      get_number(j, path, "error_correction_efficiency", 1.1);
  if (j.contains("duration_s")) a.duration_s = get_number(j, path, "duration_s");
  if (a.options.bin_width_ps <= 0) fail(path + ".bin_width_ps", "must be positive");
  if (a.options.half_range_ps < 0) fail(path + ".half_range_ps", "must be non-negative");
  if (a.options.max_fwhm_factor <= 0) fail(path + ".max_fwhm_factor", "must be positive");
  if (a.options.error_correction_efficiency < 1.0) {
    fail(path + ".error_correction_efficiency", "must be >= 1");
  }
  return a;
}

}  // namespace

Config parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, "",
             {"scenario", "run", "model", "dcm_sweep", "distance_sweep", "analysis",
              "local_comparison"});
  Config cfg;
  if (j.contains("scenario")) cfg.scenario = parse_scenario(j.at("scenario"));
  if (j.contains("run")) cfg.run = parse_run(j.at("run"));
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("dcm_sweep")) cfg.dcm_sweep = parse_dcm_sweep(j.at("dcm_sweep"));
  if (j.contains("distance_sweep")) {
    cfg.distance_sweep = parse_distance_sweep(j.at("distance_sweep"));
  }
  if (j.contains("analysis")) cfg.analysis = parse_analysis(j.at("analysis"));
  if (j.contains("local_comparison")) {
    const std::string path = "local_comparison";
    check_keys(j.at(path), path, {"second_dcm_loss_db"});
    cfg.local_comparison.second_dcm_loss_db =
        get_number(j.at(path), path, "second_dcm_loss_db", 4.56);
    if (cfg.local_comparison.second_dcm_loss_db < 0) {
      fail(path + ".second_dcm_loss_db", "must be non-negative");
    }
  }
  // When a scenario ships without analysis settings, the key-rate efficiency
  // follows the scenario unless set explicitly.
  if (cfg.scenario && !j.contains("analysis")) {
    cfg.analysis.options.error_correction_efficiency =
        cfg.scenario->error_correction_efficiency;
  } else if (cfg.scenario && j.contains("analysis") &&
             !j.at("analysis").contains("error_correction_efficiency")) {
    cfg.analysis.options.error_correction_efficiency =
        cfg.scenario->error_correction_efficiency;
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ModelParams model_from_config(const Config& cfg) {
  if (cfg.model) return *cfg.model;
  if (!cfg.scenario) {
    throw ConfigError("config: need a \"model\" or \"scenario\" section for model commands");
  }
  const LinkScenario& s = *cfg.scenario;
  ModelParams p;
  p.brightness_cps = s.brightness_cps;
  p.eta_a = db_to_transmission(arm_loss_db(s.arm_a));
  p.eta_b = db_to_transmission(arm_loss_db(s.arm_b));
  p.dark_a_cps = s.arm_a.detector.dark_count_cps;
  p.dark_b_cps = s.arm_b.detector.dark_count_cps;
  p.optical_error = s.optical_error;
  const TimingBudget budget = scenario_timing_budget(s);
  p.jitter_fwhm_ps = budget.jitter_fwhm_ps;
  p.coherence_fwhm_ps = budget.coherence_fwhm_ps;
  p.error_correction_efficiency = s.error_correction_efficiency;
  return p;
}

nlohmann::json config_to_json(const Config& cfg) {
  json j = json::object();
  if (cfg.scenario) {
    const LinkScenario& s = *cfg.scenario;
    const auto arm_json = [](const ArmConfig& arm) {
      json a;
      a["segments"] = json::array();
      for (const auto& seg : arm.segments) {
        a["segments"].push_back({{"length_km", seg.length_km},
                                 {"dispersion_ps_per_nm_km", seg.dispersion_ps_per_nm_km},
                                 {"attenuation_db_per_km", seg.attenuation_db_per_km}});
      }
      if (arm.compensator) {
        a["compensator"] = {{"dispersion_ps_per_nm", arm.compensator->dispersion_ps_per_nm},
                            {"insertion_loss_db", arm.compensator->insertion_loss_db},
                            {"range_min_ps_per_nm", arm.compensator->range_min_ps_per_nm},
                            {"range_max_ps_per_nm", arm.compensator->range_max_ps_per_nm},
                            {"step_ps_per_nm", arm.compensator->step_ps_per_nm}};
      } else {
        a["compensator"] = nullptr;
      }
      a["extra_loss_db"] = arm.extra_loss_db;
      a["detector"] = {{"jitter_fwhm_ps", arm.detector.jitter_fwhm_ps},
                       {"dark_count_cps", arm.detector.dark_count_cps}};
      a["propagation_delay_ps"] = arm.propagation_delay_ps;
      a["total_loss_db"] = arm_loss_db(arm);
      return a;
    };
    j["scenario"] = {
        {"brightness_cps", s.brightness_cps},
        {"optical_error", s.optical_error},
        {"error_correction_efficiency", s.error_correction_efficiency},
        {"spectrum",
         {{"center_nm", s.spectrum.center_nm},
          {"width_value", s.spectrum.width_nm},
          {"width_unit", "nm"},
          {"shape", s.spectrum.shape == SpectrumShape::Gaussian ? "gaussian" : "tophat"}}},
        {"effective_spectral_width_nm", s.effective_width_nm()},
        {"coherence_fwhm_ps", s.coherence_fwhm()},
        {"arm_a", arm_json(s.arm_a)},
        {"arm_b", arm_json(s.arm_b)},
    };
  }
  if (cfg.run) {
    const SimulationRun& r = *cfg.run;
    json blocks = json::array();
    for (const auto& b : r.settings) {
      blocks.push_back({{"basis_a", to_string(b.basis_a)},
                        {"basis_b", to_string(b.basis_b)},
                        {"duration_s", b.duration_s}});
    }
    j["run"] = {{"seed", r.seed},
                {"duration_s", r.duration_s},
                {"basis_mode", r.basis_mode == BasisMode::FixedSettings ? "fixed_settings"
                                                                        : "random_basis"},
                {"settings", blocks}};
  }
  if (cfg.model) {
    const ModelParams& p = *cfg.model;
    j["model"] = {{"brightness_cps", p.brightness_cps},
                  {"eta_a", p.eta_a},
                  {"eta_b", p.eta_b},
                  {"dark_a_cps", p.dark_a_cps},
                  {"dark_b_cps", p.dark_b_cps},
                  {"optical_error", p.optical_error},
                  {"sigma_j_ps", p.jitter_fwhm_ps},
                  {"sigma_c_ps", p.coherence_fwhm_ps},
                  {"error_correction_efficiency", p.error_correction_efficiency},
                  {"clipping_factor", p.clipping_factor},
                  {"accidentals_in_total", p.accidentals_in_total}};
  }
  if (cfg.dcm_sweep) {
    const DcmSweepSpec& s = *cfg.dcm_sweep;
    j["dcm_sweep"] = {{"fiber_dispersion_ps_per_nm", s.fiber_dispersion_ps_per_nm},
                      {"spectral_width_nm", s.spectral_width_nm},
                      {"min_ps_per_nm", s.min_ps_per_nm},
                      {"max_ps_per_nm", s.max_ps_per_nm},
                      {"step_ps_per_nm", s.step_ps_per_nm},
                      {"calibration_offset_ps_per_nm", s.calibration_offset_ps_per_nm}};
  }
  if (cfg.distance_sweep) {
    const DistanceSweepSpec& s = *cfg.distance_sweep;
    j["distance_sweep"] = {{"spectral_widths_ghz", s.spectral_widths_ghz},
                           {"center_nm", s.center_nm},
                           {"attenuation_db_per_km", s.attenuation_db_per_km},
                           {"dispersion_ps_per_nm_km", s.dispersion_ps_per_nm_km},
                           {"dark_count_cps", s.dark_count_cps},
                           {"optical_error", s.optical_error},
                           {"sigma_j_ps", s.jitter_fwhm_ps},
                           {"error_correction_efficiency", s.error_correction_efficiency},
                           {"start_km", s.start_km},
                           {"step_km", s.step_km},
                           {"max_km", s.max_km},
                           {"min_key_rate_bits_per_s", s.min_key_rate}};
  }
  j["analysis"] = {{"bin_width_ps", cfg.analysis.options.bin_width_ps},
                   {"half_range_ps", cfg.analysis.options.half_range_ps},
                   {"center_ps", cfg.analysis.options.center_ps},
                   {"max_fwhm_factor", cfg.analysis.options.max_fwhm_factor},
                   {"error_correction_efficiency",
                    cfg.analysis.options.error_correction_efficiency}};
  if (cfg.analysis.duration_s) j["analysis"]["duration_s"] = *cfg.analysis.duration_s;
  j["local_comparison"] = {{"second_dcm_loss_db", cfg.local_comparison.second_dcm_loss_db}};
  return j;
}

}  // namespace qkdsim
