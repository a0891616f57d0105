// qkdsim command-line front end: deterministic batch pipelines around the
// simulator, the coincidence analysis, and the closed-form link model.
//
// Exit codes: 0 success, 2 configuration error, 3 input-data error,
// 4 numerical failure (fit or optimizer found nothing usable).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qkdsim/analysis.hpp"
#include "qkdsim/config.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/model.hpp"
#include "qkdsim/montecarlo.hpp"
#include "qkdsim/physics.hpp"
#include "qkdsim/rng.hpp"
#include "qkdsim/tagio.hpp"

namespace {

using nlohmann::json;
using namespace qkdsim;

constexpr const char* kVersion = "1.0.0";

// Stream id offset reserving a substream family for per-sweep-row seeds.
constexpr std::uint64_t kSweepSeedStream = 0xD15C0;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InputError("short write: " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json point_json(const ModelPoint& p) {
  return {{"sigma_d_ps", p.sigma_d_ps},     {"delta_t_ps", p.delta_t_ps},
          {"t_cc_ps", p.t_cc_ps},           {"cc_tot_cps", p.cc_tot_cps},
          {"qber", p.qber},                 {"r_s_raw_bits_per_s", p.r_s_raw},
          {"r_s_bits_per_s", p.r_s}};
}

json base_manifest(const char* command, const Config& cfg) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config"] = config_to_json(cfg);
  return m;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int threads = 0;
  bool error_json = false;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config_path, "Scenario configuration file (JSON)")
      ->required();
  sub->add_option("--out", o.out_dir, "Output directory (created if missing)")->required();
  sub->add_option("--threads", o.threads,
                  "Worker threads (0 = all cores; never affects results)");
  sub->add_flag("--error-json", o.error_json, "Report errors as JSON on stderr");
}

std::filesystem::path prepare_out(const CommonOpts& o) {
  std::filesystem::path dir(o.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const CommonOpts& common, std::optional<std::uint64_t> seed, bool gzip) {
  Config cfg = load_config(common.config_path);
  if (!cfg.scenario || !cfg.run) {
    throw ConfigError("simulate needs \"scenario\" and \"run\" sections");
  }
  if (seed) cfg.run->seed = *seed;
  const auto dir = prepare_out(common);

  SimulateOptions opts;
  opts.threads = common.threads;
  SimulationResult result = simulate(*cfg.scenario, *cfg.run, opts);

  const std::string ext = gzip ? ".csv.gz" : ".csv";
  write_tags(result.tags_a, (dir / ("tags_a" + ext)).string());
  write_tags(result.tags_b, (dir / ("tags_b" + ext)).string());

  json m = base_manifest("simulate", cfg);
  m["seed"] = cfg.run->seed;
  m["counts"] = {{"joint_pairs", result.counts.joint_pairs},
                 {"only_a", result.counts.only_a},
                 {"only_b", result.counts.only_b},
                 {"dark_a", result.counts.dark_a},
                 {"dark_b", result.counts.dark_b},
                 {"tags_written_a", result.tags_a.size()},
                 {"tags_written_b", result.tags_b.size()}};
  m["outputs"] = {"tags_a" + ext, "tags_b" + ext};
  write_json(dir / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

const char* fit_status(FitError::Kind k) {
  switch (k) {
    case FitError::Kind::NoPeak: return "no_peak";
    case FitError::Kind::NotConverged: return "not_converged";
    case FitError::Kind::Degenerate: return "degenerate";
  }
  return "unknown";
}

int cmd_analyze(const CommonOpts& common, const std::string& tags_a_path,
                const std::string& tags_b_path) {
  Config cfg = load_config(common.config_path);
  const auto dir = prepare_out(common);

  TagStream a, b;
  std::string source_a, source_b;
  if (!tags_a_path.empty() != !tags_b_path.empty()) {
    throw ConfigError("analyze needs both --tags-a and --tags-b, or neither");
  }
  if (!tags_a_path.empty()) {
    a = read_tags(tags_a_path);
    b = read_tags(tags_b_path);
    source_a = std::filesystem::path(tags_a_path).filename().string();
    source_b = std::filesystem::path(tags_b_path).filename().string();
  } else {
    if (!cfg.scenario || !cfg.run) {
      throw ConfigError(
          "analyze needs tag files (--tags-a/--tags-b) or \"scenario\" and \"run\" "
          "sections to generate them");
    }
    SimulateOptions opts;
    opts.threads = common.threads;
    SimulationResult result = simulate(*cfg.scenario, *cfg.run, opts);
    a = std::move(result.tags_a);
    b = std::move(result.tags_b);
    source_a = source_b = "generated";
  }

  // Rate normalization: explicit analysis duration wins, then the run
  // section, then the tag extent rounded up to a whole second.
  double duration = 0.0;
  std::string duration_source;
  if (cfg.analysis.duration_s) {
    duration = *cfg.analysis.duration_s;
    duration_source = "analysis";
  } else if (cfg.run) {
    duration = cfg.run->duration_s;
    duration_source = "run";
  } else {
    std::int64_t max_ts = 0;
    for (const auto& t : a) max_ts = std::max(max_ts, t.timestamp_ps);
    for (const auto& t : b) max_ts = std::max(max_ts, t.timestamp_ps);
    duration = std::max(1.0, std::ceil(static_cast<double>(max_ts + 1) / 1e12));
    duration_source = "inferred";
  }
  if (duration <= 0) throw ConfigError("analyze: duration must be positive");

  const WindowOptimizerOptions& opt = cfg.analysis.options;
  Histogram hist = cross_correlate(a, b, duration, opt.bin_width_ps, opt.center_ps,
                                   opt.half_range_ps);
  std::string csv = "delay_ps,counts,counts_per_s\n";
  for (std::size_t k = 0; k < hist.counts.size(); ++k) {
    csv += fmt(hist.bin_center(k));
    csv += ',';
    csv += std::to_string(hist.counts[k]);
    csv += ',';
    csv += fmt(duration > 0 ? static_cast<double>(hist.counts[k]) / duration : 0.0);
    csv += '\n';
  }
  write_text(dir / "histogram.csv", csv);

  json fit_j, key_j;
  try {
    WindowReport report = optimize_window(a, b, duration, opt);
    fit_j = {{"status", "ok"},
             {"amplitude", report.fit.amplitude},
             {"center_ps", report.fit.center_ps},
             {"fwhm_ps", report.fit.fwhm_ps},
             {"floor", report.fit.floor},
             {"rms_residual", report.fit.rms_residual},
             {"iterations", report.fit.iterations}};
    key_j = {{"t_cc_ps", report.t_cc_ps},
             {"delay_used_ps", report.delay_ps},
             {"cc_total_rate_cps", report.cc_rate_cps},
             {"qber", report.qber},
             {"qber_hv", report.qber_hv ? json(*report.qber_hv) : json(nullptr)},
             {"qber_da", report.qber_da ? json(*report.qber_da) : json(nullptr)},
             {"r_s_raw_bits_per_s", report.r_s_raw},
             {"secure_key_rate_bits_per_s", report.r_s},
             {"no_key", report.no_key},
             {"error_correction_efficiency", opt.error_correction_efficiency},
             {"duration_s", duration}};
  } catch (const FitError& e) {
    if (e.kind() != FitError::Kind::NoPeak) throw;
    // No significant correlation peak is a legitimate measurement outcome
    // (dark-count-dominated data); report it rather than failing the run.
    fit_j = {{"status", fit_status(e.kind())}, {"message", e.what()}};
    key_j = {{"t_cc_ps", 0},
             {"delay_used_ps", 0},
             {"cc_total_rate_cps", 0.0},
             {"qber", nullptr},
             {"qber_hv", nullptr},
             {"qber_da", nullptr},
             {"r_s_raw_bits_per_s", 0.0},
             {"secure_key_rate_bits_per_s", 0.0},
             {"no_key", true},
             {"error_correction_efficiency", opt.error_correction_efficiency},
             {"duration_s", duration}};
  }
  write_json(dir / "fit.json", fit_j);
  write_json(dir / "keyrate.json", key_j);

  json m = base_manifest("analyze", cfg);
  m["inputs"] = {{"tags_a", source_a}, {"tags_b", source_b}};
  m["n_tags_a"] = a.size();
  m["n_tags_b"] = b.size();
  m["duration_s"] = duration;
  m["duration_source"] = duration_source;
  m["outputs"] = {"histogram.csv", "fit.json", "keyrate.json"};
  write_json(dir / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-dcm

struct SweepRow {
  double dcm = 0.0;
  double delta_t = 0.0;
  double t_cc = 0.0;
  double cc_tot = 0.0;
  double qber = 0.0;
  double r_s = 0.0;
  const char* source = "model";
};

DcmSweepSpec dcm_spec_from_config(const Config& cfg) {
  if (cfg.dcm_sweep) return *cfg.dcm_sweep;
  if (!cfg.scenario || !cfg.scenario->arm_a.compensator) {
    throw ConfigError(
        "sweep-dcm needs a \"dcm_sweep\" section or a scenario whose arm_a carries a "
        "compensator (its range defines the grid)");
  }
  const LinkScenario& s = *cfg.scenario;
  DcmSweepSpec spec;
  // The swept module replaces arm A's compensator, so the static dispersion
  // is both fibers plus whatever sits in arm B.
  spec.fiber_dispersion_ps_per_nm =
      arm_fiber_dispersion(s.arm_a) + arm_total_dispersion(s.arm_b);
  spec.spectral_width_nm = s.effective_width_nm();
  spec.min_ps_per_nm = s.arm_a.compensator->range_min_ps_per_nm;
  spec.max_ps_per_nm = s.arm_a.compensator->range_max_ps_per_nm;
  spec.step_ps_per_nm = s.arm_a.compensator->step_ps_per_nm;
  spec.validate();
  return spec;
}

int cmd_sweep_dcm(const CommonOpts& common, const std::string& mode,
                  const std::string& format, std::optional<std::uint64_t> seed) {
  Config cfg = load_config(common.config_path);
  const auto dir = prepare_out(common);
  const DcmSweepSpec spec = dcm_spec_from_config(cfg);
  const bool want_mc = mode == "mc" || mode == "both";
  const bool want_model = mode == "model" || mode == "both";

  std::vector<SweepRow> model_rows;
  if (want_model) {
    const ModelParams params = model_from_config(cfg);
    for (const auto& r : dcm_sweep(params, spec)) {
      model_rows.push_back({r.dcm_ps_per_nm, r.point.delta_t_ps, r.point.t_cc_ps,
                            r.point.cc_tot_cps, r.point.qber, r.point.r_s, "model"});
    }
  }

  std::vector<SweepRow> mc_rows;
  std::uint64_t seed_base = 0;
  if (want_mc) {
    if (!cfg.scenario || !cfg.run) {
      throw ConfigError("sweep-dcm mc mode needs \"scenario\" and \"run\" sections");
    }
    if (!cfg.scenario->arm_a.compensator) {
      throw ConfigError("sweep-dcm mc mode sweeps scenario.arm_a.compensator; none present");
    }
    seed_base = seed.value_or(cfg.run->seed);
    const auto n = static_cast<std::size_t>(
        std::llround((spec.max_ps_per_nm - spec.min_ps_per_nm) / spec.step_ps_per_nm)) + 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = spec.min_ps_per_nm + static_cast<double>(i) * spec.step_ps_per_nm;
      const double actual = d + spec.calibration_offset_ps_per_nm;
      LinkScenario sc = *cfg.scenario;
      Compensator& comp = *sc.arm_a.compensator;
      comp.dispersion_ps_per_nm = actual;
      comp.range_min_ps_per_nm = std::min(comp.range_min_ps_per_nm, actual);
      comp.range_max_ps_per_nm = std::max(comp.range_max_ps_per_nm, actual);
      SimulationRun run = *cfg.run;
      run.seed = RandomStream(seed_base, kSweepSeedStream + i).next_u64();
      SimulateOptions opts;
      opts.threads = common.threads;
      SimulationResult result = simulate(sc, run, opts);
      SweepRow row;
      row.dcm = d;
      row.source = "mc";
      try {
        WindowReport rep =
            optimize_window(result.tags_a, result.tags_b, run.duration_s, cfg.analysis.options);
        row.delta_t = rep.fit.fwhm_ps;
        row.t_cc = static_cast<double>(rep.t_cc_ps);
        row.cc_tot = rep.cc_rate_cps;
        row.qber = rep.qber;
        row.r_s = rep.r_s;
      } catch (const NumericalError&) {
        // No usable peak at this setting: report a keyless row instead of
        // aborting the sweep.
        row.qber = 0.5;
      }
      mc_rows.push_back(row);
    }
  }

  // One block per grid point; within a block mc precedes model.
  std::vector<SweepRow> rows;
  const std::size_t n_points = std::max(model_rows.size(), mc_rows.size());
  for (std::size_t i = 0; i < n_points; ++i) {
    if (i < mc_rows.size()) rows.push_back(mc_rows[i]);
    if (i < model_rows.size()) rows.push_back(model_rows[i]);
  }

  std::string filename;
  if (format == "csv") {
    std::string csv = "dcm_ps_per_nm,delta_t_ps,t_cc_ps,cc_tot_cps,qber,r_s_bits_per_s,source\n";
    for (const auto& r : rows) {
      csv += fmt(r.dcm) + ',' + fmt(r.delta_t) + ',' + fmt(r.t_cc) + ',' + fmt(r.cc_tot) +
             ',' + fmt(r.qber) + ',' + fmt(r.r_s) + ',' + r.source + '\n';
    }
    filename = "dcm_sweep.csv";
    write_text(dir / filename, csv);
  } else {
    json rows_j = json::array();
    for (const auto& r : rows) {
      rows_j.push_back({{"dcm_ps_per_nm", r.dcm},
                        {"delta_t_ps", r.delta_t},
                        {"t_cc_ps", r.t_cc},
                        {"cc_tot_cps", r.cc_tot},
                        {"qber", r.qber},
                        {"r_s_bits_per_s", r.r_s},
                        {"source", r.source}});
    }
    filename = "dcm_sweep.json";
    write_json(dir / filename, json{{"rows", rows_j}});
  }

  json m = base_manifest("sweep-dcm", cfg);
  m["mode"] = mode;
  m["sweep_spec"] = {{"fiber_dispersion_ps_per_nm", spec.fiber_dispersion_ps_per_nm},
                     {"spectral_width_nm", spec.spectral_width_nm},
                     {"min_ps_per_nm", spec.min_ps_per_nm},
                     {"max_ps_per_nm", spec.max_ps_per_nm},
                     {"step_ps_per_nm", spec.step_ps_per_nm},
                     {"calibration_offset_ps_per_nm", spec.calibration_offset_ps_per_nm}};
  if (want_mc) m["seed"] = seed_base;
  m["n_rows"] = rows.size();
  m["outputs"] = {filename};
  write_json(dir / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-distance

int cmd_sweep_distance(const CommonOpts& common, const std::string& format) {
  Config cfg = load_config(common.config_path);
  if (!cfg.distance_sweep) throw ConfigError("sweep-distance needs a \"distance_sweep\" section");
  const auto dir = prepare_out(common);
  const DistanceSweepSpec& spec = *cfg.distance_sweep;

  const std::vector<DistanceCurve> curves = distance_sweep(spec, common.threads);

  json summary_curves = json::array();
  std::vector<std::string> files;
  // Curves arrive per width as (compensated, uncompensated); each width gets
  // one row file holding both.
  for (std::size_t ci = 0; ci < curves.size(); ci += 2) {
    const double width = curves[ci].spectral_width_ghz;
    const std::string stem = "distance_sweep_" + fmt(width) + "ghz";
    std::string csv =
        "distance_km,compensated,brightness_cps,delta_t_ps,t_cc_ps,cc_tot_cps,qber,"
        "r_s_bits_per_s,source\n";
    json rows_j = json::array();
    for (std::size_t k = ci; k < ci + 2 && k < curves.size(); ++k) {
      const DistanceCurve& c = curves[k];
      for (const auto& r : c.rows) {
        if (format == "csv") {
          csv += fmt(r.distance_km) + ',' + (c.compensated ? "1" : "0") + ',' +
                 fmt(r.brightness_cps) + ',' + fmt(r.point.delta_t_ps) + ',' +
                 fmt(r.point.t_cc_ps) + ',' + fmt(r.point.cc_tot_cps) + ',' +
                 fmt(r.point.qber) + ',' + fmt(r.point.r_s) + ",model\n";
        } else {
          rows_j.push_back({{"distance_km", r.distance_km},
                            {"compensated", c.compensated},
                            {"brightness_cps", r.brightness_cps},
                            {"delta_t_ps", r.point.delta_t_ps},
                            {"t_cc_ps", r.point.t_cc_ps},
                            {"cc_tot_cps", r.point.cc_tot_cps},
                            {"qber", r.point.qber},
                            {"r_s_bits_per_s", r.point.r_s},
                            {"source", "model"}});
        }
      }
    }
    const std::string filename = stem + (format == "csv" ? ".csv" : ".json");
    if (format == "csv") {
      write_text(dir / filename, csv);
    } else {
      write_json(dir / filename, json{{"rows", rows_j}});
    }
    files.push_back(filename);

    for (std::size_t k = ci; k < ci + 2 && k < curves.size(); ++k) {
      const DistanceCurve& c = curves[k];
      json entry = {{"spectral_width_ghz", c.spectral_width_ghz},
                    {"compensated", c.compensated},
                    {"n_rows", c.rows.size()},
                    {"file", filename}};
      try {
        entry["max_distance_km"] = max_distance(
            distance_evaluator(spec, c.spectral_width_ghz, c.compensated), spec.start_km,
            spec.step_km, spec.max_km, spec.min_key_rate);
        entry["no_key"] = false;
      } catch (const NoKeyError&) {
        entry["max_distance_km"] = nullptr;
        entry["no_key"] = true;
      }
      json points = json::array();
      for (const auto& r : c.rows) {
        points.push_back({{"distance_km", r.distance_km}, {"brightness_cps", r.brightness_cps}});
      }
      entry["points"] = points;
      summary_curves.push_back(entry);
    }
  }
  write_json(dir / "summary.json", json{{"min_key_rate_bits_per_s", spec.min_key_rate},
                                        {"curves", summary_curves}});

  json m = base_manifest("sweep-distance", cfg);
  files.push_back("summary.json");
  m["outputs"] = files;
  write_json(dir / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------
// compare-local

int cmd_compare_local(const CommonOpts& common) {
  Config cfg = load_config(common.config_path);
  const auto dir = prepare_out(common);
  const ModelParams params = model_from_config(cfg);
  const double loss = cfg.local_comparison.second_dcm_loss_db;
  const LocalComparison cmp = local_compensation_comparison(params, loss);

  json j = {{"nonlocal_rs_bits_per_s", cmp.nonlocal.r_s},
            {"local_rs_bits_per_s", cmp.local.r_s},
            {"ratio", cmp.local.r_s > 0 ? json(cmp.nonlocal.r_s / cmp.local.r_s)
                                        : json(nullptr)},
            {"second_dcm_loss_db", loss},
            {"details", {{"nonlocal", point_json(cmp.nonlocal)},
                         {"local", point_json(cmp.local)}}}};
  write_json(dir / "comparison.json", j);

  json m = base_manifest("compare-local", cfg);
  m["outputs"] = {"comparison.json"};
  write_json(dir / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------

int report_error(const CommonOpts& common, const char* category, int code,
                 const std::exception& e) {
  if (common.error_json) {
    json j = {{"error", {{"category", category}, {"message", e.what()}, {"exit_code", code}}}};
    std::cerr << j.dump() << '\n';
  } else {
    std::cerr << "error: " << e.what() << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entangled-pair time-tag simulator and key-rate analysis for "
               "dispersion-compensated fiber links"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOpts common;
  std::optional<std::uint64_t> seed;
  bool gzip = false;
  std::string tags_a, tags_b;
  std::string mode = "model";
  std::string format = "csv";

  CLI::App* sim = app.add_subcommand("simulate", "Generate time-tag streams for a scenario");
  add_common(sim, common);
  sim->add_option("--seed", seed, "Override the run seed");
  sim->add_flag("--gzip", gzip, "Write gzip-compressed tag files");

  CLI::App* ana = app.add_subcommand(
      "analyze", "Correlate two tag streams: histogram, peak fit, key rate");
  add_common(ana, common);
  ana->add_option("--tags-a", tags_a, "Tag file for arm A (default: simulate from config)");
  ana->add_option("--tags-b", tags_b, "Tag file for arm B");

  CLI::App* dcm = app.add_subcommand(
      "sweep-dcm", "Key rate as a function of the compensator setting");
  add_common(dcm, common);
  dcm->add_option("--mode", mode, "Rows to produce")
      ->check(CLI::IsMember({"mc", "model", "both"}));
  dcm->add_option("--format", format, "Row file format")
      ->check(CLI::IsMember({"csv", "json"}));
  dcm->add_option("--seed", seed, "Override the run seed (mc rows)");

  CLI::App* dist = app.add_subcommand(
      "sweep-distance", "Optimized key rate over link distance per spectral width");
  add_common(dist, common);
  dist->add_option("--format", format, "Row file format")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI::App* loc = app.add_subcommand(
      "compare-local", "Nonlocal vs local dispersion compensation at zero residual");
  add_common(loc, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(common, seed, gzip);
    if (ana->parsed()) return cmd_analyze(common, tags_a, tags_b);
    if (dcm->parsed()) return cmd_sweep_dcm(common, mode, format, seed);
    if (dist->parsed()) return cmd_sweep_distance(common, format);
    if (loc->parsed()) return cmd_compare_local(common);
  } catch (const ConfigError& e) {
    return report_error(common, "config", 2, e);
  } catch (const std::domain_error& e) {
    return report_error(common, "config", 2, e);
  } catch (const InputError& e) {
    return report_error(common, "input", 3, e);
  } catch (const NumericalError& e) {
    return report_error(common, "numerical", 4, e);
  } catch (const std::exception& e) {
    return report_error(common, "internal", 1, e);
  }
  return 0;
}
