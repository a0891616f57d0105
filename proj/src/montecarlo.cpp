#include "qkdsim/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "qkdsim/errors.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

namespace {

// Chunks are the unit of parallelism; every chunk owns private random
// substreams, so results do not depend on the thread count.
constexpr std::int64_t kChunkPs = 10'000'000'000;  // 10 ms
constexpr std::uint64_t kStreamsPerChunk = 8;

enum StreamCategory : std::uint64_t {
  kCountsStream = 0,  // the three pair-category Poisson draws
  kJointStream = 1,
  kOnlyAStream = 2,
  kOnlyBStream = 3,
  kDarkAStream = 4,
  kDarkBStream = 5,
};

// Measurement-settings schedule with integer-picosecond block boundaries,
// cycled over the run.
class SettingsSchedule {
 public:
  explicit SettingsSchedule(const std::vector<SettingsBlock>& blocks) {
    for (const auto& b : blocks) {
      const std::int64_t d = std::llround(b.duration_s * 1e12);
      if (d <= 0) throw std::domain_error("settings block duration must be positive");
      cycle_ps_ += d;
      ends_.push_back(cycle_ps_);
      bases_.emplace_back(b.basis_a, b.basis_b);
    }
    if (ends_.empty()) throw std::domain_error("fixed-settings mode needs at least one block");
  }

  std::pair<Basis, Basis> at(std::int64_t t_ps) const {
    const std::int64_t rem = t_ps % cycle_ps_;
    const auto it = std::upper_bound(ends_.begin(), ends_.end(), rem);
    return bases_[static_cast<std::size_t>(it - ends_.begin())];
  }

 private:
  std::int64_t cycle_ps_ = 0;
  std::vector<std::int64_t> ends_;
  std::vector<std::pair<Basis, Basis>> bases_;
};

struct Derived {
  std::int64_t duration_ps = 0;
  double rate_joint = 0.0;
  double rate_only_a = 0.0;
  double rate_only_b = 0.0;
  double dark_a = 0.0;
  double dark_b = 0.0;
  double disp_a = 0.0;  // total arm dispersion, ps/nm
  double disp_b = 0.0;
  double delay_a = 0.0;
  double delay_b = 0.0;
  double jit_a = 0.0;  // per-detector FWHM, ps
  double jit_b = 0.0;
  double width_nm = 0.0;
  SpectrumShape shape = SpectrumShape::Gaussian;
  double coherence = 0.0;
  double optical_error = 0.0;
  bool random_basis = false;
};

struct ChunkOut {
  TagStream a;
  TagStream b;
  SimulationCounts counts;
};

// Spectral detuning of the A photon relative to band center; the B photon
// carries the opposite detuning (energy conservation of the pair).
double draw_detuning(RandomStream& rs, const Derived& d) {
  if (d.shape == SpectrumShape::Tophat) {
    return (rs.next_double() - 0.5) * d.width_nm;
  }
  return rs.next_gaussian_fwhm(0.0, d.width_nm);
}

Basis draw_basis(RandomStream& rs) {
  return rs.next_double() < 0.5 ? Basis::HV : Basis::DA;
}

std::uint8_t draw_bit(RandomStream& rs) { return rs.next_double() < 0.5 ? 1 : 0; }

ChunkOut generate_chunk(const Derived& d, const SettingsSchedule* sched, std::uint64_t seed,
                        std::uint64_t chunk) {
  ChunkOut out;
  const std::int64_t c0 = static_cast<std::int64_t>(chunk) * kChunkPs;
  const std::int64_t c1 = std::min(c0 + kChunkPs, d.duration_ps);
  const double span_ps = static_cast<double>(c1 - c0);
  const double span_s = span_ps * 1e-12;
  const std::uint64_t base = chunk * kStreamsPerChunk;

  RandomStream counts_rs(seed, base + kCountsStream);
  // Splitting a Poisson pair process by detection pattern yields independent
  // Poisson counts per category, so the three draws below are equivalent to
  // thinning each generated pair.
  const std::uint64_t n_joint = counts_rs.next_poisson(d.rate_joint * span_s);
  const std::uint64_t n_only_a = counts_rs.next_poisson(d.rate_only_a * span_s);
  const std::uint64_t n_only_b = counts_rs.next_poisson(d.rate_only_b * span_s);
  out.counts.joint_pairs = n_joint;
  out.counts.only_a = n_only_a;
  out.counts.only_b = n_only_b;

  {
    RandomStream rs(seed, base + kJointStream);
    for (std::uint64_t i = 0; i < n_joint; ++i) {
      const double t = static_cast<double>(c0) + rs.next_double() * span_ps;
      const double dl = draw_detuning(rs, d);
      const double r = d.coherence > 0 ? rs.next_gaussian_fwhm(0.0, d.coherence) : 0.0;
      const double ja = rs.next_gaussian_fwhm(0.0, d.jit_a);
      const double jb = rs.next_gaussian_fwhm(0.0, d.jit_b);
      const double ta = t + d.delay_a + dl * d.disp_a + ja + r / 2.0;
      const double tb = t + d.delay_b - dl * d.disp_b + jb - r / 2.0;
      const std::int64_t tsa = std::llround(ta);
      const std::int64_t tsb = std::llround(tb);

      Basis basis_a, basis_b;
      if (d.random_basis) {
        basis_a = draw_basis(rs);
        basis_b = draw_basis(rs);
      } else {
        // Each analyzer applies the setting active at its own detection time.
        basis_a = tsa >= 0 && tsa < d.duration_ps ? sched->at(tsa).first : Basis::HV;
        basis_b = tsb >= 0 && tsb < d.duration_ps ? sched->at(tsb).second : Basis::HV;
      }
      const std::uint8_t oa = draw_bit(rs);
      const double u = rs.next_double();
      std::uint8_t ob;
      if (basis_a == basis_b) {
        // Correlated outcomes up to the intrinsic optical error.
        ob = (u < d.optical_error) ? static_cast<std::uint8_t>(oa ^ 1) : oa;
      } else {
        ob = u < 0.5 ? 1 : 0;
      }
      if (tsa >= 0 && tsa < d.duration_ps) out.a.push_back(TimeTag{tsa, Party::A, basis_a, oa});
      if (tsb >= 0 && tsb < d.duration_ps) out.b.push_back(TimeTag{tsb, Party::B, basis_b, ob});
    }
  }

  const auto run_singles = [&](StreamCategory cat, std::uint64_t n, Party party) {
    RandomStream rs(seed, base + cat);
    const bool is_a = party == Party::A;
    TagStream& dst = is_a ? out.a : out.b;
    for (std::uint64_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(c0) + rs.next_double() * span_ps;
      const double dl = draw_detuning(rs, d);
      const double r = d.coherence > 0 ? rs.next_gaussian_fwhm(0.0, d.coherence) : 0.0;
      const double j = rs.next_gaussian_fwhm(0.0, is_a ? d.jit_a : d.jit_b);
      const double tt = is_a ? t + d.delay_a + dl * d.disp_a + j + r / 2.0
                             : t + d.delay_b - dl * d.disp_b + j - r / 2.0;
      const std::int64_t ts = std::llround(tt);
      Basis basis = Basis::HV;
      if (d.random_basis) {
        basis = draw_basis(rs);
      } else if (ts >= 0 && ts < d.duration_ps) {
        const auto [ba, bb] = sched->at(ts);
        basis = is_a ? ba : bb;
      }
      const std::uint8_t o = draw_bit(rs);
      if (ts >= 0 && ts < d.duration_ps) dst.push_back(TimeTag{ts, party, basis, o});
    }
  };
  run_singles(kOnlyAStream, n_only_a, Party::A);
  run_singles(kOnlyBStream, n_only_b, Party::B);

  const auto run_darks = [&](StreamCategory cat, double rate, Party party) -> std::uint64_t {
    RandomStream rs(seed, base + cat);
    const std::uint64_t n = rs.next_poisson(rate * span_s);
    const bool is_a = party == Party::A;
    TagStream& dst = is_a ? out.a : out.b;
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::int64_t ts =
          std::llround(static_cast<double>(c0) + rs.next_double() * span_ps);
      Basis basis = Basis::HV;
      if (d.random_basis) {
        basis = draw_basis(rs);
      } else if (ts >= 0 && ts < d.duration_ps) {
        // A dark click fires behind whichever analyzer setting is active.
        const auto [ba, bb] = sched->at(ts);
        basis = is_a ? ba : bb;
      }
      const std::uint8_t o = draw_bit(rs);
      if (ts >= 0 && ts < d.duration_ps) dst.push_back(TimeTag{ts, party, basis, o});
    }
    return n;
  };
  out.counts.dark_a = run_darks(kDarkAStream, d.dark_a, Party::A);
  out.counts.dark_b = run_darks(kDarkBStream, d.dark_b, Party::B);

  return out;
}

}  // namespace

void SimulationRun::validate() const {
  if (!(duration_s >= 0) || !std::isfinite(duration_s)) {
    throw std::domain_error("run: duration must be finite and non-negative");
  }
  // A zero-duration run is a degenerate but legal request: it yields empty
  // streams, so the settings list is not consulted at all.
  if (basis_mode == BasisMode::FixedSettings && duration_s > 0) {
    if (settings.empty()) {
      throw std::domain_error("run: fixed-settings mode needs a non-empty settings list");
    }
    for (const auto& b : settings) {
      if (!(b.duration_s > 0) || !std::isfinite(b.duration_s)) {
        throw std::domain_error("run: settings block duration must be positive");
      }
    }
  }
}

std::vector<SettingsBlock> default_settings(double duration_s) {
  return {SettingsBlock{Basis::HV, Basis::HV, duration_s / 2},
          SettingsBlock{Basis::DA, Basis::DA, duration_s / 2}};
}

SimulationResult simulate(const LinkScenario& scenario, const SimulationRun& run,
                          const SimulateOptions& options) {
  scenario.validate();
  run.validate();

  Derived d;
  d.duration_ps = std::llround(run.duration_s * 1e12);
  const double eta_a = db_to_transmission(arm_loss_db(scenario.arm_a));
  const double eta_b = db_to_transmission(arm_loss_db(scenario.arm_b));
  const double b_cps = scenario.brightness_cps;
  d.rate_joint = b_cps * eta_a * eta_b;
  d.rate_only_a = b_cps * eta_a * (1.0 - eta_b);
  d.rate_only_b = b_cps * eta_b * (1.0 - eta_a);
  d.dark_a = scenario.arm_a.detector.dark_count_cps;
  d.dark_b = scenario.arm_b.detector.dark_count_cps;
  d.disp_a = arm_total_dispersion(scenario.arm_a);
  d.disp_b = arm_total_dispersion(scenario.arm_b);
  d.delay_a = scenario.arm_a.propagation_delay_ps;
  d.delay_b = scenario.arm_b.propagation_delay_ps;
  d.jit_a = scenario.arm_a.detector.jitter_fwhm_ps;
  d.jit_b = scenario.arm_b.detector.jitter_fwhm_ps;
  d.width_nm = scenario.effective_width_nm();
  d.shape = scenario.spectrum.shape;
  d.coherence = scenario.coherence_fwhm();
  d.optical_error = scenario.optical_error;
  d.random_basis = run.basis_mode == BasisMode::RandomBasis;

  const double expected_tags =
      (b_cps * (eta_a + eta_b) + d.dark_a + d.dark_b) * run.duration_s;
  if (expected_tags > static_cast<double>(options.max_expected_tags)) {
    throw CapacityError("simulate: expected tag count " + std::to_string(expected_tags) +
                        " exceeds the cap of " + std::to_string(options.max_expected_tags));
  }

  SimulationResult result;
  if (d.duration_ps <= 0) return result;

  std::optional<SettingsSchedule> sched;
  if (!d.random_basis) sched.emplace(run.settings);

  const std::uint64_t n_chunks =
      static_cast<std::uint64_t>((d.duration_ps + kChunkPs - 1) / kChunkPs);
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned n_threads = static_cast<unsigned>(std::clamp<std::uint64_t>(
      options.threads > 0 ? static_cast<std::uint64_t>(options.threads) : hw, 1, n_chunks));

  std::vector<ChunkOut> chunks(n_chunks);
  const SettingsSchedule* sp = sched ? &*sched : nullptr;
  if (n_threads <= 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) {
      chunks[c] = generate_chunk(d, sp, run.seed, c);
    }
  } else {
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back([&]() {
        for (;;) {
          const std::uint64_t c = next.fetch_add(1);
          if (c >= n_chunks) return;
          chunks[c] = generate_chunk(d, sp, run.seed, c);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::size_t na = 0, nb = 0;
  for (const auto& c : chunks) {
    na += c.a.size();
    nb += c.b.size();
  }
  result.tags_a.reserve(na);
  result.tags_b.reserve(nb);
  for (const auto& c : chunks) {
    result.tags_a.insert(result.tags_a.end(), c.a.begin(), c.a.end());
    result.tags_b.insert(result.tags_b.end(), c.b.begin(), c.b.end());
    result.counts.joint_pairs += c.counts.joint_pairs;
    result.counts.only_a += c.counts.only_a;
    result.counts.only_b += c.counts.only_b;
    result.counts.dark_a += c.counts.dark_a;
    result.counts.dark_b += c.counts.dark_b;
  }
  // Dispersion, jitter and delays can push a tag into a neighboring chunk's
  // range, so global sorting (not per-chunk) restores time order.
  std::sort(result.tags_a.begin(), result.tags_a.end(), tag_time_order);
  std::sort(result.tags_b.begin(), result.tags_b.end(), tag_time_order);
  return result;
}

}  // namespace qkdsim
