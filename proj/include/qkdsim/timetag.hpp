#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qkdsim {

enum class Party : std::uint8_t { A = 0, B = 1 };
enum class Basis : std::uint8_t { HV = 0, DA = 1 };

const char* to_string(Party p);
const char* to_string(Basis b);

// One detection event. Timestamps are integer picoseconds from run start;
// outcome 0 encodes H (HV basis) or D (DA basis), outcome 1 encodes V or A.
struct TimeTag {
  std::int64_t timestamp_ps = 0;
  Party party = Party::A;
  Basis basis = Basis::HV;
  std::uint8_t outcome = 0;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// Canonical ordering for tag streams: by timestamp, ties by basis then
// outcome so that equal-time tags serialize identically on every run.
inline bool tag_time_order(const TimeTag& a, const TimeTag& b) {
  if (a.timestamp_ps != b.timestamp_ps) return a.timestamp_ps < b.timestamp_ps;
  if (a.basis != b.basis) return a.basis < b.basis;
  return a.outcome < b.outcome;
}

using TagStream = std::vector<TimeTag>;

}  // namespace qkdsim
