#pragma once

// Counter-based random streams (Philox4x32-10). Every draw is a pure function
// of (seed, stream, index), so simulation output is independent of how work
// is split across threads: each logical stream is consumed by exactly one
// generator object, and generators never share state.

#include <array>
#include <cstdint>

namespace qkdsim {

// One Philox4x32-10 block: 128-bit counter, 64-bit key, four 32-bit outputs.
std::array<std::uint32_t, 4> philox4x32(const std::array<std::uint32_t, 4>& counter,
                                        const std::array<std::uint32_t, 2>& key);

// Sequential view of the stream (seed, stream_id). Draws consume counters
// 0,1,2,... within the stream; 2^64 blocks of 4 words each are available.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform in [0,1), 53-bit resolution.
  double next_double();

  // Standard normal via Box-Muller (one value per two uniform draws; the
  // second root is discarded to keep the draw count data-independent).
  double next_gaussian();

  // Gaussian with given mean and FWHM.
  double next_gaussian_fwhm(double mean, double fwhm);

  // Poisson-distributed count with the given mean. Product method for small
  // means, Hormann's PTRD transformed rejection for mean >= 10.
  std::uint64_t next_poisson(double mean);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;  // forces refill on first draw
};

}  // namespace qkdsim
